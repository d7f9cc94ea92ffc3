//! Header-aware markdown chunking and the token estimator.

use serde::Serialize;

/// Smallest accepted chunk budget; smaller requests are raised to this.
pub const MIN_CHUNK_TOKENS: usize = 64;

/// `ceil(words * 4 / 3)`, an approximation of sub-word tokenizers.
pub fn estimate_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words * 4).div_ceil(3)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CardChunk {
    pub text: String,
    pub header_path: Vec<String>,
    pub token_estimate: usize,
}

fn header(line: &str) -> Option<(usize, String)> {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let level = trimmed.chars().take_while(|&c| c == '#').count();
    if !(1..=6).contains(&level) {
        return None;
    }
    let rest = &trimmed[level..];
    if !(rest.is_empty() || rest.starts_with([' ', '\t', '\n'])) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim();
    Some((level, title.to_string()))
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

/// Lines with their terminators kept, so that joining them is lossless.
fn lines_inclusive(text: &str) -> impl Iterator<Item = &str> {
    text.split_inclusive('\n')
}

struct Section {
    text: String,
    path: Vec<String>,
}

fn sections(text: &str) -> Vec<Section> {
    let mut out = Vec::new();
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut current = Section {
        text: String::new(),
        path: Vec::new(),
    };
    let mut in_fence = false;
    for line in lines_inclusive(text) {
        if is_fence(line) {
            in_fence = !in_fence;
        }
        let heading = if in_fence { None } else { header(line) };
        if let Some((level, title)) = heading {
            if !current.text.is_empty() {
                out.push(current);
            }
            stack.retain(|(l, _)| *l < level);
            stack.push((level, title));
            current = Section {
                text: String::new(),
                path: stack.iter().map(|(_, t)| t.clone()).collect(),
            };
        }
        current.text.push_str(line);
    }
    if !current.text.is_empty() {
        out.push(current);
    }
    out
}

/// Paragraphs, each carrying the blank lines that follow it.
fn paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_blank = false;
    let mut offset = 0;
    for line in lines_inclusive(text) {
        let blank = line.trim().is_empty();
        if !blank && prev_blank && offset > start {
            out.push(&text[start..offset]);
            start = offset;
        }
        prev_blank = blank;
        offset += line.len();
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Words, each carrying its trailing whitespace; leading whitespace sticks
/// to the first word.
fn words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_space = false;
    for (i, c) in text.char_indices() {
        let space = c.is_whitespace();
        if !space && in_space && text[start..i].split_whitespace().next().is_some() {
            out.push(&text[start..i]);
            start = i;
        }
        in_space = space;
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn atoms<'a>(text: &'a str, max: usize, out: &mut Vec<&'a str>) {
    for para in paragraphs(text) {
        if estimate_tokens(para) <= max {
            out.push(para);
            continue;
        }
        for line in lines_inclusive(para) {
            if estimate_tokens(line) <= max {
                out.push(line);
            } else {
                out.extend(words(line));
            }
        }
    }
}

/// Splits at headers first, then paragraphs, lines and words, packing pieces
/// greedily so that every chunk stays within `max_tokens`. Concatenating the
/// chunk texts gives back the card with `\r\n` normalized to `\n`.
pub fn split_markdown(card: &str, max_tokens: usize) -> Vec<CardChunk> {
    let max = max_tokens.max(MIN_CHUNK_TOKENS);
    let text = card.replace("\r\n", "\n");
    let mut chunks = Vec::new();
    for section in sections(&text) {
        let mut push = |text: String| {
            chunks.push(CardChunk {
                token_estimate: estimate_tokens(&text),
                text,
                header_path: section.path.clone(),
            })
        };
        if estimate_tokens(&section.text) <= max {
            push(section.text.clone());
            continue;
        }
        let mut pieces = Vec::new();
        atoms(&section.text, max, &mut pieces);
        let mut buf = String::new();
        for piece in pieces {
            if !buf.is_empty() && estimate_tokens(&buf) + estimate_tokens(piece) > max {
                push(std::mem::take(&mut buf));
            }
            buf.push_str(piece);
        }
        if !buf.is_empty() {
            push(buf);
        }
    }
    chunks
}
