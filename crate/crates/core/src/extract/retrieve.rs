//! Chunk ranking for the retrieval step of the cheap pipeline.

use std::collections::BTreeSet;

use super::chunk::CardChunk;
use crate::strategy::StrategyRegistry;

pub const DEFAULT_SCORER: &str = "term-overlap";

pub trait Scorer: Send + Sync {
    /// Similarity of `chunk` to `query`; larger is more relevant.
    fn score(&self, query: &str, chunk: &CardChunk) -> f64;
}

fn terms(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Share of distinct query terms found in the chunk text or its headers.
#[derive(Debug, Clone, Copy, Default)]
pub struct TermOverlap;

impl Scorer for TermOverlap {
    fn score(&self, query: &str, chunk: &CardChunk) -> f64 {
        let q = terms(query);
        if q.is_empty() {
            return 0.0;
        }
        let mut c = terms(&chunk.text);
        for h in &chunk.header_path {
            c.extend(terms(h));
        }
        q.intersection(&c).count() as f64 / q.len() as f64
    }
}

pub fn scorers() -> StrategyRegistry<dyn Scorer> {
    let mut reg: StrategyRegistry<dyn Scorer> = StrategyRegistry::new("retrieval scorer");
    reg.register(DEFAULT_SCORER, Box::new(TermOverlap));
    reg
}

/// Indices of the `k` best chunks, best first; ties keep document order.
pub fn retrieve(query: &str, chunks: &[CardChunk], k: usize, scorer: &dyn Scorer) -> Vec<usize> {
    let mut ranked: Vec<(f64, usize)> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| (scorer.score(query, c), i))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k.max(1)).map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::chunk::split_markdown;

    #[test]
    fn license_query_finds_license_section() {
        let chunks = split_markdown(
            "## Training\nTrained for 3 epochs on 8 GPUs.\n## License\nReleased under the MIT terms.\n",
            4096,
        );
        assert_eq!(retrieve("license", &chunks, 1, &TermOverlap), vec![1]);
    }

    #[test]
    fn large_k_returns_all_in_rank_order() {
        let chunks = split_markdown("## A\nalpha\n## B\nbeta gamma\n## C\ngamma\n", 4096);
        assert_eq!(retrieve("beta gamma", &chunks, 10, &TermOverlap), vec![1, 2, 0]);
    }

    #[test]
    fn identical_chunks_keep_document_order() {
        let chunks = split_markdown("## X\nsame text\n## X\nsame text\n## X\nsame text\n", 4096);
        assert_eq!(retrieve("same", &chunks, 3, &TermOverlap), vec![0, 1, 2]);
    }

    #[test]
    fn registry_has_default() {
        assert!(scorers().get(DEFAULT_SCORER).is_ok());
        assert!(scorers().get("embedding").is_err());
    }
}
