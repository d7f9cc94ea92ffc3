//! Problem-domain taxonomy and the tag → domain mapping table.
//!
//! Registry tags are matched case-insensitively after trimming. The first tag
//! that appears in [`TASK_TAGS`] decides both the task and the domain; failing
//! that, a bare domain tag (see [`DOMAIN_TAGS`]) decides the domain only.
//! PyTorch Hub labels such as research models, CUDA or quantized models map to
//! [`Domain::Other`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "NLP")]
    Nlp,
    #[serde(rename = "CV")]
    Cv,
    Audio,
    Multimodal,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Nlp,
        Domain::Cv,
        Domain::Audio,
        Domain::Multimodal,
        Domain::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Nlp => "NLP",
            Domain::Cv => "CV",
            Domain::Audio => "Audio",
            Domain::Multimodal => "Multimodal",
            Domain::Other => "Other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    /// Accepts the canonical names and common long forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        match key.as_str() {
            "nlp" | "natural language processing" | "text" => Ok(Domain::Nlp),
            "cv" | "computer vision" | "vision" => Ok(Domain::Cv),
            "audio" | "speech" => Ok(Domain::Audio),
            "multimodal" | "multi modal" => Ok(Domain::Multimodal),
            "other" => Ok(Domain::Other),
            _ => Err(format!(
                "unknown domain {s:?} (expected one of NLP, CV, Audio, Multimodal, Other)"
            )),
        }
    }
}

/// Task tag → domain.
pub const TASK_TAGS: &[(&str, Domain)] = &[
    // NLP
    ("text-classification", Domain::Nlp),
    ("token-classification", Domain::Nlp),
    ("fill-mask", Domain::Nlp),
    ("question-answering", Domain::Nlp),
    ("table-question-answering", Domain::Nlp),
    ("zero-shot-classification", Domain::Nlp),
    ("summarization", Domain::Nlp),
    ("translation", Domain::Nlp),
    ("text-generation", Domain::Nlp),
    ("text2text-generation", Domain::Nlp),
    ("conversational", Domain::Nlp),
    ("sentence-similarity", Domain::Nlp),
    ("feature-extraction", Domain::Nlp),
    // CV
    ("image-classification", Domain::Cv),
    ("object-detection", Domain::Cv),
    ("image-segmentation", Domain::Cv),
    ("depth-estimation", Domain::Cv),
    ("image-to-image", Domain::Cv),
    ("unconditional-image-generation", Domain::Cv),
    ("video-classification", Domain::Cv),
    ("zero-shot-image-classification", Domain::Cv),
    ("zero-shot-object-detection", Domain::Cv),
    ("mask-generation", Domain::Cv),
    ("image-feature-extraction", Domain::Cv),
    // Audio
    ("automatic-speech-recognition", Domain::Audio),
    ("audio-classification", Domain::Audio),
    ("text-to-speech", Domain::Audio),
    ("text-to-audio", Domain::Audio),
    ("audio-to-audio", Domain::Audio),
    ("voice-activity-detection", Domain::Audio),
    // Multimodal
    ("text-to-image", Domain::Multimodal),
    ("image-to-text", Domain::Multimodal),
    ("image-text-to-text", Domain::Multimodal),
    ("visual-question-answering", Domain::Multimodal),
    ("document-question-answering", Domain::Multimodal),
    ("text-to-video", Domain::Multimodal),
    ("video-text-to-text", Domain::Multimodal),
    // Other
    ("reinforcement-learning", Domain::Other),
    ("tabular-classification", Domain::Other),
    ("tabular-regression", Domain::Other),
    ("time-series-forecasting", Domain::Other),
    ("robotics", Domain::Other),
];

/// Bare domain labels (used by PyTorch Hub and by some cards).
pub const DOMAIN_TAGS: &[(&str, Domain)] = &[
    ("nlp", Domain::Nlp),
    ("natural-language-processing", Domain::Nlp),
    ("text", Domain::Nlp),
    ("cv", Domain::Cv),
    ("computer-vision", Domain::Cv),
    ("vision", Domain::Cv),
    ("audio", Domain::Audio),
    ("speech", Domain::Audio),
    ("multimodal", Domain::Multimodal),
    ("generative", Domain::Multimodal),
    ("research", Domain::Other),
    ("researchers", Domain::Other),
    ("cuda", Domain::Other),
    ("quantized", Domain::Other),
    ("other", Domain::Other),
];

/// Domain and task recovered from registry tags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagClassification {
    pub domain: Option<Domain>,
    pub task: Option<String>,
}

pub fn classify_tags<S: AsRef<str>>(tags: &[S]) -> TagClassification {
    let normalized: Vec<String> = tags
        .iter()
        .map(|t| t.as_ref().trim().to_ascii_lowercase())
        .collect();
    for tag in &normalized {
        if let Some((task, domain)) = TASK_TAGS.iter().find(|(t, _)| t == tag) {
            return TagClassification {
                domain: Some(*domain),
                task: Some((*task).to_string()),
            };
        }
    }
    let domain = normalized
        .iter()
        .find_map(|tag| DOMAIN_TAGS.iter().find(|(t, _)| t == tag).map(|(_, d)| *d));
    TagClassification { domain, task: None }
}
