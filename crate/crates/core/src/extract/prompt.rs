//! Prompt templates and bundle assembly.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::Value;

use super::schema::FIELDS;
use crate::taxonomy::{classify_tags, Domain, TASK_TAGS};

pub const PREFIX_FILE: &str = "prefix.txt";
pub const METADATA_FILE: &str = "metadata.txt";
pub const DOMAIN_TASK_FILE: &str = "domain_task.txt";
pub const LANGUAGE_FILE: &str = "language.txt";
pub const SCHEMA_FILE: &str = "metadata_schema.json";

/// Opening and closing markers around card text in the user message.
pub const CARD_OPEN: &str = "<card>";
pub const CARD_CLOSE: &str = "</card>";

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("missing template file {0}")]
    Missing(PathBuf),
    #[error("cannot read template {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("template {file}: {message}")]
    Invalid { file: String, message: String },
}

/// Editable prompt templates.
///
/// Placeholders: `{model_name}`, `{domain}` and `{task}` in the prefix;
/// `{domains}` and `{tasks}` in the domain/task prompt. The metadata prompt
/// holds one `field: definition` line per schema field.
#[derive(Debug, Clone)]
pub struct Templates {
    pub prefix: String,
    pub definitions: IndexMap<String, String>,
    pub domain_task: String,
    pub language: String,
    pub schema: Value,
}

impl Templates {
    fn from_parts(prefix: &str, metadata: &str, domain_task: &str, language: &str, schema: &str) -> Result<Self, TemplateError> {
        let invalid = |file: &str, message: String| TemplateError::Invalid {
            file: file.to_string(),
            message,
        };
        let mut definitions = IndexMap::new();
        for line in metadata.lines().filter(|l| !l.trim().is_empty()) {
            let (name, def) = line
                .split_once(':')
                .ok_or_else(|| invalid(METADATA_FILE, format!("line {line:?} is not `field: definition`")))?;
            definitions.insert(name.trim().to_string(), def.trim().to_string());
        }
        if let Some((missing, _)) = FIELDS.iter().find(|(f, _)| !definitions.contains_key(*f)) {
            return Err(invalid(METADATA_FILE, format!("no definition for {missing}")));
        }
        if prefix.trim().is_empty() {
            return Err(invalid(PREFIX_FILE, "empty".into()));
        }
        let schema: Value = serde_json::from_str(schema).map_err(|e| invalid(SCHEMA_FILE, e.to_string()))?;
        if !schema["properties"].is_object() {
            return Err(invalid(SCHEMA_FILE, "no properties object".into()));
        }
        Ok(Templates {
            prefix: prefix.to_string(),
            definitions,
            domain_task: domain_task.to_string(),
            language: language.to_string(),
            schema,
        })
    }

    pub fn builtin() -> Templates {
        Templates::from_parts(
            include_str!("../../data/templates/prefix.txt"),
            include_str!("../../data/templates/metadata.txt"),
            include_str!("../../data/templates/domain_task.txt"),
            include_str!("../../data/templates/language.txt"),
            include_str!("../../data/metadata_schema.json"),
        )
        .expect("shipped templates are valid")
    }

    /// Reads the five template files from `dir`.
    pub fn load(dir: &Path) -> Result<Templates, TemplateError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| {
                if source.kind() == std::io::ErrorKind::NotFound {
                    TemplateError::Missing(path)
                } else {
                    TemplateError::Io { path, source }
                }
            })
        };
        Templates::from_parts(
            &read(PREFIX_FILE)?,
            &read(METADATA_FILE)?,
            &read(DOMAIN_TASK_FILE)?,
            &read(LANGUAGE_FILE)?,
            &read(SCHEMA_FILE)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub prefix: String,
    pub metadata_prompt: String,
    pub schema_text: String,
    pub domain_task_prompts: Option<String>,
    pub language_prompt: Option<String>,
}

impl PromptBundle {
    /// Instruction text sent as the system message.
    pub fn system_text(&self) -> String {
        let mut parts = vec![self.prefix.trim_end(), self.metadata_prompt.trim_end()];
        if let Some(p) = &self.domain_task_prompts {
            parts.push(p.trim_end());
        }
        if let Some(p) = &self.language_prompt {
            parts.push(p.trim_end());
        }
        let mut out = parts.join("\n\n");
        out.push_str("\n\nJSON schema:\n");
        out.push_str(&self.schema_text);
        out
    }
}

/// User message wrapping the card text that the model may read.
pub fn card_message(context: &str) -> String {
    format!("{CARD_OPEN}\n{context}\n{CARD_CLOSE}")
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// Whether the tags mark an NLP model.
pub fn is_nlp(tags: &[String]) -> bool {
    classify_tags(tags).domain == Some(Domain::Nlp)
}

/// Builds the prompt bundle for extracting `fields`. The domain/task prompt
/// is added when the tags do not give both; the language prompt when the
/// tags mark an NLP model.
pub fn assemble_prompt(info: &ModelInfo, fields: &[&str], templates: &Templates) -> PromptBundle {
    let tags = classify_tags(&info.tags);
    let unknown = "unknown";
    let domain = tags.domain.map(|d| d.as_str().to_string());
    let prefix = render(
        &templates.prefix,
        &[
            ("model_name", &info.name),
            ("domain", domain.as_deref().unwrap_or(unknown)),
            ("task", tags.task.as_deref().unwrap_or(unknown)),
        ],
    );
    let metadata_prompt = fields
        .iter()
        .filter_map(|f| templates.definitions.get(*f).map(|d| format!("- {f}: {d}")))
        .collect::<Vec<_>>()
        .join("\n");
    let mut schema = templates.schema.clone();
    if let Some(props) = schema["properties"].as_object_mut() {
        props.retain(|k, _| fields.contains(&k.as_str()));
    }
    let schema_text = serde_json::to_string_pretty(&schema).expect("schema serializes");
    let domain_task_prompts = (tags.domain.is_none() || tags.task.is_none()).then(|| {
        let domains = Domain::ALL.map(Domain::as_str).join(", ");
        let tasks = TASK_TAGS.iter().map(|(t, _)| *t).collect::<Vec<_>>().join(", ");
        render(&templates.domain_task, &[("domains", &domains), ("tasks", &tasks)])
    });
    let language_prompt = (tags.domain == Some(Domain::Nlp)).then(|| templates.language.clone());
    PromptBundle {
        prefix,
        metadata_prompt,
        schema_text,
        domain_task_prompts,
        language_prompt,
    }
}
