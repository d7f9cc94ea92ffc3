//! Extracted metadata record and response validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::taxonomy::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Domain,
    Text,
    List,
    Map,
    Count,
    Evaluation,
}

/// Every extractable field in schema order, with its value kind.
pub const FIELDS: &[(&str, FieldKind)] = &[
    ("domain", FieldKind::Domain),
    ("task", FieldKind::Text),
    ("libraries", FieldKind::List),
    ("framework", FieldKind::Text),
    ("license", FieldKind::Text),
    ("datasets", FieldKind::List),
    ("base_model", FieldKind::Text),
    ("hyperparameters", FieldKind::Map),
    ("parameter_count", FieldKind::Count),
    ("hardware", FieldKind::Text),
    ("limitations_biases", FieldKind::Text),
    ("evaluation", FieldKind::Evaluation),
    ("carbon_emitted", FieldKind::Text),
    ("languages", FieldKind::List),
    ("grants", FieldKind::Text),
    ("demo", FieldKind::Text),
    ("github_repo", FieldKind::Text),
    ("papers", FieldKind::List),
    ("input_output_format", FieldKind::Text),
];

pub fn field_kind(name: &str) -> Option<FieldKind> {
    FIELDS.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evaluation {
    pub metric: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetadataFields {
    pub domain: Option<Domain>,
    pub task: Option<String>,
    pub libraries: Vec<String>,
    pub framework: Option<String>,
    pub license: Option<String>,
    pub datasets: Vec<String>,
    pub base_model: Option<String>,
    pub hyperparameters: BTreeMap<String, String>,
    pub parameter_count: Option<u64>,
    pub hardware: Option<String>,
    pub limitations_biases: Option<String>,
    pub evaluation: Vec<Evaluation>,
    pub carbon_emitted: Option<String>,
    pub languages: Vec<String>,
    pub grants: Option<String>,
    pub demo: Option<String>,
    pub github_repo: Option<String>,
    pub papers: Vec<String>,
    pub input_output_format: Option<String>,
}

fn value_is_empty(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.is_empty(),
        Value::Array(a) => a.is_empty(),
        Value::Object(o) => o.is_empty(),
        _ => false,
    }
}

impl MetadataFields {
    pub fn to_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("metadata serializes") {
            Value::Object(m) => m,
            _ => unreachable!("metadata is an object"),
        }
    }

    fn from_map(map: Map<String, Value>) -> Self {
        serde_json::from_value(Value::Object(map)).expect("fields round-trip")
    }

    pub fn get(&self, field: &str) -> Value {
        self.to_map().remove(field).unwrap_or(Value::Null)
    }

    pub fn is_field_empty(&self, field: &str) -> bool {
        value_is_empty(&self.get(field))
    }

    pub fn is_empty(&self) -> bool {
        *self == MetadataFields::default()
    }

    /// Names of the non-empty fields, in schema order.
    pub fn populated(&self) -> Vec<&'static str> {
        let map = self.to_map();
        FIELDS
            .iter()
            .map(|(n, _)| *n)
            .filter(|n| !map.get(*n).is_none_or(value_is_empty))
            .collect()
    }

    /// Copies `fields` from `other` where this record is still empty.
    pub fn merge_from(&mut self, other: &MetadataFields, fields: &[&str]) {
        let mut mine = self.to_map();
        let theirs = other.to_map();
        for f in fields {
            let (Some(slot), Some(v)) = (mine.get(*f), theirs.get(*f)) else {
                continue;
            };
            if value_is_empty(slot) && !value_is_empty(v) {
                mine.insert((*f).to_string(), v.clone());
            }
        }
        *self = MetadataFields::from_map(mine);
    }

    /// Keeps only `fields`, emptying the rest.
    pub fn restricted_to(&self, fields: &[&str]) -> MetadataFields {
        let mut out = MetadataFields::default();
        out.merge_from(self, fields);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.split_once('\n').map_or("", |(_, body)| body);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

fn text(field: &str, v: &Value, errs: &mut Vec<Violation>) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.trim().to_string()).filter(|s| !s.is_empty()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => {
            errs.push(Violation::new(field, "expected text"));
            None
        }
    }
}

fn list(field: &str, v: &Value, errs: &mut Vec<Violation>) -> Vec<String> {
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .filter_map(|(i, item)| text(&format!("{field}[{i}]"), item, errs))
            .collect(),
        other => text(field, other, errs).into_iter().collect(),
    }
}

fn map(field: &str, v: &Value, errs: &mut Vec<Violation>) -> BTreeMap<String, String> {
    match v {
        Value::Null => BTreeMap::new(),
        Value::Object(o) => o
            .iter()
            .filter_map(|(k, item)| {
                let value = text(&format!("{field}.{k}"), item, errs)?;
                Some((k.trim().to_string(), value))
            })
            .collect(),
        _ => {
            errs.push(Violation::new(field, "expected an object of name to value"));
            BTreeMap::new()
        }
    }
}

/// Integer, or text such as "110M", "1.3B" or "7,000,000".
fn parse_count(s: &str) -> Result<Option<u64>, &'static str> {
    let t = s.trim().replace([',', '_', ' '], "");
    if t.is_empty() {
        return Ok(None);
    }
    if t.starts_with('-') {
        return Err("non-negative required");
    }
    let (num, scale) = match t.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&t[..t.len() - 1], 1e3),
        Some('M') => (&t[..t.len() - 1], 1e6),
        Some('B') => (&t[..t.len() - 1], 1e9),
        Some('T') => (&t[..t.len() - 1], 1e12),
        _ => (t.as_str(), 1.0),
    };
    if scale == 1.0 {
        return num.parse::<u64>().map(Some).map_err(|_| "expected a non-negative integer");
    }
    match num.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some((x * scale).round() as u64)),
        _ => Err("expected a non-negative integer"),
    }
}

fn count(field: &str, v: &Value, errs: &mut Vec<Violation>) -> Option<u64> {
    let result = match v {
        Value::Null => Ok(None),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => Ok(Some(u)),
            (None, Some(_)) => Err("non-negative required"),
            _ if n.as_f64().is_some_and(|f| f < 0.0) => Err("non-negative required"),
            _ => Err("expected a non-negative integer"),
        },
        Value::String(s) => parse_count(s),
        _ => Err("expected a non-negative integer"),
    };
    result.unwrap_or_else(|m| {
        errs.push(Violation::new(field, m));
        None
    })
}

fn evaluation(field: &str, v: &Value, errs: &mut Vec<Violation>) -> Vec<Evaluation> {
    let items = match v {
        Value::Null => return Vec::new(),
        Value::Array(items) => items,
        _ => {
            errs.push(Violation::new(field, "expected a list of {metric, value}"));
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let at = format!("{field}[{i}]");
        let Value::Object(o) = item else {
            errs.push(Violation::new(&at, "expected an object with metric and value"));
            continue;
        };
        for k in o.keys().filter(|k| *k != "metric" && *k != "value") {
            errs.push(Violation::new(format!("{at}.{k}"), "unknown field"));
        }
        let metric = o.get("metric").and_then(|m| text(&format!("{at}.metric"), m, errs));
        let value = o.get("value").and_then(|m| text(&format!("{at}.value"), m, errs));
        match (metric, value) {
            (Some(metric), Some(value)) => out.push(Evaluation { metric, value }),
            (None, None) => {}
            _ => errs.push(Violation::new(&at, "metric and value are both required")),
        }
    }
    out
}

/// Validates a JSON object against the closed field set. Absent, null and
/// blank values become empty fields. Never panics; problems come back as
/// violations naming the field.
pub fn validate_value(value: &Value) -> Result<MetadataFields, Vec<Violation>> {
    let Value::Object(obj) = value else {
        return Err(vec![Violation::new("$", "expected a JSON object")]);
    };
    let mut errs = Vec::new();
    let mut out = Map::new();
    for (key, v) in obj {
        let Some(kind) = field_kind(key) else {
            errs.push(Violation::new(key, "unknown field"));
            continue;
        };
        let converted = match kind {
            FieldKind::Text => serde_json::to_value(text(key, v, &mut errs)),
            FieldKind::List => serde_json::to_value(list(key, v, &mut errs)),
            FieldKind::Map => serde_json::to_value(map(key, v, &mut errs)),
            FieldKind::Count => serde_json::to_value(count(key, v, &mut errs)),
            FieldKind::Evaluation => serde_json::to_value(evaluation(key, v, &mut errs)),
            FieldKind::Domain => {
                let d = text(key, v, &mut errs).and_then(|s| match s.parse::<Domain>() {
                    Ok(d) => Some(d),
                    Err(_) => {
                        errs.push(Violation::new(key, "expected one of NLP, CV, Audio, Multimodal, Other"));
                        None
                    }
                });
                serde_json::to_value(d)
            }
        };
        out.insert(key.clone(), converted.expect("plain values serialize"));
    }
    if errs.is_empty() {
        Ok(MetadataFields::from_map(out))
    } else {
        Err(errs)
    }
}

/// Parses a completion response, tolerating a surrounding code fence.
pub fn validate_schema(response: &str) -> Result<MetadataFields, Vec<Violation>> {
    match serde_json::from_str::<Value>(strip_fences(response)) {
        Ok(v) => validate_value(&v),
        Err(e) => Err(vec![Violation::new("$", format!("not valid JSON: {e}"))]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_object() {
        let m = validate_schema(r#"{"license": "mit"}"#).unwrap();
        assert_eq!(m.license.as_deref(), Some("mit"));
        assert_eq!(m.populated(), vec!["license"]);
    }

    #[test]
    fn negative_count() {
        let errs = validate_schema(r#"{"parameter_count": "-5"}"#).unwrap_err();
        assert_eq!(errs, vec![Violation::new("parameter_count", "non-negative required")]);
        let errs = validate_schema(r#"{"parameter_count": -5}"#).unwrap_err();
        assert_eq!(errs[0].message, "non-negative required");
    }

    #[test]
    fn unknown_field_is_named() {
        let errs = validate_schema(r#"{"speed": "fast", "license": "mit"}"#).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "speed");
    }

    #[test]
    fn coercions() {
        let m = validate_schema(
            "```json\n{\"parameter_count\": \"110M\", \"languages\": \"English\", \"task\": \"  \", \"domain\": \"natural language processing\", \"hyperparameters\": {\"lr\": 0.0001}}\n```",
        )
        .unwrap();
        assert_eq!(m.parameter_count, Some(110_000_000));
        assert_eq!(m.languages, vec!["English"]);
        assert_eq!(m.task, None);
        assert_eq!(m.domain, Some(Domain::Nlp));
        assert_eq!(m.hyperparameters["lr"], "0.0001");
    }

    #[test]
    fn evaluation_entries() {
        let m = validate_schema(r#"{"evaluation": [{"metric": "accuracy", "value": 0.91}]}"#).unwrap();
        assert_eq!(m.evaluation, vec![Evaluation { metric: "accuracy".into(), value: "0.91".into() }]);
        let errs = validate_schema(r#"{"evaluation": [{"metric": "f1"}]}"#).unwrap_err();
        assert_eq!(errs[0].field, "evaluation[0]");
    }

    #[test]
    fn not_json_or_not_object() {
        assert_eq!(validate_schema("sorry, I cannot").unwrap_err()[0].field, "$");
        assert_eq!(validate_schema("[1]").unwrap_err()[0].field, "$");
        assert!(validate_schema("{}").unwrap().is_empty());
    }

    #[test]
    fn merge_first_non_empty_wins() {
        let mut a = validate_schema(r#"{"license": "mit"}"#).unwrap();
        let b = validate_schema(r#"{"license": "apache-2.0", "datasets": ["c4"]}"#).unwrap();
        a.merge_from(&b, &["license", "datasets"]);
        assert_eq!(a.license.as_deref(), Some("mit"));
        assert_eq!(a.datasets, vec!["c4"]);
    }

    #[test]
    fn shipped_schema_matches_field_list() {
        let schema: Value = serde_json::from_str(include_str!("../../data/metadata_schema.json")).unwrap();
        let props: Vec<&str> = schema["properties"].as_object().unwrap().keys().map(String::as_str).collect();
        let fields: Vec<&str> = FIELDS.iter().map(|(n, _)| *n).collect();
        assert_eq!(props, fields);
        let defaults = MetadataFields::default().to_map();
        assert_eq!(defaults.keys().map(String::as_str).collect::<Vec<_>>(), fields);
    }
}
