//! Accuracy of extracted metadata against hand-labeled ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::{Map, Value};

use super::schema::{validate_value, MetadataFields};

/// One labeled model. Only the fields present in the label are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub ptm_id: String,
    pub fields: MetadataFields,
    pub compared: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("ground truth line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model ids differ: missing from extraction {missing:?}, not labeled {unlabeled:?}")]
    IdMismatch {
        missing: Vec<String>,
        unlabeled: Vec<String>,
    },
}

/// Reads JSON lines of the form `{"ptm_id": "...", <field>: <value>, ...}`.
pub fn parse_truth_jsonl(text: &str) -> Result<Vec<TruthRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let value: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(err("expected an object".into()));
        };
        let id = match obj.remove("ptm_id") {
            Some(Value::String(s)) => s,
            _ => return Err(err("ptm_id must be a string".into())),
        };
        let compared = obj.keys().cloned().collect();
        let fields = validate_value(&Value::Object(obj)).map_err(|v| {
            err(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
        })?;
        out.push(TruthRecord {
            ptm_id: id,
            fields,
            compared,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FieldScore {
    pub matches: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Accuracy {
    /// `matches / total`, or 0 when nothing was compared.
    pub accuracy: f64,
    pub matches: usize,
    pub total: usize,
    pub per_field: BTreeMap<String, FieldScore>,
}

fn norm_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Order- and case-insensitive form: text is folded, lists become sorted
/// sets, objects get folded keys.
fn canonical(v: &Value) -> Value {
    match v {
        Value::String(s) => Value::String(norm_text(s)),
        Value::Array(items) => {
            let set: BTreeSet<String> = items.iter().map(|i| canonical(i).to_string()).collect();
            Value::Array(set.into_iter().map(Value::String).collect())
        }
        Value::Object(o) => {
            let sorted: BTreeMap<String, Value> = o.iter().map(|(k, v)| (norm_text(k), canonical(v))).collect();
            Value::Object(sorted.into_iter().collect::<Map<_, _>>())
        }
        other => other.clone(),
    }
}

pub fn fields_match(extracted: &MetadataFields, truth: &MetadataFields, field: &str) -> bool {
    canonical(&extracted.get(field)) == canonical(&truth.get(field))
}

/// Scalars compare by folded text, lists by set equality, maps by key-value
/// set equality. Both sides must cover the same model ids.
pub fn evaluate_accuracy(extracted: &BTreeMap<String, MetadataFields>, truth: &[TruthRecord]) -> Result<Accuracy, EvalError> {
    let labeled: BTreeSet<&str> = truth.iter().map(|t| t.ptm_id.as_str()).collect();
    let got: BTreeSet<&str> = extracted.keys().map(String::as_str).collect();
    if labeled != got {
        return Err(EvalError::IdMismatch {
            missing: labeled.difference(&got).map(|s| s.to_string()).collect(),
            unlabeled: got.difference(&labeled).map(|s| s.to_string()).collect(),
        });
    }
    let mut per_field: BTreeMap<String, FieldScore> = BTreeMap::new();
    for t in truth {
        let e = &extracted[&t.ptm_id];
        for f in &t.compared {
            let score = per_field.entry(f.clone()).or_default();
            score.total += 1;
            if fields_match(e, &t.fields, f) {
                score.matches += 1;
            }
        }
    }
    let matches = per_field.values().map(|s| s.matches).sum();
    let total = per_field.values().map(|s| s.total).sum();
    Ok(Accuracy {
        accuracy: if total == 0 { 0.0 } else { matches as f64 / total as f64 },
        matches,
        total,
        per_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::schema::validate_schema;

    fn one(id: &str, json: &str) -> BTreeMap<String, MetadataFields> {
        BTreeMap::from([(id.to_string(), validate_schema(json).unwrap())])
    }

    #[test]
    fn identical_sets_score_one() {
        let truth = parse_truth_jsonl(r#"{"ptm_id": "hf/a", "license": "mit", "datasets": ["c4"]}"#).unwrap();
        let acc = evaluate_accuracy(&one("hf/a", r#"{"license": "mit", "datasets": ["c4"]}"#), &truth).unwrap();
        assert_eq!(acc.accuracy, 1.0);
    }

    #[test]
    fn eight_of_ten() {
        let truth = parse_truth_jsonl(
            r#"{"ptm_id": "hf/a", "domain": "NLP", "task": "fill-mask", "libraries": ["transformers"], "framework": "pytorch", "license": "apache-2.0", "datasets": ["wikipedia", "bookcorpus"], "base_model": "", "parameter_count": 110000000, "languages": ["English"], "demo": ""}"#,
        )
        .unwrap();
        let got = one(
            "hf/a",
            r#"{"domain": "NLP", "task": "Fill-Mask", "libraries": ["Transformers"], "framework": "pytorch", "license": "mit", "datasets": ["bookcorpus", "wikipedia"], "parameter_count": 110000000, "languages": ["english", "french"], "demo": ""}"#,
        );
        let acc = evaluate_accuracy(&got, &truth).unwrap();
        assert_eq!((acc.matches, acc.total), (8, 10));
        assert_eq!(acc.accuracy, 0.8);
        assert_eq!(acc.per_field["license"], FieldScore { matches: 0, total: 1 });
    }

    #[test]
    fn id_mismatch() {
        let truth = parse_truth_jsonl(r#"{"ptm_id": "hf/a", "license": "mit"}"#).unwrap();
        assert!(matches!(
            evaluate_accuracy(&one("hf/b", "{}"), &truth),
            Err(EvalError::IdMismatch { .. })
        ));
    }

    #[test]
    fn bad_truth_lines() {
        assert!(parse_truth_jsonl("{").is_err());
        assert!(parse_truth_jsonl(r#"{"license": "mit"}"#).is_err());
        assert!(parse_truth_jsonl(r#"{"ptm_id": "x", "speed": 1}"#).is_err());
    }
}
