//! Structured metadata extraction from model cards.
//!
//! Two pipelines share prompts, validation and merging. `cheap` splits the
//! card, retrieves the chunks relevant to each field group and keeps every
//! request within a token budget. `accurate` sends the whole card in one
//! request and falls back to `cheap` when the card exceeds the model limit.

pub mod chunk;
pub mod client;
pub mod eval;
pub mod prompt;
pub mod retrieve;
pub mod schema;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mapper::PtmIndex;
use crate::model::{format_timestamp, PtmId, PtmPtmLink, Registry};
use crate::store::{Store, StoreError, StoredMetadata};
use crate::strategy::{StrategyRegistry, UnknownStrategy};

pub use chunk::{estimate_tokens, split_markdown, CardChunk};
pub use client::{ClientError, CompletionClient, CompletionRequest, RetryPolicy};
pub use eval::{evaluate_accuracy, parse_truth_jsonl, Accuracy, EvalError, FieldScore, TruthRecord};
pub use prompt::{assemble_prompt, ModelInfo, PromptBundle, TemplateError, Templates};
pub use retrieve::{retrieve, Scorer, TermOverlap};
pub use schema::{validate_schema, Evaluation, MetadataFields, Violation, FIELDS};

pub const CHEAP_BUDGET: usize = 4096;
pub const ACCURATE_LIMIT: usize = 128_000;

/// Fields requested together in cheap mode, with the retrieval query.
#[derive(Debug, Clone, Copy)]
pub struct FieldGroup {
    pub name: &'static str,
    pub fields: &'static [&'static str],
    pub query: &'static str,
    pub nlp_only: bool,
}

/// Ordered from most to least commonly available in cards, so that the
/// first non-empty answer for a field comes from its most likely group.
pub const FIELD_GROUPS: &[FieldGroup] = &[
    FieldGroup {
        name: "libraries",
        fields: &["libraries", "framework"],
        query: "library libraries framework pytorch tensorflow jax transformers usage install import",
        nlp_only: false,
    },
    FieldGroup {
        name: "domain-task",
        fields: &["domain", "task"],
        query: "model description task domain intended uses classification generation",
        nlp_only: false,
    },
    FieldGroup {
        name: "lineage",
        fields: &["license", "datasets", "base_model"],
        query: "license dataset datasets training data base model fine-tuned from finetuned",
        nlp_only: false,
    },
    FieldGroup {
        name: "evaluation",
        fields: &["demo", "evaluation"],
        query: "evaluation results metrics accuracy score benchmark demo space",
        nlp_only: false,
    },
    FieldGroup {
        name: "provenance",
        fields: &["github_repo", "papers"],
        query: "github repository code paper arxiv citation bibtex",
        nlp_only: false,
    },
    FieldGroup {
        name: "training",
        fields: &["hyperparameters", "parameter_count", "hardware"],
        query: "training hyperparameters learning rate batch size epochs parameters size hardware gpu tpu",
        nlp_only: false,
    },
    FieldGroup {
        name: "limitations",
        fields: &["limitations_biases", "input_output_format"],
        query: "limitations bias biases risks input output format",
        nlp_only: false,
    },
    FieldGroup {
        name: "support",
        fields: &["grants", "carbon_emitted"],
        query: "grant funding sponsor acknowledgements carbon emissions co2",
        nlp_only: false,
    },
    FieldGroup {
        name: "languages",
        fields: &["languages"],
        query: "language languages multilingual english",
        nlp_only: true,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    Cheap,
    Accurate,
    CheapFallback,
}

impl PipelineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Cheap => "cheap",
            PipelineMode::Accurate => "accurate",
            PipelineMode::CheapFallback => "cheap-fallback",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A request whose response failed validation, kept for manual review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFlag {
    pub group: String,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline_mode: PipelineMode,
    pub client_id: String,
    pub timestamp: String,
    pub review: Vec<ReviewFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedMetadata {
    pub fields: MetadataFields,
    pub provenance: Provenance,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("request for {group} failed after {attempts} attempt(s): {source}")]
    Client {
        group: String,
        attempts: u32,
        source: ClientError,
    },
    #[error("prompt for {group} needs {tokens} tokens before any card text, over the budget of {budget}")]
    PromptTooLarge { group: String, tokens: usize, budget: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    pub budget: usize,
    pub limit: usize,
    pub top_k: usize,
    pub chunk_tokens: usize,
    pub retry: RetryPolicy,
    /// Fixed provenance time; the current time when absent.
    pub timestamp: Option<DateTime<Utc>>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            budget: CHEAP_BUDGET,
            limit: ACCURATE_LIMIT,
            top_k: 4,
            chunk_tokens: 512,
            retry: RetryPolicy::default(),
            timestamp: None,
        }
    }
}

/// Everything a pipeline run needs besides the card.
#[derive(Clone, Copy)]
pub struct ExtractContext<'a> {
    pub client: &'a dyn CompletionClient,
    pub templates: &'a Templates,
    pub scorer: &'a dyn Scorer,
    pub options: ExtractOptions,
}

impl ExtractContext<'_> {
    fn provenance(&self, mode: PipelineMode, review: Vec<ReviewFlag>) -> Provenance {
        Provenance {
            pipeline_mode: mode,
            client_id: self.client.id(),
            timestamp: format_timestamp(&self.options.timestamp.unwrap_or_else(Utc::now)),
            review,
        }
    }

    fn ask(&self, group: &str, request: &CompletionRequest) -> Result<String, PipelineError> {
        client::complete_with_retry(self.client, request, self.options.retry).map_err(|(source, attempts)| {
            PipelineError::Client {
                group: group.to_string(),
                attempts,
                source,
            }
        })
    }
}

fn request(bundle: &PromptBundle, context: &str, fields: &[&str]) -> CompletionRequest {
    CompletionRequest {
        system: bundle.system_text(),
        user: prompt::card_message(context),
        fields: fields.iter().map(|f| f.to_string()).collect(),
    }
}

/// Cheap pipeline: one request per field group over retrieved chunks, each
/// within `options.budget` estimated tokens. Groups without any fitting
/// card text are not sent.
pub fn extract_cheap(info: &ModelInfo, card: &str, ctx: &ExtractContext) -> Result<ExtractedMetadata, PipelineError> {
    run_cheap(info, card, ctx, PipelineMode::Cheap)
}

fn run_cheap(info: &ModelInfo, card: &str, ctx: &ExtractContext, mode: PipelineMode) -> Result<ExtractedMetadata, PipelineError> {
    let nlp = prompt::is_nlp(&info.tags);
    let budget = ctx.options.budget;
    let mut merged = MetadataFields::default();
    let mut review = Vec::new();
    for group in FIELD_GROUPS.iter().filter(|g| nlp || !g.nlp_only) {
        let bundle = assemble_prompt(info, group.fields, ctx.templates);
        let base = request(&bundle, "", group.fields).token_estimate();
        if base > budget {
            return Err(PipelineError::PromptTooLarge {
                group: group.name.into(),
                tokens: base,
                budget,
            });
        }
        let chunks = split_markdown(card, ctx.options.chunk_tokens.min(budget - base));
        let mut chosen: Vec<usize> = Vec::new();
        let mut best: Option<CompletionRequest> = None;
        for i in retrieve(group.query, &chunks, ctx.options.top_k, ctx.scorer) {
            let mut trial = chosen.clone();
            trial.push(i);
            trial.sort_unstable();
            let context = trial.iter().map(|&j| chunks[j].text.as_str()).collect::<Vec<_>>().join("\n");
            let req = request(&bundle, &context, group.fields);
            if req.token_estimate() <= budget {
                chosen = trial;
                best = Some(req);
            }
        }
        let Some(req) = best else {
            continue;
        };
        let response = ctx.ask(group.name, &req)?;
        match validate_schema(&response) {
            Ok(fields) => merged.merge_from(&fields, &FIELDS.iter().map(|(f, _)| *f).collect::<Vec<_>>()),
            Err(violations) => review.push(ReviewFlag {
                group: group.name.into(),
                violations,
            }),
        }
    }
    Ok(ExtractedMetadata {
        fields: merged,
        provenance: ctx.provenance(mode, review),
    })
}

/// Accurate pipeline: the whole card in one request when it fits within
/// `options.limit`, otherwise the cheap pipeline marked `cheap-fallback`.
pub fn extract_accurate(info: &ModelInfo, card: &str, ctx: &ExtractContext) -> Result<ExtractedMetadata, PipelineError> {
    let all: Vec<&str> = FIELDS.iter().map(|(f, _)| *f).collect();
    let bundle = assemble_prompt(info, &all, ctx.templates);
    let req = request(&bundle, &card.replace("\r\n", "\n"), &all);
    if req.token_estimate() > ctx.options.limit {
        log::info!(
            "{}: card needs {} tokens, over the limit of {}; using the cheap pipeline",
            info.name,
            req.token_estimate(),
            ctx.options.limit
        );
        return run_cheap(info, card, ctx, PipelineMode::CheapFallback);
    }
    let response = ctx.ask("all", &req)?;
    let (fields, review) = match validate_schema(&response) {
        Ok(fields) => (fields, Vec::new()),
        Err(violations) => (
            MetadataFields::default(),
            vec![ReviewFlag {
                group: "all".into(),
                violations,
            }],
        ),
    };
    Ok(ExtractedMetadata {
        fields,
        provenance: ctx.provenance(PipelineMode::Accurate, review),
    })
}

pub trait Pipeline: Send + Sync {
    fn extract(&self, info: &ModelInfo, card: &str, ctx: &ExtractContext) -> Result<ExtractedMetadata, PipelineError>;
}

impl<F> Pipeline for F
where
    F: Fn(&ModelInfo, &str, &ExtractContext) -> Result<ExtractedMetadata, PipelineError> + Send + Sync,
{
    fn extract(&self, info: &ModelInfo, card: &str, ctx: &ExtractContext) -> Result<ExtractedMetadata, PipelineError> {
        self(info, card, ctx)
    }
}

pub fn pipelines() -> StrategyRegistry<dyn Pipeline> {
    let mut reg: StrategyRegistry<dyn Pipeline> = StrategyRegistry::new("extraction pipeline");
    reg.register("cheap", Box::new(extract_cheap));
    reg.register("accurate", Box::new(extract_accurate));
    reg
}

/// Digest of everything that determines an extraction's inputs; a stored
/// result with the same digest is not recomputed.
pub fn input_digest(mode: &str, client_id: &str, info: &ModelInfo, card: &str, options: &ExtractOptions) -> String {
    let key = serde_json::json!([mode, client_id, info.name, info.tags, card, options.budget, options.limit, options.top_k, options.chunk_tokens]);
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractSummary {
    pub cards: usize,
    pub extracted: usize,
    pub unchanged: usize,
    pub flagged: usize,
    pub failed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    UnknownPipeline(#[from] UnknownStrategy),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Extracts metadata for every package with a card, skipping packages whose
/// stored result has the same input digest. Failed cards are logged and
/// counted; the rest are stored.
pub fn extract_store(store: &mut Store, mode: &str, ctx: &ExtractContext, parallelism: usize) -> Result<ExtractSummary, ExtractError> {
    let registry = pipelines();
    let pipeline = registry.get(mode)?;
    let stored: HashMap<PtmId, String> = store
        .metadata()?
        .into_iter()
        .map(|m| (m.ptm_id, m.input_digest))
        .collect();
    let mut summary = ExtractSummary::default();
    let client_id = ctx.client.id();
    let mut todo = Vec::new();
    for p in store.packages()? {
        let Some(card) = p.card.filter(|c| !c.trim().is_empty()) else {
            continue;
        };
        summary.cards += 1;
        let info = ModelInfo {
            name: p.name,
            tags: p.tags,
        };
        let digest = input_digest(mode, &client_id, &info, &card, &ctx.options);
        if stored.get(&p.id) == Some(&digest) {
            summary.unchanged += 1;
            continue;
        }
        todo.push((p.id, info, card, digest));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ExtractError::Pool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        todo.par_iter()
            .map(|(id, info, card, digest)| (id, digest, pipeline.extract(info, card, ctx)))
            .collect()
    });
    for (id, digest, result) in results {
        match result {
            Ok(meta) => {
                if !meta.provenance.review.is_empty() {
                    summary.flagged += 1;
                }
                store.put_metadata(&StoredMetadata {
                    ptm_id: id.clone(),
                    mode: meta.provenance.pipeline_mode.as_str().into(),
                    client_id: meta.provenance.client_id,
                    timestamp: meta.provenance.timestamp,
                    input_digest: digest.clone(),
                    review: serde_json::to_value(&meta.provenance.review).expect("review serializes"),
                    fields: serde_json::to_value(&meta.fields).expect("fields serialize"),
                })?;
                summary.extracted += 1;
            }
            Err(e) => {
                log::error!("{id}: {e}");
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

/// Stored extraction results keyed by package id.
pub fn stored_fields(store: &Store) -> Result<BTreeMap<String, MetadataFields>, StoreError> {
    let mut out = BTreeMap::new();
    for m in store.metadata()? {
        let fields = serde_json::from_value(m.fields).map_err(|e| StoreError::Corrupt {
            table: "extracted_metadata",
            reason: e.to_string(),
        })?;
        out.insert(m.ptm_id.0, fields);
    }
    Ok(out)
}

/// Rebuilds PTM-to-PTM links from extracted base models. A link is resolved
/// when the base model names an ingested package on the child's registry.
pub fn derive_ptm_ptm_links(store: &mut Store) -> Result<usize, StoreError> {
    let packages = store.packages()?;
    let index = PtmIndex::new(&packages);
    let registry: HashMap<&str, Registry> = packages.iter().map(|p| (p.id.as_str(), p.registry)).collect();
    let mut links = Vec::new();
    for (id, fields) in stored_fields(store)? {
        let Some(base) = fields.base_model else {
            continue;
        };
        let hub = registry.get(id.as_str()).copied().unwrap_or(Registry::HuggingFace);
        let resolved = index.resolve(&base, hub).ok().and_then(|r| r.matched_ptm);
        links.push(PtmPtmLink {
            child_ptm_id: PtmId(id),
            base_model_name: base,
            resolved_base_id: resolved,
        });
    }
    store.replace_ptm_ptm_links(&links)?;
    Ok(links.len())
}
