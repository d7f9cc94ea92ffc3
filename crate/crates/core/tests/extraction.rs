mod common;

use std::sync::Arc;

use common::generate::*;
use common::*;
use proptest::prelude::*;
use ptmscope::extract::chunk::MIN_CHUNK_TOKENS;
use ptmscope::extract::client::{EchoClient, EmptyClient, RecordingClient, ScriptedClient};
use ptmscope::extract::{
    derive_ptm_ptm_links, estimate_tokens, evaluate_accuracy, extract_accurate, extract_cheap, extract_store,
    parse_truth_jsonl, split_markdown, stored_fields, validate_schema, ExtractContext, ExtractOptions, ModelInfo,
    TermOverlap, Templates, CHEAP_BUDGET, FIELDS,
};

fn options() -> ExtractOptions {
    ExtractOptions {
        timestamp: ptmscope::model::parse_timestamp("2024-01-01"),
        ..ExtractOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chunks_are_lossless_and_within_budget(card in card(), max in 0usize..400) {
        let chunks = split_markdown(&card, max);
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(joined, card.replace("\r\n", "\n"));
        let limit = max.max(MIN_CHUNK_TOKENS);
        for c in &chunks {
            prop_assert!(c.token_estimate <= limit, "{} > {}", c.token_estimate, limit);
            prop_assert_eq!(c.token_estimate, estimate_tokens(&c.text));
            prop_assert!(!c.text.is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cheap_requests_stay_under_budget(blocks in prop::collection::vec(block(), 20..200), nlp in any::<bool>()) {
        let card = blocks.concat();
        let templates = Templates::builtin();
        let recorder = RecordingClient::new(Arc::new(EchoClient));
        let ctx = ExtractContext {
            client: &recorder,
            templates: &templates,
            scorer: &TermOverlap,
            options: options(),
        };
        let tags = if nlp { vec!["text-classification".to_string()] } else { vec![] };
        extract_cheap(&ModelInfo { name: "org/m".into(), tags }, &card, &ctx).unwrap();
        for r in recorder.requests() {
            prop_assert!(r.token_estimate() <= CHEAP_BUDGET, "{}", r.token_estimate());
        }
    }

    #[test]
    fn validation_is_total(text in ".{0,200}") {
        let _ = validate_schema(&text);
    }
}

#[test]
fn empty_responses_give_empty_fields() {
    let templates = Templates::builtin();
    let ctx = ExtractContext {
        client: &EmptyClient,
        templates: &templates,
        scorer: &TermOverlap,
        options: options(),
    };
    let info = ModelInfo {
        name: "org/m".into(),
        tags: vec!["fill-mask".into()],
    };
    let card = "# M\n\nlicense: mit\n\n## Training\n\ndatasets: c4\n".repeat(50);
    for meta in [extract_cheap(&info, &card, &ctx).unwrap(), extract_accurate(&info, &card, &ctx).unwrap()] {
        assert!(meta.fields.is_empty());
        for (f, _) in FIELDS {
            assert!(meta.fields.is_field_empty(f), "{f}");
        }
    }
}

#[test]
fn oversized_cards_fall_back_to_cheap() {
    let templates = Templates::builtin();
    let recorder = RecordingClient::new(Arc::new(EmptyClient));
    let ctx = ExtractContext {
        client: &recorder,
        templates: &templates,
        scorer: &TermOverlap,
        options: ExtractOptions {
            limit: 2000,
            ..options()
        },
    };
    let card = "word ".repeat(5000);
    let meta = extract_accurate(&ModelInfo { name: "m".into(), tags: vec![] }, &card, &ctx).unwrap();
    assert_eq!(meta.provenance.pipeline_mode.as_str(), "cheap-fallback");
    assert!(recorder.requests().iter().all(|r| r.token_estimate() <= CHEAP_BUDGET));
}

fn scripted_store() -> (tempfile::TempDir, ptmscope::store::Store, ScriptedClient) {
    let (d, mut store) = open_store();
    ingest_snapshot(&mut store, "extract/snapshot.jsonl");
    let client = ScriptedClient::load(&fixtures().join("extract/script.json")).unwrap();
    (d, store, client)
}

#[test]
fn scripted_fixture_accuracy() {
    let (_d, mut store, client) = scripted_store();
    let templates = Templates::builtin();
    let ctx = ExtractContext {
        client: &client,
        templates: &templates,
        scorer: &TermOverlap,
        options: options(),
    };
    let summary = extract_store(&mut store, "accurate", &ctx, 2).unwrap();
    assert_eq!((summary.cards, summary.extracted, summary.failed), (5, 5, 0));
    let truth = parse_truth_jsonl(&std::fs::read_to_string(fixtures().join("extract/truth.jsonl")).unwrap()).unwrap();
    let acc = evaluate_accuracy(&stored_fields(&store).unwrap(), &truth).unwrap();
    // whisperlet license and pixeldream datasets disagree with the labels
    assert_eq!((acc.matches, acc.total), (8, 10));
    assert_eq!(acc.accuracy, 0.8);
    assert_eq!(acc.per_field["license"].matches, 0);
    assert_eq!(acc.per_field["datasets"].matches, 2);
}

#[test]
fn base_model_becomes_ptm_link() {
    let (_d, mut store, client) = scripted_store();
    let templates = Templates::builtin();
    let ctx = ExtractContext {
        client: &client,
        templates: &templates,
        scorer: &TermOverlap,
        options: options(),
    };
    extract_store(&mut store, "accurate", &ctx, 1).unwrap();
    assert_eq!(derive_ptm_ptm_links(&mut store).unwrap(), 1);
    let links = store.ptm_ptm_links().unwrap();
    assert_eq!(links[0].child_ptm_id.as_str(), "hf/acme/tiny-bert-sentiment");
    assert_eq!(links[0].resolved_base_id.as_ref().map(|p| p.as_str()), Some("hf/acme/tiny-bert"));
}

#[test]
fn unchanged_cards_are_not_reextracted() {
    let (_d, mut store, client) = scripted_store();
    let templates = Templates::builtin();
    let ctx = ExtractContext {
        client: &client,
        templates: &templates,
        scorer: &TermOverlap,
        options: options(),
    };
    extract_store(&mut store, "cheap", &ctx, 1).unwrap();
    let first = store.metadata().unwrap();
    let again = extract_store(&mut store, "cheap", &ctx, 1).unwrap();
    assert_eq!((again.extracted, again.unchanged), (0, 5));
    assert_eq!(store.metadata().unwrap(), first);
}
