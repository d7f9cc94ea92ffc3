mod common;

use std::collections::BTreeSet;

use common::*;
use ptmscope::mapper::{link, write_links_csv};
use ptmscope::scanner::ScanConfig;

#[test]
fn shared_and_multi_model_repos() {
    let tmp = tempfile::tempdir().unwrap();
    write_mapping_corpus(tmp.path());
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, tmp.path(), &ScanConfig::default(), 1);
    let stats = link(&mut store).unwrap();
    assert_eq!(stats.links, 4);
    assert_eq!(stats.distinct_repos, 3);
    assert_eq!(stats.distinct_ptms, 3);
    assert_eq!(stats.dynamic_records, 1);
    let evidence: usize = store.links().unwrap().iter().map(|l| l.evidence.len()).sum();
    assert_eq!(evidence, 5);
}

#[test]
fn dynamic_only_repo_has_no_links() {
    let tmp = tempfile::tempdir().unwrap();
    write_repo(
        tmp.path(),
        "d__dyn",
        "from transformers import AutoModel\nimport sys\nAutoModel.from_pretrained(sys.argv[1])\nAutoModel.from_pretrained(f'{sys.argv[1]}-large')\n",
    );
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, tmp.path(), &ScanConfig::default(), 1);
    let stats = link(&mut store).unwrap();
    assert_eq!((stats.links, stats.dynamic_records), (0, 2));
    assert!(store.unmatched_names().unwrap().is_empty());
}

#[test]
fn labeled_corpus_links() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    let stats = link(&mut store).unwrap();
    let labels = labels();
    let repos = store.repositories().unwrap();
    let got: BTreeSet<(String, String, String)> = store
        .links()
        .unwrap()
        .into_iter()
        .map(|l| {
            let repo = repos.iter().find(|r| r.id == l.repo_id).unwrap();
            (repo.full_name.clone(), l.ptm_id.0, l.match_strength.as_str().to_string())
        })
        .collect();
    let want: BTreeSet<(String, String, String)> = labels["links"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| {
            (
                l[0].as_str().unwrap().into(),
                l[1].as_str().unwrap().into(),
                l[2].as_str().unwrap().into(),
            )
        })
        .collect();
    assert_eq!(got, want);
    assert_eq!(stats.distinct_repos as u64, labels["distinct_repos"].as_u64().unwrap());
    assert_eq!(stats.distinct_ptms as u64, labels["distinct_ptms"].as_u64().unwrap());
    assert_eq!(stats.case_insensitive_links as u64, labels["case_insensitive_links"].as_u64().unwrap());
    assert_eq!(stats.dynamic_records as u64, labels["dynamic_records"].as_u64().unwrap());
    let unmatched: BTreeSet<String> = store.unmatched_names().unwrap().into_iter().map(|u| u.name).collect();
    let want_unmatched: BTreeSet<String> = labels["unmatched_names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(unmatched, want_unmatched);
}

#[test]
fn relink_is_idempotent() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    let first = link(&mut store).unwrap();
    let links = store.links().unwrap();
    assert_eq!(link(&mut store).unwrap(), first);
    assert_eq!(store.links().unwrap(), links);
}

#[test]
fn links_csv_has_one_row_per_link() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    link(&mut store).unwrap();
    let mut out = Vec::new();
    write_links_csv(&store.links().unwrap(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + labels()["links"].as_array().unwrap().len());
    assert!(text.contains("github/alice/bert-classifier,hf/bert-base-uncased,Exact,2\n"));
}
