mod common;

use std::io::BufReader;

use common::*;
use ptmscope::scanner::ScanConfig;
use ptmscope::store::{export_table, ExportFormat, Selector, Store, Table};

fn export(store: &Store, table: Table, format: ExportFormat) -> Vec<u8> {
    let mut out = Vec::new();
    export_table(store, &Selector::all(table), format, &mut out).unwrap();
    out
}

const SNAPSHOTS: &[&str] = &["snapshot.jsonl", "extract/snapshot.jsonl"];

#[test]
fn snapshot_export_is_a_fixed_point() {
    for name in SNAPSHOTS {
        let (_a, mut first) = open_store();
        ingest_snapshot(&mut first, name);
        let once = export(&first, Table::PtmPackage, ExportFormat::JsonLines);
        let (_b, mut second) = open_store();
        let r = second.ingest_registry_snapshot(BufReader::new(once.as_slice())).unwrap();
        assert!(r.errors.is_empty());
        let twice = export(&second, Table::PtmPackage, ExportFormat::JsonLines);
        assert_eq!(String::from_utf8(once).unwrap(), String::from_utf8(twice).unwrap(), "{name}");
    }
}

#[test]
fn repository_export_is_a_fixed_point() {
    let (_a, mut first) = open_store();
    let text = std::fs::read(fixtures().join("repos.jsonl")).unwrap();
    first.ingest_repositories(BufReader::new(text.as_slice())).unwrap();
    let once = export(&first, Table::Repository, ExportFormat::JsonLines);
    let (_b, mut second) = open_store();
    second.ingest_repositories(BufReader::new(once.as_slice())).unwrap();
    assert_eq!(once, export(&second, Table::Repository, ExportFormat::JsonLines));
}

#[test]
fn unknown_fields_survive_the_round_trip() {
    let line = br#"{"name":"org/x","registry":"hf","pipeline":{"a":[1,2.50]},"downloads":3}"#;
    let (_d, mut store) = open_store();
    store.ingest_registry_snapshot(BufReader::new(&line[..])).unwrap();
    let out = String::from_utf8(export(&store, Table::PtmPackage, ExportFormat::JsonLines)).unwrap();
    assert!(out.contains(r#""pipeline":{"a":[1,2.50]}"#), "{out}");
}

#[test]
fn reingest_and_rescan_leave_tables_unchanged() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    ptmscope::mapper::link(&mut store).unwrap();
    let dump = |s: &Store| -> Vec<Vec<u8>> {
        [Table::PtmPackage, Table::Repository, Table::UsageRecord, Table::PtmAppLink, Table::UnmatchedName]
            .into_iter()
            .map(|t| export(s, t, ExportFormat::Csv))
            .collect()
    };
    let before = dump(&store);
    ingest_snapshot(&mut store, "snapshot.jsonl");
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    ptmscope::mapper::link(&mut store).unwrap();
    assert_eq!(dump(&store), before);
}

#[test]
fn csv_and_jsonl_agree_on_row_counts() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    for table in [Table::PtmPackage, Table::Repository] {
        let jsonl = export(&store, table, ExportFormat::JsonLines);
        let csv = export(&store, table, ExportFormat::Csv);
        let mut rdr = csv::Reader::from_reader(csv.as_slice());
        assert_eq!(rdr.records().count(), jsonl.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count());
    }
}

#[test]
fn selector_joins_and_filters() {
    let (_d, mut store) = open_store();
    ingest_snapshot(&mut store, "snapshot.jsonl");
    let repos = std::fs::read(fixtures().join("repos.jsonl")).unwrap();
    store.ingest_repositories(BufReader::new(repos.as_slice())).unwrap();
    scan_dir(&mut store, &fixtures().join("corpus"), &ScanConfig::default(), 1);
    ptmscope::mapper::link(&mut store).unwrap();
    let sel: Selector = "ptm_app_link join repository where repository.stars >= 50".parse().unwrap();
    let mut out = Vec::new();
    let n = export_table(&store, &sel, ExportFormat::JsonLines, &mut out).unwrap();
    // alice (120 stars, one link), dave (300, two links), judy (64, two links)
    assert_eq!(n, 5);
}
