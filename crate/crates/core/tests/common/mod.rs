#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use ptmscope::scanner::{discover_repos, scan_corpus, CorpusRepo, CorpusSummary, ScanConfig};
use ptmscope::signatures::SignatureSet;
use ptmscope::store::Store;
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn labels() -> Value {
    let text = std::fs::read_to_string(fixtures().join("corpus_labels.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// (repo full name, file, line, signature id, model name or "<dynamic>").
pub type RecordKey = (String, String, u32, String, String);

pub fn labeled_records() -> BTreeSet<RecordKey> {
    labels()["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["repo"].as_str().unwrap().to_string(),
                r["file"].as_str().unwrap().to_string(),
                r["line"].as_u64().unwrap() as u32,
                r["signature_id"].as_str().unwrap().to_string(),
                r["model"].as_str().unwrap_or("<dynamic>").to_string(),
            )
        })
        .collect()
}

pub fn stored_records(store: &Store) -> BTreeSet<RecordKey> {
    let repos = store.repositories().unwrap();
    store
        .usage_records()
        .unwrap()
        .into_iter()
        .map(|u| {
            let repo = repos.iter().find(|r| r.id == u.repo_id).unwrap();
            (
                repo.full_name.clone(),
                u.record.file,
                u.record.line,
                u.record.signature_id,
                u.record.model_name.resolved().unwrap_or("<dynamic>").to_string(),
            )
        })
        .collect()
}

pub fn open_store() -> (tempfile::TempDir, Store) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path().join("db")).unwrap();
    (dir, store)
}

pub fn ingest_snapshot(store: &mut Store, name: &str) {
    let r = store
        .ingest_registry_snapshot(BufReader::new(File::open(fixtures().join(name)).unwrap()))
        .unwrap();
    assert!(r.errors.is_empty(), "{:?}", r.errors);
}

pub fn scan_dir(store: &mut Store, corpus: &std::path::Path, config: &ScanConfig, jobs: usize) -> CorpusSummary {
    let repos: Vec<CorpusRepo> = discover_repos(corpus).unwrap();
    for r in &repos {
        store.register_repository(&r.repo).unwrap();
    }
    scan_corpus(store, &repos, &SignatureSet::builtin(), config, jobs).unwrap().0
}

/// Copies a directory tree.
pub fn copy_tree(from: &std::path::Path, to: &std::path::Path) {
    for entry in walkdir::WalkDir::new(from) {
        let entry = entry.unwrap();
        let target = to.join(entry.path().strip_prefix(from).unwrap());
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target).unwrap();
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

pub mod stats_fixture {
    use std::collections::{BTreeMap, BTreeSet};

    use proptest::prelude::*;
    use ptmscope::model::{PtmAppLink, PtmPackage, Registry, Repository};
    use ptmscope::store::{export_table, ExportFormat, Selector, StoredMetadata, Store, Table};
    use ptmscope::MatchStrength;
    use serde_json::{json, Value};

    /// Tag sets and the domain each implies, written out by hand.
    pub const TAGS: &[(&[&str], Option<&str>)] = &[
        (&[], None),
        (&["text-generation", "en"], Some("NLP")),
        (&["image-classification"], Some("CV")),
        (&["automatic-speech-recognition"], Some("Audio")),
        (&["text-to-image", "diffusers"], Some("Multimodal")),
        (&["custom-tag"], None),
    ];
    pub const META_DOMAINS: &[&str] = &["NLP", "CV", "Audio", "Multimodal", "Other"];
    pub const OPTIONAL_FIELDS: &[(&str, fn(u32) -> Value)] = &[
        ("license", |i| json!(format!("lic-{i}"))),
        ("datasets", |i| json!([format!("ds-{i}")])),
        ("languages", |i| json!(["English", format!("l{i}")])),
        ("hardware", |i| json!(format!("{i} x A100"))),
    ];

    #[derive(Debug, Clone)]
    pub struct Row {
        pub tags: usize,
        pub hf: bool,
        pub created: Option<(i32, u32, u32)>,
        pub meta: Option<(Option<usize>, Option<u64>, u8)>,
        pub repos: Vec<u8>,
    }

    pub fn row() -> impl Strategy<Value = Row> {
        (
            0..TAGS.len(),
            any::<bool>(),
            prop::option::weighted(0.9, (2021i32..2024, 1u32..13, 1u32..29)),
            prop::option::weighted(
                0.7,
                (
                    prop::option::of(0..META_DOMAINS.len()),
                    prop::option::of(prop_oneof![0u64..1000, 1_000_000u64..20_000_000_000]),
                    any::<u8>(),
                ),
            ),
            prop::collection::vec(0u8..10, 0..4),
        )
            .prop_map(|(tags, hf, created, meta, repos)| Row { tags, hf, created, meta, repos })
    }

    pub fn rows(n: usize) -> impl Strategy<Value = Vec<Row>> {
        prop::collection::vec(row(), n)
    }

    pub fn populate(store: &mut Store, rows: &[Row]) {
        let mut links = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let registry = if r.hf { Registry::HuggingFace } else { Registry::PyTorchHub };
            let mut pkg = PtmPackage::new(registry, format!("org/model-{i}"));
            pkg.tags = TAGS[r.tags].0.iter().map(|s| s.to_string()).collect();
            pkg.created_at = r
                .created
                .map(|(y, m, d)| ptmscope::model::parse_timestamp(&format!("{y:04}-{m:02}-{d:02}")).unwrap());
            store.upsert_package(&pkg).unwrap();
            if let Some((domain, params, mask)) = r.meta {
                let mut fields = serde_json::Map::new();
                if let Some(d) = domain {
                    fields.insert("domain".into(), json!(META_DOMAINS[d]));
                }
                if let Some(p) = params {
                    fields.insert("parameter_count".into(), json!(p));
                }
                for (bit, (name, value)) in OPTIONAL_FIELDS.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        fields.insert(name.to_string(), value(i as u32));
                    }
                }
                let fields = ptmscope::extract::validate_schema(&Value::Object(fields).to_string()).unwrap();
                store
                    .put_metadata(&StoredMetadata {
                        ptm_id: pkg.id.clone(),
                        mode: "cheap".into(),
                        client_id: "fixture".into(),
                        timestamp: "2024-01-01T00:00:00Z".into(),
                        input_digest: format!("d{i}"),
                        review: json!([]),
                        fields: serde_json::to_value(&fields).unwrap(),
                    })
                    .unwrap();
            }
            for repo in r.repos.iter().collect::<BTreeSet<_>>() {
                let repo = Repository::new("github", format!("o/r{repo}")).unwrap();
                store.register_repository(&repo).unwrap();
                links.push(PtmAppLink {
                    repo_id: repo.id.clone(),
                    ptm_id: pkg.id.clone(),
                    match_strength: MatchStrength::Exact,
                    evidence: vec![format!("{}:m.py:{i}:fixture#0", repo.id.as_str())],
                });
            }
        }
        store.replace_links(&links, &[]).unwrap();
    }

    pub fn export(store: &Store, table: Table) -> Vec<Value> {
        let mut out = Vec::new();
        export_table(store, &Selector::all(table), ExportFormat::JsonLines, &mut out).unwrap();
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    fn tag_domain(tags: &[Value]) -> Option<&'static str> {
        TAGS.iter()
            .find(|(t, _)| t.len() == tags.len() && t.iter().zip(tags).all(|(a, b)| b == a))
            .and_then(|(_, d)| *d)
    }

    fn is_empty(v: &Value) -> bool {
        match v {
            Value::Null => true,
            Value::String(s) => s.trim().is_empty(),
            Value::Array(a) => a.is_empty(),
            Value::Object(o) => o.is_empty(),
            _ => false,
        }
    }

    /// Recomputed from exported rows only: (id -> domain, id -> created month, id -> fields).
    pub struct Exported {
        pub domain: BTreeMap<String, String>,
        pub month: BTreeMap<String, Option<String>>,
        pub fields: BTreeMap<String, Value>,
        pub links: Vec<(String, String)>,
    }

    pub fn exported(store: &Store) -> Exported {
        let fields: BTreeMap<String, Value> = export(store, Table::ExtractedMetadata)
            .into_iter()
            .map(|m| (m["ptm_id"].as_str().unwrap().to_string(), m["fields"].clone()))
            .collect();
        let mut domain = BTreeMap::new();
        let mut month = BTreeMap::new();
        for p in export(store, Table::PtmPackage) {
            let id = p["id"].as_str().unwrap().to_string();
            let d = tag_domain(p["tags"].as_array().unwrap())
                .map(str::to_string)
                .or_else(|| fields.get(&id).and_then(|f| f["domain"].as_str()).map(str::to_string))
                .unwrap_or_else(|| "Other".into());
            domain.insert(id.clone(), d);
            month.insert(id, p["created_at"].as_str().map(|s| s[..7].to_string()));
        }
        let links = export(store, Table::PtmAppLink)
            .into_iter()
            .map(|l| (l["repo_id"].as_str().unwrap().to_string(), l["ptm_id"].as_str().unwrap().to_string()))
            .collect();
        Exported { domain, month, fields, links }
    }

    /// (key, count, proportion) sorted by key.
    pub fn oracle_distribution<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<(String, u64, f64)> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for k in keys {
            *counts.entry(k.to_string()).or_default() += 1;
            total += 1;
        }
        counts.into_iter().map(|(k, c)| (k, c, c as f64 / total as f64)).collect()
    }

    pub fn oracle_domains(e: &Exported) -> Vec<(String, u64, f64)> {
        oracle_distribution(e.domain.values().map(String::as_str))
    }

    pub fn oracle_downstream(e: &Exported) -> Vec<(String, u64, f64)> {
        let pairs: BTreeSet<(&str, &str)> = e.links.iter().map(|(r, p)| (r.as_str(), e.domain[p].as_str())).collect();
        oracle_distribution(pairs.into_iter().map(|(_, d)| d))
    }

    fn next_month(m: &str) -> String {
        let (y, mo): (i32, u32) = (m[..4].parse().unwrap(), m[5..].parse().unwrap());
        if mo == 12 {
            format!("{:04}-01", y + 1)
        } else {
            format!("{y:04}-{:02}", mo + 1)
        }
    }

    /// (month, domain, count) for every month in range and every domain seen.
    pub fn oracle_timeline(e: &Exported) -> Vec<(String, String, u64)> {
        let dated: Vec<(&String, &String)> = e
            .month
            .iter()
            .filter_map(|(id, m)| Some((m.as_ref()?, &e.domain[id])))
            .collect();
        let Some(first) = dated.iter().map(|(m, _)| m.as_str()).min() else {
            return Vec::new();
        };
        let last = dated.iter().map(|(m, _)| m.as_str()).max().unwrap();
        let domains: BTreeSet<&str> = dated.iter().map(|(_, d)| d.as_str()).collect();
        let mut out = Vec::new();
        let mut m = first.to_string();
        loop {
            for d in &domains {
                let n = dated.iter().filter(|(mm, dd)| **mm == m && dd.as_str() == *d).count();
                out.push((m.clone(), d.to_string(), n as u64));
            }
            if m == last {
                break;
            }
            m = next_month(&m);
        }
        out
    }

    /// (month, domain, models, median).
    pub fn oracle_medians(e: &Exported) -> Vec<(String, String, u64, f64)> {
        let mut buckets: BTreeMap<(String, String), Vec<u64>> = BTreeMap::new();
        for (id, m) in &e.month {
            let (Some(m), Some(p)) = (m, e.fields.get(id).and_then(|f| f["parameter_count"].as_u64())) else {
                continue;
            };
            buckets.entry((m.clone(), e.domain[id].clone())).or_default().push(p);
        }
        buckets
            .into_iter()
            .map(|((m, d), mut v)| {
                v.sort();
                let n = v.len();
                let med = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0 };
                (m, d, n as u64, med)
            })
            .collect()
    }

    /// (field, available, total, proportion) in schema order.
    pub fn oracle_availability(e: &Exported) -> Vec<(String, u64, u64, f64)> {
        let total = e.fields.len() as u64;
        ptmscope::extract::FIELDS
            .iter()
            .map(|(f, _)| {
                let n = e.fields.values().filter(|v| !is_empty(&v[*f])).count() as u64;
                (f.to_string(), n, total, if total == 0 { 0.0 } else { n as f64 / total as f64 })
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    fn report(store: &Store, name: &str) -> Vec<Vec<Value>> {
        ptmscope::stats::reports().get(name).unwrap().build(store, None).unwrap().rows
    }

    /// Compares every report with its recomputation; returns the mismatches.
    pub fn compare_all(store: &Store) -> Vec<String> {
        let e = exported(store);
        let mut bad = Vec::new();
        for (name, want) in [("domains", oracle_domains(&e)), ("downstream", oracle_downstream(&e))] {
            let mut got: Vec<(String, u64, f64)> = report(store, name)
                .into_iter()
                .map(|r| (r[0].as_str().unwrap().to_string(), r[1].as_u64().unwrap(), r[2].as_f64().unwrap()))
                .collect();
            got.sort_by(|a, b| a.0.cmp(&b.0));
            let ok = got.len() == want.len()
                && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && g.1 == w.1 && close(g.2, w.2));
            if !ok {
                bad.push(format!("{name}: got {got:?}, want {want:?}"));
            }
        }
        let mut got: Vec<(String, String, u64)> = report(store, "timeline")
            .into_iter()
            .map(|r| (r[0].as_str().unwrap().into(), r[1].as_str().unwrap().into(), r[2].as_u64().unwrap()))
            .collect();
        got.sort();
        if got != oracle_timeline(&e) {
            bad.push(format!("timeline: got {got:?}, want {:?}", oracle_timeline(&e)));
        }
        let mut got: Vec<(String, String, u64, f64)> = report(store, "params")
            .into_iter()
            .map(|r| {
                (
                    r[0].as_str().unwrap().into(),
                    r[1].as_str().unwrap().into(),
                    r[2].as_u64().unwrap(),
                    r[3].as_f64().unwrap(),
                )
            })
            .collect();
        got.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        let want = oracle_medians(&e);
        let ok = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && g.1 == w.1 && g.2 == w.2 && g.3 == w.3);
        if !ok {
            bad.push(format!("params: got {got:?}, want {want:?}"));
        }
        let got: Vec<(String, u64, u64, f64)> = report(store, "availability")
            .into_iter()
            .map(|r| {
                (
                    r[0].as_str().unwrap().into(),
                    r[1].as_u64().unwrap(),
                    r[2].as_u64().unwrap(),
                    r[3].as_f64().unwrap(),
                )
            })
            .collect();
        let want = oracle_availability(&e);
        let ok = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && g.1 == w.1 && g.2 == w.2 && close(g.3, w.3));
        if !ok {
            bad.push(format!("availability: got {got:?}, want {want:?}"));
        }
        bad
    }
}

pub mod generate {
    use proptest::prelude::*;

    pub const SNIPPETS: &[&str] = &[
        "from transformers import AutoModel\n",
        "import transformers as tf\n",
        "from diffusers import DiffusionPipeline\n",
        "import timm\n",
        "import spacy\n",
        "import torch\n",
        "from torchvision.models import resnet50\n",
        "m = AutoModel.from_pretrained('gpt2')\n",
        "t = tf.AutoTokenizer.from_pretrained(NAME)\n",
        "NAME = 'bert-base-uncased'\n",
        "p = DiffusionPipeline.from_pretrained(\"runwayml/stable-diffusion-v1-5\")\n",
        "b = timm.create_model('vit_base_patch16_224', pretrained=True)\n",
        "n = spacy.load('en_core_web_sm')\n",
        "h = torch.hub.load('pytorch/vision', 'resnet18')\n",
        "r = resnet50(weights='IMAGENET1K_V2')\n",
        "# AutoModel.from_pretrained('gpt2')\n",
        "s = \"transformers from_pretrained\"\n",
        "def f(x):\n    return AutoModel.from_pretrained(x)\n",
        "print('hello')\n",
        "def broken(:\n",
    ];

    pub fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<Vec<usize>>>> {
        // repos -> files -> snippet indices
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec(0..SNIPPETS.len(), 0..8), 1..4),
            1..4,
        )
    }

    pub fn write_corpus(root: &std::path::Path, spec: &[Vec<Vec<usize>>]) {
        for (r, files) in spec.iter().enumerate() {
            for (f, lines) in files.iter().enumerate() {
                let dir = root.join(format!("owner{r}__repo{r}"));
                std::fs::create_dir_all(&dir).unwrap();
                let text: String = lines.iter().map(|&i| SNIPPETS[i]).collect();
                std::fs::write(dir.join(format!("m{f}.py")), text).unwrap();
            }
        }
    }

    pub fn word() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-z]{1,10}",
            Just("license".to_string()),
            Just("dataset".to_string()),
            Just("pytorch".to_string()),
            Just("`code`".to_string()),
        ]
    }

    pub fn block() -> impl Strategy<Value = String> {
        prop_oneof![
            (1usize..4, prop::collection::vec(word(), 1..5)).prop_map(|(l, w)| format!("{} {}\n", "#".repeat(l), w.join(" "))),
            prop::collection::vec(word(), 0..120).prop_map(|w| format!("{}\n", w.join(" "))),
            prop::collection::vec(prop::collection::vec(word(), 1..12), 1..6)
                .prop_map(|lines| format!("```\n{}\n```\n", lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>().join("\n"))),
            Just("\n".to_string()),
            Just("\r\n".to_string()),
            Just("   \n".to_string()),
            prop::collection::vec(word(), 1..6).prop_map(|w| format!("- {}\n", w.join(" "))),
        ]
    }

    pub fn card() -> impl Strategy<Value = String> {
        prop::collection::vec(block(), 0..40).prop_map(|b| b.concat())
    }
}

/// Appends loading-call text inside comments and string literals to every
/// Python file under `root`.
pub fn inject_anchors(root: &std::path::Path) {
    let injected = "\n# from transformers import AutoModel\n# AutoModel.from_pretrained(\"gpt2\")\n\
        _S = \"import timm; timm.create_model('resnet50', pretrained=True)\"\n";
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.unwrap();
        if entry.path().extension().is_some_and(|e| e == "py") {
            let mut text = std::fs::read_to_string(entry.path()).unwrap();
            text.push_str(injected);
            std::fs::write(entry.path(), text).unwrap();
        }
    }
}

pub fn write_repo(root: &std::path::Path, repo: &str, text: &str) {
    let dir = root.join(repo);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("main.py"), text).unwrap();
}

/// Two repositories share one model; a third loads two others and has one
/// dynamic call.
pub fn write_mapping_corpus(root: &std::path::Path) {
    write_repo(root, "a__one", "from transformers import AutoModel\nAutoModel.from_pretrained('gpt2')\n");
    write_repo(
        root,
        "b__two",
        "from transformers import AutoModel\nAutoModel.from_pretrained('gpt2')\nAutoModel.from_pretrained('gpt2')\n",
    );
    write_repo(
        root,
        "c__three",
        "from transformers import AutoModel, pipeline\n\
         AutoModel.from_pretrained('bert-base-uncased')\n\
         pipeline('sentiment-analysis', model='distilbert-base-uncased-finetuned-sst-2-english')\n\
         def load(name):\n    return AutoModel.from_pretrained(name)\n",
    );
}

/// (ptm license, repo license) per link of the Sankey fixture.
pub const SANKEY_PAIRS: &[(&str, &str)] = &[
    ("mit", "mit"),
    ("MIT", "mit"),
    ("gpl-3.0-only", "mit"),
    ("apache-2.0", ""),
    ("mit", ""),
    ("openrail", ""),
    ("gpl-3.0-only", ""),
    ("apache-2.0", "gpl-3.0-only"),
];

/// Eight links, one repository and one package per pair.
pub fn sankey_store() -> (tempfile::TempDir, Store) {
    use ptmscope::model::{PtmAppLink, PtmPackage, Registry, Repository};
    let (d, mut store) = open_store();
    let mut links = Vec::new();
    for (i, (ptm, repo)) in SANKEY_PAIRS.iter().enumerate() {
        let mut pkg = PtmPackage::new(Registry::HuggingFace, format!("org/m{i}"));
        pkg.license_raw = Some(ptm.to_string());
        store.upsert_package(&pkg).unwrap();
        let mut r = Repository::new("github", format!("o/r{i}")).unwrap();
        r.license_raw = Some(repo.to_string());
        store.upsert_repository(&r).unwrap();
        links.push(PtmAppLink {
            repo_id: r.id.clone(),
            ptm_id: pkg.id.clone(),
            match_strength: ptmscope::MatchStrength::Exact,
            evidence: vec![format!("o/r{i}:main.py:1:fixture#0")],
        });
    }
    store.replace_links(&links, &[]).unwrap();
    (d, store)
}
