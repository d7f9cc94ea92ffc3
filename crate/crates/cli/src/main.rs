//! Command-line entry point for the ptmscope pipeline stages.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ptmscope::extract::client::{clients, ClientConfig, LiveConfig};
use ptmscope::extract::retrieve::{scorers, DEFAULT_SCORER};
use ptmscope::extract::{self, ExtractContext, ExtractOptions, Templates};
use ptmscope::license::{self, Matrix};
use ptmscope::scanner::{self, ScanConfig};
use ptmscope::signatures::{load_signatures, SignatureSet};
use ptmscope::stats;
use ptmscope::store::{export_table, ExportFormat, QueryError, Selector};
use ptmscope::store::Store;
use ptmscope::{mapper, Registry};

#[derive(Parser)]
#[command(name = "ptmscope", version, about = "Pre-trained model supply-chain analysis")]
struct Cli {
    /// Log level for the error stream (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DbArg {
    /// Store directory; created if missing.
    #[arg(long)]
    db: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load registry snapshots and repository records.
    Ingest {
        #[command(flatten)]
        db: DbArg,
        /// Newline-delimited JSON package snapshot.
        #[arg(long)]
        snapshot: Vec<PathBuf>,
        /// Newline-delimited JSON repository records.
        #[arg(long)]
        repos: Vec<PathBuf>,
    },
    /// Scan a directory of repository checkouts for model loading calls.
    Scan {
        #[command(flatten)]
        db: DbArg,
        #[arg(long)]
        corpus: PathBuf,
        /// Signature catalog; the built-in catalog when absent.
        #[arg(long)]
        signatures: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Parse every Python file instead of only those containing anchors.
        #[arg(long)]
        no_prefilter: bool,
    },
    /// Resolve scanned model names to packages and rebuild links.
    Map {
        #[command(flatten)]
        db: DbArg,
        /// Write links as CSV (repo, ptm, strength, evidence_count).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect repository licenses and evaluate license flows.
    LicenseCheck {
        #[command(flatten)]
        db: DbArg,
        /// Repository checkouts to detect licenses from, laid out as for `scan`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Compatibility matrix; the built-in matrix when absent.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Output path, repeatable; `.json` writes Sankey nodes/links, anything else the flow table CSV.
        #[arg(long)]
        out: Vec<PathBuf>,
    },
    /// Extract structured metadata from model cards.
    Extract(ExtractArgs),
    /// Write a summary statistics report.
    Stats {
        #[command(flatten)]
        db: DbArg,
        /// One of domains, downstream, timeline, params, availability.
        #[arg(long)]
        report: String,
        /// Output path; `.json` writes JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one registry (HuggingFace or PyTorchHub).
        #[arg(long)]
        registry: Option<Registry>,
    },
    /// Export a table or selection as JSON lines or CSV.
    Export {
        #[command(flatten)]
        db: DbArg,
        /// Table name or selector, e.g. `ptm_app_link join repository where repository.stars >= 10`.
        #[arg(long)]
        select: String,
        #[arg(long, default_value = "jsonl")]
        format: ExportFormat,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    db: DbArg,
    #[arg(long, value_parser = ["cheap", "accurate"])]
    mode: String,
    /// `mock` (scripted with --script, echo otherwise), `echo`, `empty` or `live`.
    #[arg(long)]
    client: String,
    /// JSON rules for the mock client.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Directory with prompt templates; the built-in set when absent.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    #[arg(long, default_value_t = extract::CHEAP_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = extract::ACCURATE_LIMIT)]
    limit: usize,
    /// Ground truth JSON lines; prints accuracy for the labeled models.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4-turbo")]
    model: String,
    /// Environment variable holding the live client credential.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = 60)]
    requests_per_minute: u32,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
}

/// A failure to report with the given exit status.
struct Failure {
    status: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { status: 1, error: e.into() }
    }
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { status: 2, error }
}

fn require_dir(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(anyhow::anyhow!("{what} {} is not a directory", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(anyhow::anyhow!("{what} {} is not a readable file", path.display())))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn ingest(db: &Path, snapshots: &[PathBuf], repos: &[PathBuf]) -> Result<Value, Failure> {
    if snapshots.is_empty() && repos.is_empty() {
        return Err(usage(anyhow::anyhow!("ingest needs --snapshot or --repos")));
    }
    for p in snapshots.iter().chain(repos) {
        require_file(p, "input")?;
    }
    let mut store = Store::open(db)?;
    let (mut packages, mut repositories, mut errors) = (0, 0, 0);
    for p in snapshots {
        let r = store.ingest_registry_snapshot(BufReader::new(File::open(p)?))?;
        for e in &r.errors {
            log::warn!("{}:{}: {}", p.display(), e.line, e.message);
        }
        packages += r.loaded;
        errors += r.errors.len();
    }
    for p in repos {
        let r = store.ingest_repositories(BufReader::new(File::open(p)?))?;
        for e in &r.errors {
            log::warn!("{}:{}: {}", p.display(), e.line, e.message);
        }
        repositories += r.loaded;
        errors += r.errors.len();
    }
    Ok(json!({"loaded": packages + repositories, "packages": packages, "repositories": repositories, "errors": errors}))
}

fn scan(db: &Path, corpus: &Path, signatures: Option<&Path>, jobs: u16, no_prefilter: bool) -> Result<Value, Failure> {
    require_dir(corpus, "corpus")?;
    if let Some(p) = signatures {
        require_file(p, "signature catalog")?;
    }
    let set = match signatures {
        Some(p) => load_signatures(p)?,
        None => SignatureSet::builtin(),
    };
    let mut store = Store::open(db)?;
    let repos = scanner::discover_repos(corpus)?;
    for r in &repos {
        store.register_repository(&r.repo)?;
    }
    let config = ScanConfig {
        prefilter: !no_prefilter,
        ..ScanConfig::default()
    };
    let (summary, results) = scanner::scan_corpus(&mut store, &repos, &set, &config, usize::from(jobs))?;
    let files_seen: usize = results.iter().map(|r| r.files_seen).sum();
    let files_parsed: usize = results.iter().map(|r| r.files_parsed).sum();
    let mut v = serde_json::to_value(summary)?;
    v["files_seen"] = json!(files_seen);
    v["files_parsed"] = json!(files_parsed);
    if summary.repos_failed > 0 {
        return Err(anyhow::anyhow!("{} repositories could not be scanned", summary.repos_failed).into());
    }
    Ok(v)
}

fn map(db: &Path, out: Option<&Path>) -> Result<Value, Failure> {
    let mut store = Store::open(db)?;
    let stats = mapper::link(&mut store)?;
    if let Some(path) = out {
        let mut w = create(path)?;
        mapper::write_links_csv(&store.links()?, &mut w)?;
        w.flush()?;
    }
    Ok(serde_json::to_value(stats)?)
}

fn license_check(
    db: &Path,
    corpus: Option<&Path>,
    matrix: Option<&Path>,
    outs: &[PathBuf],
) -> Result<Value, Failure> {
    if let Some(c) = corpus {
        require_dir(c, "corpus")?;
    }
    if let Some(m) = matrix {
        require_file(m, "matrix")?;
    }
    let matrix = match matrix {
        Some(p) => Matrix::load(p)?,
        None => Matrix::builtin(),
    };
    let mut store = Store::open(db)?;
    let mut detected = 0;
    if let Some(c) = corpus {
        for r in scanner::discover_repos(c)? {
            store.register_repository(&r.repo)?;
            let class = license::detect_repo_license(&r.root)?;
            store.set_repository_license(&r.repo.id, Some(&class.spdx_like))?;
            detected += 1;
        }
    }
    let table = license::license_flows(&store, &matrix)?;
    for path in outs {
        let mut w = create(path)?;
        if is_json(path) {
            serde_json::to_writer_pretty(&mut w, &license::sankey_json(&table))?;
        } else {
            table.write_csv(&mut w)?;
        }
        w.flush()?;
    }
    let mut v = serde_json::to_value(table.summary)?;
    v["repos_detected"] = json!(detected);
    v["rows"] = json!(table.rows.len());
    Ok(v)
}

fn run_extract(a: &ExtractArgs) -> Result<Value, Failure> {
    if let Some(p) = &a.script {
        require_file(p, "script")?;
    }
    if let Some(p) = &a.truth {
        require_file(p, "ground truth")?;
    }
    if let Some(p) = &a.templates {
        require_dir(p, "templates")?;
    }
    let registry = clients();
    let factory = registry.get(&a.client).map_err(|e| usage(e.into()))?;
    let config = ClientConfig {
        script: a.script.clone(),
        live: LiveConfig {
            endpoint: a.endpoint.clone(),
            api_key_env: a.api_key_env.clone(),
            model: a.model.clone(),
            timeout: Duration::from_secs(a.timeout_secs),
            requests_per_minute: a.requests_per_minute,
        },
    };
    let client = factory.build(&config)?;
    let templates = match &a.templates {
        Some(dir) => Templates::load(dir)?,
        None => Templates::builtin(),
    };
    let scorers = scorers();
    let ctx = ExtractContext {
        client: client.as_ref(),
        templates: &templates,
        scorer: scorers.get(DEFAULT_SCORER)?,
        options: ExtractOptions {
            budget: a.budget,
            limit: a.limit,
            ..ExtractOptions::default()
        },
    };
    let mut store = Store::open(&a.db.db)?;
    let summary = extract::extract_store(&mut store, &a.mode, &ctx, usize::from(a.jobs))?;
    let links = extract::derive_ptm_ptm_links(&mut store)?;
    let mut v = serde_json::to_value(summary)?;
    v["ptm_ptm_links"] = json!(links);
    if let Some(path) = &a.truth {
        let truth = extract::parse_truth_jsonl(&std::fs::read_to_string(path)?)?;
        let all = extract::stored_fields(&store)?;
        let labeled = all
            .into_iter()
            .filter(|(id, _)| truth.iter().any(|t| &t.ptm_id == id))
            .collect();
        let acc = extract::evaluate_accuracy(&labeled, &truth)?;
        v["accuracy"] = json!(acc.accuracy);
        v["fields_compared"] = json!(acc.total);
        v["fields_matched"] = json!(acc.matches);
    }
    if summary.failed > 0 {
        return Err(anyhow::anyhow!("{} card(s) failed extraction", summary.failed).into());
    }
    Ok(v)
}

fn run_stats(db: &Path, report: &str, out: &Path, registry: Option<Registry>) -> Result<Value, Failure> {
    let reports = stats::reports();
    let builder = reports.get(report).map_err(|e| usage(e.into()))?;
    let store = Store::open_read_only(db)?;
    let table = builder.build(&store, registry)?;
    let mut w = create(out)?;
    if is_json(out) {
        serde_json::to_writer_pretty(&mut w, &table.to_json())?;
    } else {
        table.write_csv(&mut w)?;
    }
    w.flush()?;
    Ok(json!({"report": report, "rows": table.rows.len(), "out": out.display().to_string()}))
}

fn export(db: &Path, select: &str, format: ExportFormat, out: Option<&Path>) -> Result<Value, Failure> {
    let selector: Selector = select.parse().map_err(|e: QueryError| usage(e.into()))?;
    let store = Store::open_read_only(db)?;
    let rows = match out {
        Some(path) => {
            let mut w = create(path)?;
            let n = export_table(&store, &selector, format, &mut w)?;
            w.flush()?;
            n
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let n = export_table(&store, &selector, format, &mut lock)?;
            lock.flush()?;
            n
        }
    };
    Ok(json!({"rows": rows}))
}

fn dispatch(cli: &Cli) -> (&'static str, Result<Value, Failure>) {
    match &cli.command {
        Command::Ingest { db, snapshot, repos } => ("ingest", ingest(&db.db, snapshot, repos)),
        Command::Scan {
            db,
            corpus,
            signatures,
            jobs,
            no_prefilter,
        } => ("scan", scan(&db.db, corpus, signatures.as_deref(), *jobs, *no_prefilter)),
        Command::Map { db, out } => ("map", map(&db.db, out.as_deref())),
        Command::LicenseCheck {
            db,
            corpus,
            matrix,
            out,
        } => ("license-check", license_check(&db.db, corpus.as_deref(), matrix.as_deref(), out)),
        Command::Extract(a) => ("extract", run_extract(a)),
        Command::Stats {
            db,
            report,
            out,
            registry,
        } => ("stats", run_stats(&db.db, report, out, *registry)),
        Command::Export { db, select, format, out } => ("export", export(&db.db, select, *format, out.as_deref())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).init();
    let (command, outcome) = dispatch(&cli);
    let (status, mut summary) = match outcome {
        Ok(v) => (0, v),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            (f.status, json!({"error": format!("{:#}", f.error)}))
        }
    };
    if let Value::Object(m) = &mut summary {
        m.insert("command".into(), json!(command));
        m.insert("status".into(), json!(if status == 0 { "ok" } else { "error" }));
    }
    let _ = writeln!(std::io::stdout(), "{summary}");
    ExitCode::from(status)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::bail;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn zero_jobs_is_rejected() {
        let r = Cli::try_parse_from(["ptmscope", "scan", "--db", "d", "--corpus", "c", "--jobs", "0"]);
        assert!(r.is_err());
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let r = Cli::try_parse_from(["ptmscope", "extract", "--db", "d", "--mode", "fast", "--client", "mock"]);
        assert!(r.is_err());
    }

    #[test]
    fn bail_is_stage_failure() {
        fn f() -> Result<(), Failure> {
            bail_stage()?;
            Ok(())
        }
        fn bail_stage() -> Result<()> {
            bail!("boom")
        }
        assert_eq!(f().err().map(|e| e.status), Some(1));
    }
}
