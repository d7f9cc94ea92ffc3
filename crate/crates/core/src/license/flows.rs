//! License flow aggregation over PTM-to-application links.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use super::{check_compatibility, classify_license, LicenseCategory, Matrix, Verdict};
use crate::model::{PtmId, RepoId};
use crate::store::{Result, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowRow {
    pub ptm_license: String,
    pub repo_license: String,
    pub pair_count: usize,
    pub verdict: Verdict,
}

/// Percentages over counted link pairs; all zero when `pairs` is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FlowSummary {
    pub pairs: usize,
    pub identical_pct: f64,
    pub compatible_pct: f64,
    pub incompatible_pct: f64,
    pub unanalyzed_pct: f64,
    pub no_license_downstream_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlowTable {
    pub rows: Vec<FlowRow>,
    pub summary: FlowSummary,
}

impl FlowTable {
    /// Aggregates (ptm license, repo license) pairs, one per link.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, matrix: &Matrix) -> FlowTable {
        let mut counts: BTreeMap<(String, String), (usize, Verdict)> = BTreeMap::new();
        let (mut total, mut identical, mut no_license) = (0usize, 0usize, 0usize);
        let mut by_verdict: HashMap<Verdict, usize> = HashMap::new();
        for (ptm_raw, repo_raw) in pairs {
            let up = classify_license(ptm_raw);
            let down = classify_license(repo_raw);
            let v = check_compatibility(&up, &down, matrix).verdict;
            total += 1;
            *by_verdict.entry(v).or_default() += 1;
            if up == down && up.category.is_analyzed() {
                identical += 1;
            }
            if down.category == LicenseCategory::NoLicense {
                no_license += 1;
            }
            counts.entry((up.spdx_like, down.spdx_like)).or_insert((0, v)).0 += 1;
        }
        let pct = |n: usize| if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
        let verdict = |v| by_verdict.get(&v).copied().unwrap_or(0);
        FlowTable {
            rows: counts
                .into_iter()
                .map(|((ptm_license, repo_license), (pair_count, verdict))| FlowRow {
                    ptm_license,
                    repo_license,
                    pair_count,
                    verdict,
                })
                .collect(),
            summary: FlowSummary {
                pairs: total,
                identical_pct: pct(identical),
                compatible_pct: pct(verdict(Verdict::Compatible)),
                incompatible_pct: pct(verdict(Verdict::Incompatible)),
                unanalyzed_pct: pct(verdict(Verdict::Unanalyzed)),
                no_license_downstream_pct: pct(no_license),
            },
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ptm_license", "repo_license", "pair_count", "verdict"])?;
        for r in &self.rows {
            w.write_record([
                r.ptm_license.as_str(),
                r.repo_license.as_str(),
                &r.pair_count.to_string(),
                r.verdict.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flow table for every link whose package and repository both have a
/// recorded license. An empty recorded value counts as no-license.
pub fn license_flows(store: &Store, matrix: &Matrix) -> Result<FlowTable> {
    let ptm: HashMap<PtmId, Option<String>> = store
        .packages()?
        .into_iter()
        .map(|p| (p.id, p.license_raw))
        .collect();
    let repo: HashMap<RepoId, Option<String>> = store
        .repositories()?
        .into_iter()
        .map(|r| (r.id, r.license_raw))
        .collect();
    let links = store.links()?;
    let pairs = links.iter().filter_map(|l| {
        let up = ptm.get(&l.ptm_id)?.as_deref()?;
        let down = repo.get(&l.repo_id)?.as_deref()?;
        Some((up, down))
    });
    Ok(FlowTable::from_pairs(pairs, matrix))
}

/// Nodes/links document for Sankey plotting: PTM licenses on the left,
/// application licenses on the right.
pub fn sankey_json(table: &FlowTable) -> Value {
    let mut nodes: Vec<String> = Vec::new();
    let index = |name: String, nodes: &mut Vec<String>| match nodes.iter().position(|n| *n == name) {
        Some(i) => i,
        None => {
            nodes.push(name);
            nodes.len() - 1
        }
    };
    let mut links = Vec::new();
    for r in &table.rows {
        let source = index(format!("PTM: {}", r.ptm_license), &mut nodes);
        let target = index(format!("App: {}", r.repo_license), &mut nodes);
        links.push(json!({
            "source": source,
            "target": target,
            "value": r.pair_count,
            "verdict": r.verdict.as_str(),
        }));
    }
    json!({
        "nodes": nodes.into_iter().map(|name| json!({"name": name})).collect::<Vec<_>>(),
        "links": links,
        "summary": table.summary,
    })
}
