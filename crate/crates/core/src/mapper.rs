//! Application-to-PTM links from scanned usage records.
//!
//! A link is a distinct (repository, package) pair; repeated loads add
//! evidence, not links. Names match exactly first, then by a unique
//! case-insensitive match, which is flagged on the link.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::model::{MatchStrength, ModelName, PtmAppLink, PtmId, PtmPackage, Registry, RepoId};
use crate::store::{Result, StoredUsage, Store, UnmatchedName};

const QUOTES: &[char] = &['"', '\'', '`'];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("model name {0:?} is empty after trimming")]
pub struct Unresolvable(pub String);

/// Trims surrounding whitespace and quote characters; nothing else changes.
pub fn normalize_model_name(raw: &str, _hub: Registry) -> Result<String, Unresolvable> {
    let canonical = raw.trim_matches(|c: char| c.is_whitespace() || QUOTES.contains(&c));
    if canonical.is_empty() {
        Err(Unresolvable(raw.to_string()))
    } else {
        Ok(canonical.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resolution {
    Exact,
    CaseInsensitive,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameResolution {
    pub raw: String,
    pub canonical: String,
    pub matched_ptm: Option<PtmId>,
    pub strength: Resolution,
}

/// Registry names by hub, for exact and case-folded lookup.
#[derive(Debug, Clone, Default)]
pub struct PtmIndex {
    exact: HashMap<(Registry, String), PtmId>,
    folded: HashMap<(Registry, String), Vec<PtmId>>,
}

impl PtmIndex {
    pub fn new<'a>(packages: impl IntoIterator<Item = &'a PtmPackage>) -> Self {
        let mut idx = PtmIndex::default();
        for p in packages {
            idx.exact.insert((p.registry, p.name.clone()), p.id.clone());
            idx.folded
                .entry((p.registry, p.name.to_lowercase()))
                .or_default()
                .push(p.id.clone());
        }
        idx
    }

    pub fn resolve(&self, raw: &str, hub: Registry) -> Result<NameResolution, Unresolvable> {
        let canonical = normalize_model_name(raw, hub)?;
        let (matched_ptm, strength) = if let Some(id) = self.exact.get(&(hub, canonical.clone())) {
            (Some(id.clone()), Resolution::Exact)
        } else {
            match self.folded.get(&(hub, canonical.to_lowercase())).map(Vec::as_slice) {
                Some([only]) => (Some(only.clone()), Resolution::CaseInsensitive),
                _ => (None, Resolution::Unmatched),
            }
        };
        Ok(NameResolution {
            raw: raw.to_string(),
            canonical,
            matched_ptm,
            strength,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub links: usize,
    pub distinct_repos: usize,
    pub distinct_ptms: usize,
    pub case_insensitive_links: usize,
    pub unmatched_names: usize,
    pub dynamic_records: usize,
    pub unresolvable_records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkOutcome {
    pub links: Vec<PtmAppLink>,
    pub unmatched: Vec<UnmatchedName>,
    pub stats: LinkStats,
}

/// Pure matching step over persisted usage records.
pub fn build_links(index: &PtmIndex, usages: &[StoredUsage]) -> LinkOutcome {
    let mut stats = LinkStats::default();
    let mut links: BTreeMap<(RepoId, PtmId), (BTreeSet<String>, bool)> = BTreeMap::new();
    let mut unmatched: BTreeMap<(RepoId, Registry, String), BTreeSet<String>> = BTreeMap::new();
    for u in usages {
        let ModelName::Resolved(raw) = &u.record.model_name else {
            stats.dynamic_records += 1;
            continue;
        };
        let Ok(res) = index.resolve(raw, u.record.hub) else {
            stats.unresolvable_records += 1;
            continue;
        };
        match res.matched_ptm {
            Some(ptm) => {
                let entry = links.entry((u.repo_id.clone(), ptm)).or_default();
                entry.0.insert(u.id.clone());
                entry.1 |= res.strength == Resolution::Exact;
            }
            None => {
                unmatched
                    .entry((u.repo_id.clone(), u.record.hub, res.canonical))
                    .or_default()
                    .insert(u.id.clone());
            }
        }
    }
    let links: Vec<PtmAppLink> = links
        .into_iter()
        .map(|((repo_id, ptm_id), (evidence, exact))| PtmAppLink {
            repo_id,
            ptm_id,
            evidence: evidence.into_iter().collect(),
            match_strength: if exact {
                MatchStrength::Exact
            } else {
                MatchStrength::CaseInsensitive
            },
        })
        .collect();
    stats.links = links.len();
    stats.distinct_repos = links.iter().map(|l| &l.repo_id).collect::<BTreeSet<_>>().len();
    stats.distinct_ptms = links.iter().map(|l| &l.ptm_id).collect::<BTreeSet<_>>().len();
    stats.case_insensitive_links = links
        .iter()
        .filter(|l| l.match_strength == MatchStrength::CaseInsensitive)
        .count();
    stats.unmatched_names = unmatched
        .keys()
        .map(|(_, hub, name)| (hub, name))
        .collect::<BTreeSet<_>>()
        .len();
    let unmatched = unmatched
        .into_iter()
        .map(|((repo_id, hub, name), ev)| UnmatchedName {
            repo_id,
            hub,
            name,
            evidence: ev.into_iter().collect(),
        })
        .collect();
    LinkOutcome {
        links,
        unmatched,
        stats,
    }
}

/// Rebuilds all application links from the persisted scan results.
pub fn link(store: &mut Store) -> Result<LinkStats> {
    let index = PtmIndex::new(&store.packages()?);
    let outcome = build_links(&index, &store.usage_records()?);
    store.replace_links(&outcome.links, &outcome.unmatched)?;
    Ok(outcome.stats)
}

/// Links as CSV: repo, ptm, strength, evidence_count.
pub fn write_links_csv(links: &[PtmAppLink], out: &mut dyn Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repo", "ptm", "strength", "evidence_count"])?;
    for l in links {
        w.write_record([
            l.repo_id.as_str(),
            l.ptm_id.as_str(),
            l.match_strength.as_str(),
            &l.evidence.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
