//! Summary statistics over the store, as plot-ready tables.
//!
//! A package's domain comes from its registry tags, then from extracted
//! metadata, and is `Other` when neither gives one. Time buckets are
//! calendar months in UTC.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use chrono::{DateTime, Datelike, Utc};
use serde::Serialize;
use serde_json::{json, Value};

use crate::extract::{stored_fields, MetadataFields, FIELDS};
use crate::model::{PtmId, PtmPackage, Registry};
use crate::store::{Result, Store};
use crate::strategy::StrategyRegistry;
use crate::taxonomy::{classify_tags, Domain};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub key: String,
    pub count: usize,
    pub proportion: f64,
}

/// Counts per key with proportions, largest first, ties by key.
pub fn distribution<I, K>(keys: I) -> Vec<DistributionRow>
where
    I: IntoIterator<Item = K>,
    K: Into<String>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for k in keys {
        *counts.entry(k.into()).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let mut rows: Vec<DistributionRow> = counts
        .into_iter()
        .map(|(key, count)| DistributionRow {
            key,
            count,
            proportion: count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
    rows
}

pub fn package_domain(pkg: &PtmPackage, meta: Option<&MetadataFields>) -> Domain {
    classify_tags(&pkg.tags)
        .domain
        .or_else(|| meta.and_then(|m| m.domain))
        .unwrap_or(Domain::Other)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Ptms,
    Downstream,
}

struct Snapshot {
    packages: Vec<PtmPackage>,
    meta: BTreeMap<String, MetadataFields>,
}

impl Snapshot {
    fn read(store: &Store, registry: Option<Registry>) -> Result<Snapshot> {
        let packages = store
            .packages()?
            .into_iter()
            .filter(|p| registry.is_none_or(|r| p.registry == r))
            .collect();
        Ok(Snapshot {
            packages,
            meta: stored_fields(store)?,
        })
    }

    fn domain(&self, pkg: &PtmPackage) -> Domain {
        package_domain(pkg, self.meta.get(pkg.id.as_str()))
    }
}

/// Domain shares of packages, or of downstream reuse. Downstream counts each
/// (repository, domain) pair once, however many packages of that domain the
/// repository loads.
pub fn domain_distribution(store: &Store, side: Side, registry: Option<Registry>) -> Result<Vec<DistributionRow>> {
    let snap = Snapshot::read(store, registry)?;
    Ok(match side {
        Side::Ptms => distribution(snap.packages.iter().map(|p| snap.domain(p).as_str())),
        Side::Downstream => {
            let domains: HashMap<&PtmId, Domain> = snap.packages.iter().map(|p| (&p.id, snap.domain(p))).collect();
            let pairs: BTreeSet<(String, Domain)> = store
                .links()?
                .into_iter()
                .filter_map(|l| Some((l.repo_id.0, *domains.get(&l.ptm_id)?)))
                .collect();
            distribution(pairs.into_iter().map(|(_, d)| d.as_str()))
        }
    })
}

/// `YYYY-MM` bucket of a timestamp.
pub fn month_key(ts: &DateTime<Utc>) -> String {
    format!("{:04}-{:02}", ts.year(), ts.month())
}

fn month_index(ts: &DateTime<Utc>) -> i64 {
    i64::from(ts.year()) * 12 + i64::from(ts.month0())
}

fn index_key(i: i64) -> String {
    format!("{:04}-{:02}", i.div_euclid(12), i.rem_euclid(12) + 1)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TimeSeries {
    /// Contiguous months from the earliest to the latest item.
    pub months: Vec<String>,
    pub series: BTreeMap<Domain, Vec<usize>>,
}

impl TimeSeries {
    /// Per-month totals across domains.
    pub fn totals(&self) -> Vec<usize> {
        (0..self.months.len())
            .map(|i| self.series.values().map(|s| s[i]).sum())
            .collect()
    }
}

pub fn monthly_counts(items: &[(DateTime<Utc>, Domain)]) -> TimeSeries {
    let Some(first) = items.iter().map(|(t, _)| month_index(t)).min() else {
        return TimeSeries::default();
    };
    let last = items.iter().map(|(t, _)| month_index(t)).max().expect("non-empty");
    let len = (last - first + 1) as usize;
    let mut series: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for (t, d) in items {
        series.entry(*d).or_insert_with(|| vec![0; len])[(month_index(t) - first) as usize] += 1;
    }
    TimeSeries {
        months: (first..=last).map(index_key).collect(),
        series,
    }
}

/// Packages with a creation time, bucketed by month and domain.
pub fn creation_time_series(store: &Store, registry: Option<Registry>) -> Result<TimeSeries> {
    let snap = Snapshot::read(store, registry)?;
    let items: Vec<_> = snap
        .packages
        .iter()
        .filter_map(|p| Some((p.created_at?, snap.domain(p))))
        .collect();
    Ok(monthly_counts(&items))
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &mut [u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (u128::from(values[n / 2 - 1]) + u128::from(values[n / 2])) as f64 / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub month: String,
    pub domain: Domain,
    pub models: usize,
    pub median_parameters: f64,
}

/// One row per (month, domain) that has data, ordered by month then domain.
pub fn monthly_medians(items: &[(DateTime<Utc>, Domain, u64)]) -> Vec<MedianRow> {
    let mut buckets: BTreeMap<(String, Domain), Vec<u64>> = BTreeMap::new();
    for (t, d, n) in items {
        buckets.entry((month_key(t), *d)).or_default().push(*n);
    }
    buckets
        .into_iter()
        .map(|((month, domain), mut values)| MedianRow {
            month,
            domain,
            models: values.len(),
            median_parameters: median(&mut values).expect("bucket has values"),
        })
        .collect()
}

pub fn parameter_median_series(store: &Store, registry: Option<Registry>) -> Result<Vec<MedianRow>> {
    let snap = Snapshot::read(store, registry)?;
    let items: Vec<_> = snap
        .packages
        .iter()
        .filter_map(|p| {
            let count = snap.meta.get(p.id.as_str())?.parameter_count?;
            Some((p.created_at?, snap.domain(p), count))
        })
        .collect();
    Ok(monthly_medians(&items))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvailabilityRow {
    pub field: String,
    pub available: usize,
    pub total: usize,
    pub proportion: f64,
}

/// Share of records with a non-empty value, for every schema field.
pub fn availability<'a>(records: impl IntoIterator<Item = &'a MetadataFields>) -> Vec<AvailabilityRow> {
    let mut available: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0;
    for r in records {
        total += 1;
        for f in r.populated() {
            *available.entry(f).or_default() += 1;
        }
    }
    FIELDS
        .iter()
        .map(|(f, _)| {
            let n = available.get(f).copied().unwrap_or(0);
            AvailabilityRow {
                field: f.to_string(),
                available: n,
                total,
                proportion: if total == 0 { 0.0 } else { n as f64 / total as f64 },
            }
        })
        .collect()
}

pub fn metadata_availability(store: &Store, registry: Option<Registry>) -> Result<Vec<AvailabilityRow>> {
    let snap = Snapshot::read(store, registry)?;
    let ids: BTreeSet<&str> = snap.packages.iter().map(|p| p.id.as_str()).collect();
    Ok(availability(
        snap.meta.iter().filter(|(id, _)| ids.contains(id.as_str())).map(|(_, m)| m),
    ))
}

/// A report as columns and rows, writable as CSV or JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ReportTable {
    fn new(columns: &[&str]) -> Self {
        ReportTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
        }
        w.flush()?;
        Ok(())
    }

    /// An array of objects keyed by column name.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect(),
        )
    }
}

pub trait Report: Send + Sync {
    fn build(&self, store: &Store, registry: Option<Registry>) -> Result<ReportTable>;
}

impl<F> Report for F
where
    F: Fn(&Store, Option<Registry>) -> Result<ReportTable> + Send + Sync,
{
    fn build(&self, store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
        self(store, registry)
    }
}

fn distribution_table(rows: Vec<DistributionRow>) -> ReportTable {
    let mut t = ReportTable::new(&["domain", "count", "proportion"]);
    t.rows = rows
        .into_iter()
        .map(|r| vec![json!(r.key), json!(r.count), json!(r.proportion)])
        .collect();
    t
}

fn domains_report(store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
    domain_distribution(store, Side::Ptms, registry).map(distribution_table)
}

fn downstream_report(store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
    domain_distribution(store, Side::Downstream, registry).map(distribution_table)
}

fn timeline_report(store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
    let ts = creation_time_series(store, registry)?;
    let mut t = ReportTable::new(&["month", "domain", "count"]);
    for (i, month) in ts.months.iter().enumerate() {
        for (domain, counts) in &ts.series {
            t.rows.push(vec![json!(month), json!(domain.as_str()), json!(counts[i])]);
        }
    }
    Ok(t)
}

fn params_report(store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
    let mut t = ReportTable::new(&["month", "domain", "models", "median_parameters"]);
    t.rows = parameter_median_series(store, registry)?
        .into_iter()
        .map(|r| vec![json!(r.month), json!(r.domain.as_str()), json!(r.models), json!(r.median_parameters)])
        .collect();
    Ok(t)
}

fn availability_report(store: &Store, registry: Option<Registry>) -> Result<ReportTable> {
    let mut t = ReportTable::new(&["field", "available", "total", "proportion"]);
    t.rows = metadata_availability(store, registry)?
        .into_iter()
        .map(|r| vec![json!(r.field), json!(r.available), json!(r.total), json!(r.proportion)])
        .collect();
    Ok(t)
}

/// Report columns:
/// - `domains`, `downstream`: domain, count, proportion
/// - `timeline`: month, domain, count
/// - `params`: month, domain, models, median_parameters
/// - `availability`: field, available, total, proportion
pub fn reports() -> StrategyRegistry<dyn Report> {
    let mut reg: StrategyRegistry<dyn Report> = StrategyRegistry::new("stats report");
    reg.register("domains", Box::new(domains_report));
    reg.register("downstream", Box::new(downstream_report));
    reg.register("timeline", Box::new(timeline_report));
    reg.register("params", Box::new(params_report));
    reg.register("availability", Box::new(availability_report));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::validate_schema;

    fn at(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    #[test]
    fn three_to_one() {
        let rows = distribution(["NLP", "NLP", "CV", "NLP"]);
        assert_eq!(rows[0].key, "NLP");
        assert_eq!(rows[0].proportion, 0.75);
        assert_eq!(rows[1].proportion, 0.25);
        assert!(distribution(Vec::<String>::new()).is_empty());
    }

    #[test]
    fn zero_filled_months() {
        let ts = monthly_counts(&[
            (at("2023-01-05T00:00:00Z"), Domain::Nlp),
            (at("2023-01-31T23:59:59Z"), Domain::Cv),
            (at("2023-03-01T00:00:00Z"), Domain::Nlp),
        ]);
        assert_eq!(ts.months, vec!["2023-01", "2023-02", "2023-03"]);
        assert_eq!(ts.totals(), vec![2, 0, 1]);
        assert_eq!(ts.series[&Domain::Nlp], vec![1, 0, 1]);
        assert_eq!(monthly_counts(&[]), TimeSeries::default());
    }

    #[test]
    fn year_boundary() {
        let ts = monthly_counts(&[(at("2022-11-01T00:00:00Z"), Domain::Nlp), (at("2023-02-01T00:00:00Z"), Domain::Nlp)]);
        assert_eq!(ts.months, vec!["2022-11", "2022-12", "2023-01", "2023-02"]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [1_000_000, 3_000_000]), Some(2_000_000.0));
        assert_eq!(median(&mut [7]), Some(7.0));
        assert_eq!(median(&mut [5, 1, 3]), Some(3.0));
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [u64::MAX, u64::MAX]), Some(u64::MAX as f64));
        let rows = monthly_medians(&[
            (at("2023-01-01T00:00:00Z"), Domain::Nlp, 1_000_000),
            (at("2023-01-09T00:00:00Z"), Domain::Nlp, 3_000_000),
            (at("2023-03-01T00:00:00Z"), Domain::Cv, 5),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].median_parameters, 2_000_000.0);
    }

    #[test]
    fn availability_shares() {
        let recs: Vec<MetadataFields> = [r#"{"license": "mit"}"#, r#"{"license": "mit"}"#, r#"{"license": "x"}"#, "{}"]
            .iter()
            .map(|j| validate_schema(j).unwrap())
            .collect();
        let rows = availability(&recs);
        let license = rows.iter().find(|r| r.field == "license").unwrap();
        assert_eq!(license.proportion, 0.75);
        let grants = rows.iter().find(|r| r.field == "grants").unwrap();
        assert_eq!(grants.proportion, 0.0);
    }

    #[test]
    fn domain_precedence() {
        let mut p = PtmPackage::new(Registry::HuggingFace, "m");
        let meta = validate_schema(r#"{"domain": "CV"}"#).unwrap();
        assert_eq!(package_domain(&p, Some(&meta)), Domain::Cv);
        assert_eq!(package_domain(&p, None), Domain::Other);
        p.tags = vec!["fill-mask".into()];
        assert_eq!(package_domain(&p, Some(&meta)), Domain::Nlp);
    }

    #[test]
    fn report_table_formats() {
        let t = distribution_table(distribution(["NLP", "CV"]));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "domain,count,proportion\nCV,1,0.5\nNLP,1,0.5\n");
        assert_eq!(t.to_json()[0]["domain"], "CV");
        assert_eq!(reports().names(), vec!["availability", "domains", "downstream", "params", "timeline"]);
    }
}
