//! Expected number of extractable facts per (domain, property): `links × freq × acc`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::best_mentions;
use crate::error::{Error, Result};
use crate::extract::{extract_all, ExtractionQuery, ExtractorBackend, DEFAULT_BATCH_SIZE};
use crate::html::CleanDocument;
use crate::kg::PropertyId;
use crate::util::write_atomic;

/// Exact fraction in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Precondition(format!("ratio {num}/0")));
        }
        if num > den {
            return Err(Error::Precondition(format!("ratio {num}/{den} exceeds 1")));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainPropertyStats {
    pub domain: PropertyId,
    pub property: PropertyId,
    /// Entities with a page in the domain that lack the property.
    pub links: u64,
    /// Share of sampled pages where the value can be found; `den` is the sample size.
    pub freq: Ratio,
    /// End-to-end accuracy after linking.
    pub acc: Ratio,
}

/// `floor(links × freq × acc)` in exact integer arithmetic.
pub fn estimate_facts(s: &DomainPropertyStats) -> u64 {
    let num = u128::from(s.links) * u128::from(s.freq.num) * u128::from(s.acc.num);
    let den = u128::from(s.freq.den) * u128::from(s.acc.den);
    // freq, acc ≤ 1 so the result never exceeds links
    (num / den) as u64
}

/// Fraction of pages on which distant-supervision matching finds any of the value's names.
pub fn measure_freq(sample: &[(CleanDocument, std::collections::BTreeSet<String>)]) -> Result<Ratio> {
    if sample.is_empty() {
        return Err(Error::Precondition("empty page sample".into()));
    }
    let hits = sample
        .iter()
        .filter(|(doc, names)| !best_mentions(doc, names).is_empty())
        .count();
    Ratio::new(hits as u64, sample.len() as u64)
}

/// Fraction of pages on which the backend returns a non-empty span for `question`.
pub fn measure_freq_with_backend(
    pages: &[CleanDocument],
    question: &str,
    backend: &dyn ExtractorBackend,
) -> Result<Ratio> {
    if pages.is_empty() {
        return Err(Error::Precondition("empty page sample".into()));
    }
    let queries = pages
        .iter()
        .enumerate()
        .map(|(i, d)| ExtractionQuery::new(format!("freq-{i}"), question, d.clone()))
        .collect::<Result<Vec<_>>>()?;
    let hits = extract_all(&queries, backend, DEFAULT_BATCH_SIZE)?
        .iter()
        .filter(|p| !p.is_empty())
        .count();
    Ratio::new(hits as u64, pages.len() as u64)
}

/// One CSV/JSON row: the stats columns plus the estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub domain_pid: PropertyId,
    pub property_pid: PropertyId,
    pub links: u64,
    pub freq_num: u64,
    pub freq_den: u64,
    pub acc_num: u64,
    pub acc_den: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<u64>,
}

impl TryFrom<StatsRow> for DomainPropertyStats {
    type Error = Error;

    fn try_from(r: StatsRow) -> Result<Self> {
        Ok(Self {
            freq: Ratio::new(r.freq_num, r.freq_den)?,
            acc: Ratio::new(r.acc_num, r.acc_den)?,
            domain: r.domain_pid,
            property: r.property_pid,
            links: r.links,
        })
    }
}

impl From<&DomainPropertyStats> for StatsRow {
    fn from(s: &DomainPropertyStats) -> Self {
        Self {
            domain_pid: s.domain.clone(),
            property_pid: s.property.clone(),
            links: s.links,
            freq_num: s.freq.num,
            freq_den: s.freq.den,
            acc_num: s.acc.num,
            acc_den: s.acc.den,
            estimate: Some(estimate_facts(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub total: u64,
    /// Sorted by estimate, largest first.
    pub rows: Vec<StatsRow>,
}

pub fn aggregate(stats: &[DomainPropertyStats]) -> Totals {
    let mut rows: Vec<StatsRow> = stats.iter().map(StatsRow::from).collect();
    rows.sort_by(|a, b| {
        b.estimate
            .cmp(&a.estimate)
            .then_with(|| a.domain_pid.cmp(&b.domain_pid))
            .then_with(|| a.property_pid.cmp(&b.property_pid))
    });
    Totals {
        total: rows.iter().filter_map(|r| r.estimate).sum(),
        rows,
    }
}

pub fn parse_stats_csv(text: &str) -> Result<Vec<DomainPropertyStats>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize::<StatsRow>()
        .map(|r| DomainPropertyStats::try_from(r?))
        .collect()
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<DomainPropertyStats>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stats_csv(&text)
}

pub fn totals_csv(t: &Totals) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &t.rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `totals.json` and `totals.csv` into `dir`.
pub fn write_totals(dir: &Path, t: &Totals) -> Result<()> {
    write_atomic(&dir.join("totals.json"), serde_json::to_string_pretty(t)?.as_bytes())?;
    write_atomic(&dir.join("totals.csv"), totals_csv(t)?.as_bytes())
}

/// `11866` → `"11,866"`.
pub fn group_thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
