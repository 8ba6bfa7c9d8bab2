//! Batch conversion of a directory of bundles, with the status taxonomy and
//! reconversion cost accounting.
//!
//! # Report format
//!
//! `report.json` is a single object:
//!
//! | field | type | meaning |
//! |---|---|---|
//! | `total` | integer | bundles seen |
//! | `perStatus` | object | count per status, all four keys always present |
//! | `errorRate` | number | (ErrorsButReadable + Failed) / total, 0 when empty |
//! | `failRate` | number | Failed / total, 0 when empty |
//! | `costPerArticle` | string | decimal US dollars |
//! | `costEstimate` | string | total × costPerArticle, exact decimal |
//! | `elapsedSeconds` | number | wall-clock time of the batch |
//! | `converterVersion` | string | version that produced the records |
//! | `papers` | array | one record per bundle, sorted by `paperId` |
//!
//! Each paper record has `paperId`, `status`, `converterVersion`,
//! `unknownPackages` (sorted array), `errors`, `warnings`, `infos` and
//! `timingMs`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Add;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diag::{Code, Diagnostic, Severity, Stage};
use crate::pipeline::{convert, ConversionResult, ConvertOptions, SourceBundle, Status};
use crate::registry::PackageRegistry;
use crate::CONVERTER_VERSION;

/// An exact amount of US dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Usd(pub Decimal);

impl Usd {
    pub const ZERO: Usd = Usd(Decimal::ZERO);

    pub fn new(amount: Decimal) -> Self {
        Usd(amount)
    }
}

impl FromStr for Usd {
    type Err = rust_decimal::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_prefix('$').unwrap_or(s).replace(',', "");
        Decimal::from_str(&s).map(Usd)
    }
}

impl Add for Usd {
    type Output = Usd;

    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl fmt::Display for Usd {
    /// `$30,000.00` style: at least two decimals, thousands separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = self.0.normalize();
        if d.scale() < 2 {
            d.rescale(2);
        }
        let text = d.abs().to_string();
        let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
        let mut grouped = String::new();
        for (i, c) in int.chars().enumerate() {
            if i > 0 && (int.len() - i) % 3 == 0 {
                grouped.push(',');
            }
            grouped.push(c);
        }
        let sign = if d.is_sign_negative() && !d.is_zero() { "-" } else { "" };
        write!(f, "{sign}${grouped}.{frac}")
    }
}

impl Serialize for Usd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.normalize().to_string())
    }
}

impl<'de> Deserialize<'de> for Usd {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => Usd::from_str(&s).map_err(serde::de::Error::custom),
            Raw::Number(n) => Decimal::try_from(n).map(Usd).map_err(serde::de::Error::custom),
        }
    }
}

/// Cost of converting `articles` papers at `per_article` each. Exact.
pub fn estimate_cost(articles: u64, per_article: Usd) -> Usd {
    Usd(Decimal::from(articles) * per_article.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PaperRecord {
    pub paper_id: String,
    pub status: Status,
    pub converter_version: String,
    pub unknown_packages: BTreeSet<String>,
    #[serde(default)]
    pub errors: usize,
    #[serde(default)]
    pub warnings: usize,
    #[serde(default)]
    pub infos: usize,
    #[serde(default)]
    pub timing_ms: u64,
}

impl PaperRecord {
    pub fn from_result(result: &ConversionResult) -> Self {
        PaperRecord {
            paper_id: result.paper_id.clone(),
            status: result.status,
            converter_version: CONVERTER_VERSION.to_string(),
            unknown_packages: result.unknown_packages.clone(),
            errors: result.count(Severity::Error),
            warnings: result.count(Severity::Warning),
            infos: result.count(Severity::Info),
            timing_ms: result.timing_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusReport {
    pub total: usize,
    pub per_status: BTreeMap<Status, usize>,
    pub error_rate: f64,
    pub fail_rate: f64,
    pub cost_per_article: Usd,
    pub cost_estimate: Usd,
    pub elapsed_seconds: f64,
    pub converter_version: String,
    pub papers: Vec<PaperRecord>,
}

impl CorpusReport {
    /// Aggregate records. The result does not depend on record order.
    pub fn from_records(mut papers: Vec<PaperRecord>, cost_per_article: Usd, elapsed_seconds: f64) -> Self {
        papers.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
        let mut per_status: BTreeMap<Status, usize> = Status::ALL.iter().map(|s| (*s, 0)).collect();
        for p in &papers {
            *per_status.entry(p.status).or_default() += 1;
        }
        let total = papers.len();
        let rate = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
        let failed = per_status[&Status::Failed];
        let errors = per_status[&Status::ErrorsButReadable] + failed;
        CorpusReport {
            total,
            error_rate: rate(errors),
            fail_rate: rate(failed),
            per_status,
            cost_per_article,
            cost_estimate: estimate_cost(total as u64, cost_per_article),
            elapsed_seconds,
            converter_version: CONVERTER_VERSION.to_string(),
            papers,
        }
    }

    pub fn count(&self, status: Status) -> usize {
        self.per_status.get(&status).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("corpus report (converter {})\n", self.converter_version));
        out.push_str(&format!("bundles: {}\n", self.total));
        for status in Status::ALL {
            out.push_str(&format!("  {:<22}{:>6}\n", status.as_str(), self.count(status)));
        }
        out.push_str(&format!("error rate: {:.2}%\n", self.error_rate * 100.0));
        out.push_str(&format!("fail rate: {:.2}%\n", self.fail_rate * 100.0));
        out.push_str(&format!("cost per article: {}\n", self.cost_per_article));
        out.push_str(&format!("reconversion cost estimate: {}\n", self.cost_estimate));
        out.push_str(&format!("elapsed: {:.2} s\n", self.elapsed_seconds));
        let failed: Vec<&str> = self
            .papers
            .iter()
            .filter(|p| p.status == Status::Failed)
            .map(|p| p.paper_id.as_str())
            .collect();
        if !failed.is_empty() {
            out.push_str(&format!("failed: {}\n", failed.join(", ")));
        }
        out
    }

    /// Write `path` as JSON and a `.txt` summary next to it.
    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |p: &Path, e: std::io::Error| CorpusError::Write(p.to_path_buf(), e.to_string());
        std::fs::write(path, self.to_json()).map_err(|e| io(path, e))?;
        let txt = path.with_extension("txt");
        std::fs::write(&txt, self.to_text()).map_err(|e| io(&txt, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("cannot read corpus directory {0}: {1}")]
    Unreadable(PathBuf, String),
    #[error("cannot write {0}: {1}")]
    Write(PathBuf, String),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub jobs: usize,
    pub cost_per_article: Usd,
    pub convert: ConvertOptions,
    /// Write `<paperId>.html` into each bundle directory.
    pub write_html: bool,
    /// Also write the JSON and text reports here.
    pub report_path: Option<PathBuf>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            jobs: 4,
            cost_per_article: Usd::from_str("0.015").expect("literal"),
            convert: ConvertOptions::default(),
            write_html: true,
            report_path: None,
        }
    }
}

/// Bundle directories directly under `dir`, sorted by name.
pub fn bundle_dirs(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let unreadable = |e: std::io::Error| CorpusError::Unreadable(dir.to_path_buf(), e.to_string());
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(unreadable)? {
        let entry = entry.map_err(unreadable)?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && entry.file_type().map_err(unreadable)?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Convert one bundle directory, writing its page beside the sources.
pub fn convert_dir(dir: &Path, registry: &PackageRegistry, options: &BatchOptions) -> ConversionResult {
    let paper_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "paper".into());
    let bundle = match SourceBundle::from_dir(dir, Some(&paper_id)) {
        Ok(b) => b,
        Err(e) => return ConversionResult::bundle_invalid(paper_id, &e),
    };
    let mut result = convert(&bundle, registry, &options.convert);
    if options.write_html {
        if let Some(artifact) = &result.html {
            let out = dir.join(format!("{paper_id}.html"));
            if let Err(e) = std::fs::write(&out, &artifact.html) {
                result.diagnostics.push(Diagnostic::error(
                    Stage::Pipeline,
                    Code::WriteFailed,
                    format!("cannot write {}: {e}", out.display()),
                ));
                result.status = Status::classify(&result.diagnostics, true);
            }
        }
    }
    result
}

/// Convert every bundle under `corpus_dir` with `options.jobs` workers.
pub fn run_batch(corpus_dir: &Path, registry: &PackageRegistry, options: &BatchOptions) -> Result<CorpusReport, CorpusError> {
    let started = Instant::now();
    let dirs = bundle_dirs(corpus_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.max(1))
        .stack_size(8 * 1024 * 1024)
        .build()
        .map_err(|e| CorpusError::Pool(e.to_string()))?;
    let records: Vec<PaperRecord> = pool.install(|| {
        dirs.par_iter()
            .map(|d| PaperRecord::from_result(&convert_dir(d, registry, options)))
            .collect()
    });
    let report = CorpusReport::from_records(records, options.cost_per_article, started.elapsed().as_secs_f64());
    if let Some(path) = &options.report_path {
        report.write(path)?;
    }
    Ok(report)
}

/// Papers to reconvert: those produced by another converter version, and
/// those that used a package whose handler changed. Sorted by paper id.
pub fn plan_reconversion(previous: &CorpusReport, current_version: &str, changed_packages: &BTreeSet<String>) -> Vec<String> {
    let selected: BTreeSet<&str> = previous
        .papers
        .iter()
        .filter(|p| p.converter_version != current_version || !p.unknown_packages.is_disjoint(changed_packages))
        .map(|p| p.paper_id.as_str())
        .collect();
    selected.into_iter().map(str::to_string).collect()
}
