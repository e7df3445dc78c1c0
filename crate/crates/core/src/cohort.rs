//! Per-company pipeline runs and cohort-level aggregation.
//!
//! Every dataset yields one [`CompanyStats`] row. Failures are recorded on the
//! row instead of aborting the run, and the summary only averages over the
//! companies whose network was built.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::{compute, top_nodes, CentralityOptions, Measure, NodeLabels};
use crate::fsn::{build_network, BuildOptions, FinancialStatementsNetwork};
use crate::graph::{BipartiteGraph, Partition};
use crate::ingest::{parse_journal_csv, IngestConfig};
use crate::tailfit::{likelihood_ratio_test, DegreeSequence, FitOptions, TailFitResult, Verdict};

pub const UNKNOWN_INDUSTRY: &str = "UNKNOWN";
pub const SIZE_BINS: usize = 20;

pub const OUTPUT_FILES: [&str; 7] = [
    "companies.csv",
    "summary.csv",
    "table1.csv",
    "table2.csv",
    "table3.csv",
    "fig2_hist.csv",
    "fig3_hist.csv",
];

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("empty cohort: no datasets to summarize")]
    Empty,
    #[error("industry map line {line}: {message}")]
    IndustryMap { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default)]
pub struct CohortConfig {
    pub ingest: IngestConfig,
    pub build: BuildOptions,
    pub fit: FitOptions,
    pub centrality: CentralityOptions,
}

/// Size and shape of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub company: String,
    pub n_entries: u64,
    pub n_fa: usize,
    pub n_bp: usize,
    pub n_edges: usize,
    pub n_components: usize,
    /// Diameter of the largest component; absent for an edgeless network.
    pub diameter: Option<u32>,
    pub diameter_component_size: Option<usize>,
}

pub fn network_stats(net: &FinancialStatementsNetwork, g: &BipartiteGraph) -> NetworkStats {
    let diameter = g.diameter().ok();
    NetworkStats {
        company: net.company().to_string(),
        n_entries: net.n_entries(),
        n_fa: net.n_fa(),
        n_bp: net.n_bp(),
        n_edges: g.n_edges(),
        n_components: g.connected_components().components.len(),
        diameter: diameter.map(|d| d.value),
        diameter_component_size: diameter.map(|d| d.component_size),
    }
}

/// Highest-ranked node for one centrality measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCentrality {
    pub measure: Measure,
    pub node_id: String,
    pub partition: Partition,
    pub normalized: f64,
}

/// A tail fit, or the reason none was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(TailFitResult),
    Failed(String),
}

impl FitOutcome {
    pub fn result(&self) -> Option<&TailFitResult> {
        match self {
            FitOutcome::Fitted(r) => Some(r),
            FitOutcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyStats {
    pub company_id: String,
    pub industry_code: String,
    pub source: PathBuf,
    /// Set when the network could not be built; every other measurement is then absent.
    pub error: Option<String>,
    pub network: Option<NetworkStats>,
    pub top: Vec<TopCentrality>,
    /// Centrality failures, by measure.
    pub centrality_errors: Vec<String>,
    pub fa_fit: Option<FitOutcome>,
    pub bp_fit: Option<FitOutcome>,
}

impl CompanyStats {
    pub fn succeeded(&self) -> bool {
        self.network.is_some()
    }

    fn failed(company_id: String, source: &Path, error: String) -> Self {
        CompanyStats {
            company_id,
            industry_code: UNKNOWN_INDUSTRY.into(),
            source: source.to_path_buf(),
            error: Some(error),
            network: None,
            top: Vec::new(),
            centrality_errors: Vec::new(),
            fa_fit: None,
            bp_fit: None,
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs ingest, build, statistics, centrality and both tail fits on one
/// journal CSV. Rows without a company column are attributed to the file stem.
pub fn analyze_company(path: &Path, config: &CohortConfig) -> CompanyStats {
    let stem = file_stem(path);
    let mut ingest = config.ingest.clone();
    if ingest.default_company.is_none() {
        ingest.default_company = Some(stem.clone());
    }
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return CompanyStats::failed(stem, path, format!("unreadable file: {e}")),
    };
    let journal = match parse_journal_csv(io::BufReader::new(file), &ingest) {
        Ok(j) => j,
        Err(e) => return CompanyStats::failed(stem, path, e.to_string()),
    };
    let net = match build_network(&journal.entries, &config.build) {
        Ok(n) => n,
        Err(e) => {
            let company = journal.entries.first().map(|e| e.company_id.clone()).unwrap_or(stem);
            return CompanyStats::failed(company, path, e.to_string());
        }
    };
    let g = BipartiteGraph::from_network(&net);
    let labels = NodeLabels::from_network(&net);

    let mut top = Vec::new();
    let mut centrality_errors = Vec::new();
    for measure in [Measure::Degree, Measure::Closeness, Measure::Betweenness] {
        match compute(&g, measure, &config.centrality) {
            Ok(report) => {
                if let Some(best) = top_nodes(&report, 1, &labels).into_iter().next() {
                    top.push(TopCentrality {
                        measure,
                        node_id: best.id,
                        partition: best.partition,
                        normalized: best.normalized,
                    });
                }
            }
            Err(e) => centrality_errors.push(format!("{}: {e}", measure.as_str())),
        }
    }

    let fit = |p: Partition| match likelihood_ratio_test(&DegreeSequence::of_partition(&g, p), &config.fit) {
        Ok(r) => FitOutcome::Fitted(r),
        Err(e) => FitOutcome::Failed(e.to_string()),
    };

    CompanyStats {
        company_id: net.company().to_string(),
        industry_code: UNKNOWN_INDUSTRY.into(),
        source: path.to_path_buf(),
        error: None,
        network: Some(network_stats(&net, &g)),
        top,
        centrality_errors,
        fa_fit: Some(fit(Partition::Fa)),
        bp_fit: Some(fit(Partition::Bp)),
    }
}

/// `company_id,industry_code` rows.
pub fn read_industry_map<R: io::Read>(source: R) -> Result<BTreeMap<String, String>, CohortError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CohortError::IndustryMap {
            line: 1,
            message: format!("missing column {name}"),
        })
    };
    let (company, industry) = (column("company_id")?, column("industry_code")?);
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let (Some(c), Some(i)) = (record.get(company), record.get(industry)) else {
            return Err(CohortError::IndustryMap {
                line,
                message: "short record".into(),
            });
        };
        if map.insert(c.to_string(), i.to_string()).is_some() {
            return Err(CohortError::IndustryMap {
                line,
                message: format!("duplicate company {c}"),
            });
        }
    }
    Ok(map)
}

/// Journal CSVs directly inside `dir`, sorted by file name.
pub fn list_datasets(dir: &Path) -> Result<Vec<PathBuf>, CohortError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Analyzes every dataset in parallel on the current rayon pool and returns
/// rows sorted by company id, then source path.
pub fn analyze_cohort(
    paths: &[PathBuf],
    industries: &BTreeMap<String, String>,
    config: &CohortConfig,
) -> Vec<CompanyStats> {
    let mut rows: Vec<CompanyStats> = paths
        .par_iter()
        .map(|p| {
            let mut row = analyze_company(p, config);
            row.industry_code = industry_of(industries, &row.company_id);
            row
        })
        .collect();
    rows.sort_by(|a, b| a.company_id.cmp(&b.company_id).then_with(|| a.source.cmp(&b.source)));
    rows
}

fn industry_of(industries: &BTreeMap<String, String>, company: &str) -> String {
    industries.get(company).cloned().unwrap_or_else(|| UNKNOWN_INDUSTRY.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

impl Aggregate {
    fn of(values: &[u64]) -> Option<Self> {
        let (&min, &max) = (values.iter().min()?, values.iter().max()?);
        let sum: f64 = values.iter().map(|&v| v as f64).sum();
        Some(Aggregate {
            n: values.len(),
            mean: sum / values.len() as f64,
            min,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndustryCount {
    pub industry_code: String,
    pub companies: usize,
    pub analyzed: usize,
}

/// Share of reliable likelihood-ratio tests that favour the power law.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LrShare {
    /// Companies with a fitted sequence.
    pub tested: usize,
    /// Tests with p below the significance level.
    pub reliable: usize,
    pub power_law_preferred: usize,
}

impl LrShare {
    fn record(&mut self, outcome: Option<&FitOutcome>) {
        let Some(result) = outcome.and_then(FitOutcome::result) else {
            return;
        };
        self.tested += 1;
        if result.p_value < result.significance {
            self.reliable += 1;
            if result.verdict == Verdict::PowerLawPreferred {
                self.power_law_preferred += 1;
            }
        }
    }

    /// Percentage over reliable tests; absent when there are none.
    pub fn percentage(&self) -> Option<f64> {
        (self.reliable > 0).then(|| 100.0 * self.power_law_preferred as f64 / self.reliable as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LrTable {
    pub fa: LrShare,
    pub bp: LrShare,
}

impl LrTable {
    fn record(&mut self, row: &CompanyStats) {
        self.fa.record(row.fa_fit.as_ref());
        self.bp.record(row.bp_fit.as_ref());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_companies: usize,
    pub n_analyzed: usize,
    pub n_failed: usize,
    pub n_fa: Option<Aggregate>,
    pub n_bp: Option<Aggregate>,
    pub diameter: Option<Aggregate>,
    pub industries: Vec<IndustryCount>,
    pub lr: LrTable,
    pub lr_by_industry: BTreeMap<String, LrTable>,
    pub fa_size_hist: Vec<HistogramBin>,
    pub bp_size_hist: Vec<HistogramBin>,
    /// Companies per observed diameter.
    pub diameter_hist: BTreeMap<u32, usize>,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn equal_width_histogram(values: &[u64], bins: usize) -> Vec<HistogramBin> {
    let (Some(&min), Some(&max)) = (values.iter().min(), values.iter().max()) else {
        return Vec::new();
    };
    if min == max || bins <= 1 {
        return vec![HistogramBin {
            lower: min as f64,
            upper: max as f64,
            count: values.len(),
        }];
    }
    let (lo, width) = (min as f64, (max - min) as f64 / bins as f64);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let bin = (((v - min) as f64 / width) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: lo + i as f64 * width,
            upper: if i + 1 == bins { max as f64 } else { lo + (i + 1) as f64 * width },
            count,
        })
        .collect()
}

/// Aggregates company rows. Industries are resolved through `industries`;
/// input order does not matter.
pub fn summarize_cohort(
    stats: &[CompanyStats],
    industries: &BTreeMap<String, String>,
) -> Result<CohortSummary, CohortError> {
    if stats.is_empty() {
        return Err(CohortError::Empty);
    }
    let mut rows: Vec<&CompanyStats> = stats.iter().collect();
    rows.sort_by(|a, b| a.company_id.cmp(&b.company_id).then_with(|| a.source.cmp(&b.source)));

    let networks: Vec<&NetworkStats> = rows.iter().filter_map(|r| r.network.as_ref()).collect();
    let n_fa: Vec<u64> = networks.iter().map(|n| n.n_fa as u64).collect();
    let n_bp: Vec<u64> = networks.iter().map(|n| n.n_bp as u64).collect();
    let diameters: Vec<u64> = networks.iter().filter_map(|n| n.diameter).map(u64::from).collect();

    let mut counts: BTreeMap<String, IndustryCount> = BTreeMap::new();
    let mut lr = LrTable::default();
    let mut lr_by_industry: BTreeMap<String, LrTable> = BTreeMap::new();
    for row in &rows {
        let code = industry_of(industries, &row.company_id);
        let entry = counts.entry(code.clone()).or_insert_with(|| IndustryCount {
            industry_code: code.clone(),
            companies: 0,
            analyzed: 0,
        });
        entry.companies += 1;
        if row.succeeded() {
            entry.analyzed += 1;
        }
        lr.record(row);
        lr_by_industry.entry(code).or_default().record(row);
    }

    let mut diameter_hist = BTreeMap::new();
    for &d in &diameters {
        *diameter_hist.entry(d as u32).or_insert(0) += 1;
    }

    Ok(CohortSummary {
        n_companies: rows.len(),
        n_analyzed: networks.len(),
        n_failed: rows.len() - networks.len(),
        n_fa: Aggregate::of(&n_fa),
        n_bp: Aggregate::of(&n_bp),
        diameter: Aggregate::of(&diameters),
        industries: counts.into_values().collect(),
        lr,
        lr_by_industry,
        fa_size_hist: equal_width_histogram(&n_fa, SIZE_BINS),
        bp_size_hist: equal_width_histogram(&n_bp, SIZE_BINS),
        diameter_hist,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fit_columns(outcome: Option<&FitOutcome>) -> [String; 8] {
    match outcome {
        Some(FitOutcome::Fitted(r)) => [
            r.x_min.to_string(),
            r.alpha.to_string(),
            r.lambda.to_string(),
            r.n_tail.to_string(),
            r.log_likelihood_ratio.to_string(),
            r.p_value.to_string(),
            r.verdict.as_str().to_string(),
            String::new(),
        ],
        Some(FitOutcome::Failed(e)) => {
            let mut row: [String; 8] = Default::default();
            row[7] = e.clone();
            row
        }
        None => Default::default(),
    }
}

pub fn write_companies_csv<W: Write>(rows: &[CompanyStats], sink: W) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = [
        "company_id",
        "industry_code",
        "status",
        "error",
        "n_entries",
        "n_fa",
        "n_bp",
        "n_edges",
        "n_components",
        "diameter",
    ]
    .map(String::from)
    .to_vec();
    for m in ["degree", "closeness", "betweenness"] {
        header.push(format!("top_{m}_node"));
        header.push(format!("top_{m}_score"));
    }
    for p in ["fa", "bp"] {
        for col in ["x_min", "alpha", "lambda", "n_tail", "lr", "p_value", "verdict", "note"] {
            header.push(format!("{p}_{col}"));
        }
    }
    w.write_record(&header)?;
    for row in rows {
        let net = row.network.as_ref();
        let mut record = vec![
            row.company_id.clone(),
            row.industry_code.clone(),
            if row.succeeded() { "ok" } else { "failed" }.to_string(),
            row.error.clone().unwrap_or_default(),
            opt(net.map(|n| n.n_entries)),
            opt(net.map(|n| n.n_fa)),
            opt(net.map(|n| n.n_bp)),
            opt(net.map(|n| n.n_edges)),
            opt(net.map(|n| n.n_components)),
            opt(net.and_then(|n| n.diameter)),
        ];
        for m in [Measure::Degree, Measure::Closeness, Measure::Betweenness] {
            let top = row.top.iter().find(|t| t.measure == m);
            record.push(opt(top.map(|t| t.node_id.clone())));
            record.push(opt(top.map(|t| t.normalized)));
        }
        record.extend(fit_columns(row.fa_fit.as_ref()));
        record.extend(fit_columns(row.bp_fit.as_ref()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &CohortSummary, sink: W) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["metric", "n", "mean", "min", "max"])?;
    w.write_record([
        "coverage".to_string(),
        summary.n_companies.to_string(),
        summary.n_analyzed.to_string(),
        summary.n_failed.to_string(),
        String::new(),
    ])?;
    for (name, agg) in [("n_fa", summary.n_fa), ("n_bp", summary.n_bp), ("diameter", summary.diameter)] {
        w.write_record([
            name.to_string(),
            opt(agg.map(|a| a.n)),
            opt(agg.map(|a| a.mean)),
            opt(agg.map(|a| a.min)),
            opt(agg.map(|a| a.max)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn share_record(share: &LrShare) -> [String; 4] {
    [
        share.power_law_preferred.to_string(),
        share.reliable.to_string(),
        share.tested.to_string(),
        opt(share.percentage()),
    ]
}

/// Writes the seven cohort artifacts into `out`, creating it if needed.
pub fn write_report(rows: &[CompanyStats], summary: &CohortSummary, out: &Path) -> Result<(), CohortError> {
    fs::create_dir_all(out)?;
    let create = |name: &str| fs::File::create(out.join(name)).map(io::BufWriter::new);

    write_companies_csv(rows, create("companies.csv")?)?;
    write_summary_csv(summary, create("summary.csv")?)?;

    let mut w = csv::Writer::from_writer(create("table1.csv")?);
    w.write_record(["industry_code", "companies", "analyzed"])?;
    for c in &summary.industries {
        w.write_record([c.industry_code.clone(), c.companies.to_string(), c.analyzed.to_string()])?;
    }
    w.flush()?;

    let share_header = ["power_law_preferred", "reliable_tests", "tested", "percentage"];
    let mut w = csv::Writer::from_writer(create("table2.csv")?);
    w.write_record(std::iter::once("node_type").chain(share_header))?;
    for (node, share) in [("fa", &summary.lr.fa), ("bp", &summary.lr.bp)] {
        w.write_record(std::iter::once(node.to_string()).chain(share_record(share)))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create("table3.csv")?);
    w.write_record(["industry_code", "node_type"].into_iter().chain(share_header))?;
    for (code, table) in &summary.lr_by_industry {
        for (node, share) in [("fa", &table.fa), ("bp", &table.bp)] {
            w.write_record([code.clone(), node.to_string()].into_iter().chain(share_record(share)))?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create("fig2_hist.csv")?);
    w.write_record(["node_type", "bin_lower", "bin_upper", "count"])?;
    for (node, hist) in [("bp", &summary.bp_size_hist), ("fa", &summary.fa_size_hist)] {
        for bin in hist {
            w.write_record([node.to_string(), bin.lower.to_string(), bin.upper.to_string(), bin.count.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create("fig3_hist.csv")?);
    w.write_record(["diameter", "count"])?;
    for (d, count) in &summary.diameter_hist {
        w.write_record([d.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
