use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ledgergraph::centrality::{
    compute, top_nodes, write_report_csv, BetweennessMode, CentralityOptions, Measure, NodeLabels, NormalizationMode,
};
use ledgergraph::cohort::{
    analyze_cohort, list_datasets, network_stats, read_industry_map, summarize_cohort, write_report, CohortConfig,
};
use ledgergraph::fsn::{build_network, network_from_json, network_to_json, BuildOptions, PatternMode, DEFAULT_NODE_CAP};
use ledgergraph::graph::{BipartiteGraph, Partition};
use ledgergraph::ingest::{parse_journal_csv, IngestConfig};
use ledgergraph::synth::{write_cohort, CohortSpec, SynthConfig};
use ledgergraph::tailfit::{
    distribution_curves, likelihood_ratio_test, write_curves_csv, DegreeSequence, FitOptions, DEFAULT_MIN_TAIL,
    DEFAULT_SIGNIFICANCE,
};

/// Financial statements networks from journal-entry data.
#[derive(Debug, Parser)]
#[command(name = "ledgergraph", version)]
struct Cli {
    /// Worker threads for graph sweeps and cohort runs [default: all cores]
    #[arg(long, global = true, env = "LEDGERGRAPH_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a network JSON from a journal CSV
    Build(BuildArgs),
    /// Print size, components and diameter of a network
    Stats(StatsArgs),
    /// Score every node by a bipartite-normalized centrality measure
    Centrality(CentralityArgs),
    /// Run the power-law versus exponential test on one node type's degrees
    Fit(FitArgs),
    /// Analyze a directory of journal CSVs and write cohort tables
    Cohort(CohortArgs),
    /// Generate a seeded synthetic cohort of journal CSVs
    Synth(SynthArgs),
    /// Write empirical and fitted degree distribution curves as CSV
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Directed,
    Undirected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NodesArg {
    Fa,
    Bp,
}

impl From<NodesArg> for Partition {
    fn from(n: NodesArg) -> Self {
        match n {
            NodesArg::Fa => Partition::Fa,
            NodesArg::Bp => Partition::Bp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    Degree,
    Closeness,
    Betweenness,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Degree => Measure::Degree,
            MeasureArg::Closeness => Measure::Closeness,
            MeasureArg::Betweenness => Measure::Betweenness,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizationArg {
    /// Bound of the node's own partition
    OwnPartition,
    /// Bounds assigned crosswise between partitions
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BetweennessArg {
    /// Fraction of shortest paths through the node
    GeodesicFraction,
    /// Inverse path length of every pair routed through the node
    LengthWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Map a logical column to a header, e.g. account_id=GLAccount (repeatable)
    #[arg(long = "column-map", value_name = "KEY=HEADER")]
    column_map: Vec<String>,
    /// Accept an extra side token, e.g. DR=D or Haben=C (repeatable)
    #[arg(long = "side-alias", value_name = "TOKEN=D|C")]
    side_alias: Vec<String>,
}

impl IngestArgs {
    fn config(&self) -> Result<IngestConfig> {
        let mut config = IngestConfig::default();
        for spec in &self.column_map {
            config.columns.apply_override(spec)?;
        }
        for spec in &self.side_alias {
            config.add_side_alias(spec)?;
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct NetworkArgs {
    /// How entries map to patterns
    #[arg(long, value_enum, default_value_t = PatternArg::Directed)]
    pattern: PatternArg,
    /// Maximum number of nodes (FA + BP) per network
    #[arg(long, default_value_t = DEFAULT_NODE_CAP, value_parser = parse_node_cap)]
    node_cap: usize,
    /// Disable the node cap
    #[arg(long, conflicts_with = "node_cap")]
    no_cap: bool,
}

impl NetworkArgs {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            pattern_mode: match self.pattern {
                PatternArg::Directed => PatternMode::Directed,
                PatternArg::Undirected => PatternMode::Undirected,
            },
            node_cap: (!self.no_cap).then_some(self.node_cap),
        }
    }
}

fn parse_at_least(s: &str, min: usize) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < min {
        return Err(format!("must be at least {min}"));
    }
    Ok(v)
}

fn parse_node_cap(s: &str) -> Result<usize, String> {
    parse_at_least(s, 1)
}

fn parse_min_tail(s: &str) -> Result<usize, String> {
    parse_at_least(s, 2)
}

fn parse_significance(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("significance must lie strictly between 0 and 1".into())
    }
}

#[derive(Debug, Args)]
struct TestArgs {
    /// p-value below which a likelihood-ratio verdict counts as reliable
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE, value_parser = parse_significance)]
    significance: f64,
    /// Smallest tail (values ≥ x_min) a fit may use
    #[arg(long, default_value_t = DEFAULT_MIN_TAIL, value_parser = parse_min_tail)]
    min_tail: usize,
}

impl TestArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            min_tail: self.min_tail,
            significance: self.significance,
            x_min: None,
        }
    }
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Betweenness normalization
    #[arg(long, value_enum, default_value_t = NormalizationArg::OwnPartition)]
    normalization: NormalizationArg,
    /// Betweenness definition
    #[arg(long, value_enum, default_value_t = BetweennessArg::GeodesicFraction)]
    betweenness: BetweennessArg,
}

impl ScoreArgs {
    fn options(&self) -> CentralityOptions {
        CentralityOptions {
            normalization: match self.normalization {
                NormalizationArg::OwnPartition => NormalizationMode::OwnPartition,
                NormalizationArg::PaperLiteral => NormalizationMode::PaperLiteral,
            },
            betweenness: match self.betweenness {
                BetweennessArg::GeodesicFraction => BetweennessMode::GeodesicFraction,
                BetweennessArg::LengthWeighted => BetweennessMode::LengthWeighted,
            },
        }
    }
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Journal CSV
    #[arg(long)]
    input: PathBuf,
    /// Network JSON [default: standard output]
    #[arg(long)]
    output: Option<PathBuf>,
    /// Company id for files without a company column
    #[arg(long)]
    company: Option<String>,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Network JSON
    network: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct CentralityArgs {
    /// Network JSON
    network: PathBuf,
    #[arg(long, value_enum)]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Only the k highest-ranked nodes, best first
    #[arg(long, value_name = "K")]
    top: Option<usize>,
    #[command(flatten)]
    score: ScoreArgs,
    /// Output file [default: standard output]
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Network JSON
    network: PathBuf,
    /// Which node type's degrees to fit
    #[arg(long, value_enum)]
    nodes: NodesArg,
    #[command(flatten)]
    test: TestArgs,
    /// Fit at this cutoff instead of the KS-selected one
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    x_min: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CohortArgs {
    /// Directory of journal CSVs, one company per file
    #[arg(long)]
    dir: PathBuf,
    /// CSV with company_id,industry_code [default: every company UNKNOWN]
    #[arg(long)]
    industry_map: Option<PathBuf>,
    /// Report directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    score: ScoreArgs,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected LO..HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Cohort seed; each company's generator seed is derived from it
    #[arg(long)]
    seed: u64,
    /// Number of companies
    #[arg(long, default_value_t = 1)]
    companies: usize,
    /// Chart-of-accounts size per company
    #[arg(long, default_value_t = 300)]
    accounts: usize,
    /// Largest company's entry count
    #[arg(long)]
    entries: usize,
    /// Smallest company's entry count; sizes are log-uniform in between [default: --entries]
    #[arg(long)]
    min_entries: Option<usize>,
    /// Preferential-attachment exponent for account draws
    #[arg(long, default_value_t = 1.0)]
    attachment_bias: f64,
    /// Probability that an entry perturbs an earlier pattern instead of replaying one
    #[arg(long, default_value_t = 0.3)]
    mutation_rate: f64,
    /// Probability that an account draw opens an unused account
    #[arg(long, default_value_t = 0.05)]
    open_rate: f64,
    /// Inclusive range of accounts per pattern
    #[arg(long, default_value = "2..6", value_parser = parse_range)]
    accounts_per_entry: (usize, usize),
    /// Industry codes, assigned round-robin
    #[arg(long, value_delimiter = ',', default_value = "CRS,HLP,LE,PF,RTL")]
    industries: Vec<String>,
    /// Output directory; receives data/<company>.csv and industry_map.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotdataArgs {
    /// Network JSON
    network: PathBuf,
    /// Which node type's degrees to tabulate
    #[arg(long, value_enum)]
    nodes: NodesArg,
    #[command(flatten)]
    test: TestArgs,
    /// Output CSV [default: standard output]
    #[arg(long)]
    output: Option<PathBuf>,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_network(path: &Path) -> Result<ledgergraph::fsn::FinancialStatementsNetwork> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    network_from_json(&bytes).with_context(|| format!("invalid network {}", path.display()))
}

fn write_json<T: serde::Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn build(args: &BuildArgs) -> Result<()> {
    let mut config = args.ingest.config()?;
    config.default_company = args.company.clone();
    let file = fs::File::open(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let journal = parse_journal_csv(io::BufReader::new(file), &config)
        .with_context(|| format!("cannot parse {}", args.input.display()))?;
    if journal.stats.unbalanced_entries > 0 {
        warn!("{} of {} entries are unbalanced", journal.stats.unbalanced_entries, journal.stats.entries);
    }
    let net = build_network(&journal.entries, &args.network.options())?;
    info!("{}: {} FA nodes, {} BP nodes, {} edges", net.company(), net.n_fa(), net.n_bp(), net.edges().len());
    let mut out = sink(args.output.as_deref())?;
    out.write_all(&network_to_json(&net))?;
    out.flush()?;
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let net = load_network(&args.network)?;
    let g = BipartiteGraph::from_network(&net);
    let stats = network_stats(&net, &g);
    let mut out = sink(None)?;
    match args.format {
        Format::Json => write_json(&stats, &mut out)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.serialize(&stats)?;
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn centrality(args: &CentralityArgs) -> Result<()> {
    let net = load_network(&args.network)?;
    let g = BipartiteGraph::from_network(&net);
    let labels = NodeLabels::from_network(&net);
    let report = compute(&g, args.measure.into(), &args.score.options())?;
    for w in &report.warnings {
        warn!("{w}");
    }
    let mut out = sink(args.output.as_deref())?;
    match (args.format, args.top) {
        (Format::Csv, None) => write_report_csv(&report, &labels, &mut out)?,
        (Format::Csv, Some(k)) => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["rank", "node_id", "partition", "account_name", "raw", "normalized"])?;
            for (rank, t) in top_nodes(&report, k, &labels).into_iter().enumerate() {
                w.write_record([
                    (rank + 1).to_string(),
                    t.id,
                    t.partition.as_str().to_string(),
                    t.account_name.unwrap_or_default(),
                    t.raw.to_string(),
                    t.normalized.to_string(),
                ])?;
            }
            w.flush()?;
        }
        (Format::Json, top) => {
            let ranked = top_nodes(&report, top.unwrap_or(report.scores.len()), &labels);
            let doc = serde_json::json!({
                "measure": report.measure,
                "n_bp": report.n_bp,
                "n_fa": report.n_fa,
                "constants": report.constants,
                "component_local": report.component_local,
                "warnings": report.warnings,
                "nodes": ranked,
            });
            write_json(&doc, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let net = load_network(&args.network)?;
    let g = BipartiteGraph::from_network(&net);
    let seq = DegreeSequence::of_partition(&g, args.nodes.into());
    let options = FitOptions {
        x_min: args.x_min,
        ..args.test.options()
    };
    let result = likelihood_ratio_test(&seq, &options)?;
    let mut out = sink(args.output.as_deref())?;
    write_json(&result, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cohort(args: &CohortArgs) -> Result<()> {
    let industries = match &args.industry_map {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("cannot read {}", p.display()))?;
            read_industry_map(file)?
        }
        None => Default::default(),
    };
    let paths = list_datasets(&args.dir).with_context(|| format!("cannot list {}", args.dir.display()))?;
    if paths.is_empty() {
        bail!("no .csv datasets in {}", args.dir.display());
    }
    let config = CohortConfig {
        ingest: args.ingest.config()?,
        build: args.network.options(),
        fit: args.test.options(),
        centrality: args.score.options(),
    };
    let rows = analyze_cohort(&paths, &industries, &config);
    for row in rows.iter().filter(|r| !r.succeeded()) {
        warn!("{}: {}", row.company_id, row.error.as_deref().unwrap_or("failed"));
    }
    let summary = summarize_cohort(&rows, &industries)?;
    write_report(&rows, &summary, &args.out)?;
    info!("{} of {} companies analyzed", summary.n_analyzed, summary.n_companies);
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = CohortSpec {
        base: SynthConfig {
            seed: args.seed,
            n_accounts: args.accounts,
            n_entries: args.entries,
            attachment_bias: args.attachment_bias,
            pattern_mutation_rate: args.mutation_rate,
            account_open_rate: args.open_rate,
            accounts_per_entry: args.accounts_per_entry,
            ..Default::default()
        },
        n_companies: args.companies,
        industries: args.industries.clone(),
        entries_range: (args.min_entries.unwrap_or(args.entries), args.entries),
    };
    let paths = write_cohort(&spec, &args.out)?;
    info!("wrote {} companies to {}", paths.len(), args.out.display());
    Ok(())
}

fn plotdata(args: &PlotdataArgs) -> Result<()> {
    let net = load_network(&args.network)?;
    let g = BipartiteGraph::from_network(&net);
    let seq = DegreeSequence::of_partition(&g, args.nodes.into());
    let result = likelihood_ratio_test(&seq, &args.test.options())?;
    let mut out = sink(args.output.as_deref())?;
    write_curves_csv(&distribution_curves(&seq, &result), &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Build(a) => build(a),
        Command::Stats(a) => stats(a),
        Command::Centrality(a) => centrality(a),
        Command::Fit(a) => fit(a),
        Command::Cohort(a) => cohort(a),
        Command::Synth(a) => synth(a),
        Command::Plotdata(a) => plotdata(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n as usize);
    }
    let outcome = match pool.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => Err(e.into()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
