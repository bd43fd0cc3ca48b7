use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use epg_core::cli::{analyze, build, load_config, named_traversal, AnalysisReport, AnalyzeOptions, Detector};
use epg_core::detect::{DetectorConfig, PriceTable, Refinement};
use epg_core::graph::{write_graph, ContractGranularity, ExportFormat, GraphKind, VertexId};

#[derive(Parser)]
#[command(name = "epg", version, about = "Execution property graphs and attack detection for EVM transaction traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run attack detectors on a trace (or every *.json trace in a directory).
    Analyze(AnalyzeArgs),
    /// Build a graph and write it as DOT or GraphSON.
    Export(ExportArgs),
    /// Evaluate one named traversal and print the resulting vertex ids.
    Traverse(TraverseArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace JSON file, or a directory of them
    trace: PathBuf,
    /// TOML detector configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of reentrancy,fac,price.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<Detector>>,
    /// Comma-separated subset of r1,a1,a2,a3,p1,p2, or `none`. Overrides the config file.
    #[arg(long)]
    refinements: Option<String>,
    /// CSV price table (token,block,usd_price).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Token contracts to trust for Transfer events, one address per line.
    #[arg(long)]
    allowlist: Option<PathBuf>,
    /// Report path; a directory when TRACE is a directory. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Trace JSON file
    trace: PathBuf,
    /// ctg, dcfg, ddg or epg.
    #[arg(long, default_value = "epg")]
    graph: GraphKind,
    /// dot or graphson.
    #[arg(long, default_value = "dot")]
    format: ExportFormat,
    /// One contract vertex per call frame instead of per address.
    #[arg(long)]
    per_frame: bool,
    /// Output file. Defaults to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraverseArgs {
    /// Trace JSON file
    trace: PathBuf,
    /// control-source, write-control, control-block, succ-block,
    /// transfer-blocks or reentrant-pairs.
    name: String,
    /// Input vertex ids (succ-block takes the ancestor first).
    #[arg(long = "vertex")]
    vertices: Vec<VertexId>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_refinements(s: &str) -> Result<BTreeSet<Refinement>> {
    if s.trim().eq_ignore_ascii_case("none") || s.trim().is_empty() {
        return Ok(BTreeSet::new());
    }
    s.split(',').map(|r| r.parse::<Refinement>().map_err(Into::into)).collect()
}

fn analyze_options(args: &AnalyzeArgs) -> Result<AnalyzeOptions> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => DetectorConfig::default(),
    };
    if let Some(r) = &args.refinements {
        config.refinements = parse_refinements(r)?;
    }
    if let Some(p) = &args.allowlist {
        config.allowlist = Some(p.clone());
    }
    let prices = match &args.prices {
        Some(p) => Some(PriceTable::load(p).with_context(|| format!("price table {}", p.display()))?),
        None => None,
    };
    let detectors = match &args.detectors {
        Some(ds) => ds.iter().copied().collect(),
        None => Detector::ALL.into_iter().collect(),
    };
    Ok(AnalyzeOptions { detectors, config, prices })
}

fn analyze_file(path: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let raw = read(path)?;
    analyze(&raw, opts).with_context(|| format!("analyzing {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8> {
    let opts = analyze_options(args)?;
    if !args.trace.is_dir() {
        let report = analyze_file(&args.trace, &opts)?;
        emit(&report.to_json(), args.out.as_deref())?;
        return Ok(report.exit_code());
    }

    let mut files: Vec<PathBuf> = fs::read_dir(&args.trace)
        .with_context(|| format!("cannot list {}", args.trace.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut code = 0;
    for file in files {
        match analyze_file(&file, &opts) {
            Ok(report) => {
                let target = args.out.as_ref().map(|d| d.join(file.file_name().expect("listed file has a name")));
                emit(&report.to_json(), target.as_deref())?;
                if code == 0 {
                    code = report.exit_code();
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                code = 1;
            }
        }
    }
    Ok(code)
}

fn cmd_export(args: &ExportArgs) -> Result<u8> {
    let raw = read(&args.trace)?;
    let granularity = if args.per_frame { ContractGranularity::Frame } else { ContractGranularity::Address };
    let built = build(&raw, &DetectorConfig::default(), granularity)
        .with_context(|| format!("building graph for {}", args.trace.display()))?;
    let graph = built.epg.subgraph(args.graph);
    let mut buf = Vec::new();
    write_graph(&graph, args.format, &mut buf)?;
    emit(String::from_utf8(buf)?.trim_end(), args.out.as_deref())?;
    Ok(0)
}

fn cmd_traverse(args: &TraverseArgs) -> Result<u8> {
    let raw = read(&args.trace)?;
    let built = build(&raw, &DetectorConfig::default(), ContractGranularity::Frame)
        .with_context(|| format!("building graph for {}", args.trace.display()))?;
    let a = built.analysis()?;
    let result = named_traversal(&a, &args.name, &args.vertices)?;
    emit(&serde_json::to_string(&result)?, None)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPG_LOG", "warn")).init();
    // clap's own usage-error code is 2, which is reserved for "findings reported"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Export(e) => cmd_export(e),
        Command::Traverse(t) => cmd_traverse(t),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
