use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::report::{AnalysisReport, Stats};
use crate::detect::{
    control_block, control_source, detect_faulty_access_control, detect_price_manipulation, detect_reentrancy,
    detect_reentrancy_r1, reentrant_pairs, sort_findings, succ_block, transfer_blocks, write_control, Analysis,
    DetectError, DetectorConfig, Finding, PriceTable, Refinement,
};
use crate::flow::{load_allowlist, track_flows, AllowlistError, FlowError, FlowOutput, TrackerOptions};
use crate::graph::{construct_epg, ContractGranularity, Epg, GraphError, VertexId};
use crate::trace::{parse_trace, reconstruct_frames, CallTree, Trace, TraceError};
use crate::traversal::VertexSet;
use crate::types::word_hex_padded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Reentrancy,
    Fac,
    Price,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::Reentrancy, Detector::Fac, Detector::Price];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Reentrancy => "reentrancy",
            Detector::Fac => "fac",
            Detector::Price => "price",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reentrancy" => Ok(Detector::Reentrancy),
            "fac" | "access" | "access-control" => Ok(Detector::Fac),
            "price" | "price-manipulation" => Ok(Detector::Price),
            other => Err(format!("unknown detector `{other}` (expected reentrancy, fac or price)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Allowlist(#[from] AllowlistError),
}

/// Every artifact derived from one trace.
pub struct Built {
    pub trace: Trace,
    pub tree: CallTree,
    pub flows: FlowOutput,
    pub epg: Epg,
}

impl Built {
    pub fn analysis(&self) -> Result<Analysis<'_>, DetectError> {
        Analysis::new(&self.trace, &self.tree, &self.flows, &self.epg)
    }
}

/// Parses, replays and builds the graph for one trace document.
pub fn build(raw: &[u8], cfg: &DetectorConfig, granularity: ContractGranularity) -> Result<Built, PipelineError> {
    let trace = parse_trace(raw)?;
    let tree = reconstruct_frames(&trace)?;
    let allowlist = cfg.allowlist.as_deref().map(load_allowlist).transpose()?;
    let flows = track_flows(&trace, &tree, &TrackerOptions { allowlist, record_stacks: false })?;
    let epg = construct_epg(&trace, &tree, &flows, granularity)?;
    log::debug!(
        "built graph: {} frames, {} vertices, {} edges",
        tree.len(),
        epg.graph.vertex_count(),
        epg.graph.edge_count()
    );
    Ok(Built { trace, tree, flows, epg })
}

/// What to run on a built graph.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub detectors: BTreeSet<Detector>,
    pub config: DetectorConfig,
    pub prices: Option<PriceTable>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { detectors: Detector::ALL.into_iter().collect(), config: DetectorConfig::default(), prices: None }
    }
}

fn run_one(a: Analysis, d: Detector, opts: &AnalyzeOptions) -> Result<Vec<Finding>, DetectError> {
    let cfg = &opts.config;
    match d {
        Detector::Reentrancy => {
            let mut found = detect_reentrancy(&a, cfg)?;
            if cfg.enabled(Refinement::R1) {
                // R1 only adds sites the generic rule missed
                let seen: HashSet<_> = found.iter().map(|f| (f.victim, f.pc)).collect();
                found.extend(detect_reentrancy_r1(&a, cfg)?.into_iter().filter(|f| !seen.contains(&(f.victim, f.pc))));
            }
            Ok(found)
        }
        Detector::Fac => detect_faulty_access_control(&a, cfg),
        Detector::Price => detect_price_manipulation(&a, cfg, opts.prices.as_ref()),
    }
}

/// Runs the selected detectors, one thread each.
pub fn run_detectors(built: &Built, opts: &AnalyzeOptions) -> Result<Vec<Finding>, DetectError> {
    let a = built.analysis()?;
    let results: Vec<Result<Vec<Finding>, DetectError>> = std::thread::scope(|s| {
        let handles: Vec<_> = opts.detectors.iter().map(|d| s.spawn(move || run_one(a, *d, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("detector thread panicked")).collect()
    });
    let mut findings = Vec::new();
    for r in results {
        findings.extend(r?);
    }
    sort_findings(&mut findings);
    Ok(findings)
}

/// Full analysis of one trace document.
pub fn analyze(raw: &[u8], opts: &AnalyzeOptions) -> Result<AnalysisReport, PipelineError> {
    let t0 = Instant::now();
    let built = build(raw, &opts.config, ContractGranularity::Frame)?;
    let build_millis = t0.elapsed().as_millis() as u64;
    let t1 = Instant::now();
    let findings = run_detectors(&built, opts)?;
    let traversal_millis = t1.elapsed().as_millis() as u64;

    let mut warnings = built.flows.warnings.clone();
    if opts.config.enabled(Refinement::P2) && opts.detectors.contains(&Detector::Price) && opts.prices.is_none() {
        warnings.push("P2 enabled without a price table; price findings are not value-filtered".to_string());
    }
    Ok(AnalysisReport {
        tx_hash: format!("0x{}", word_hex_padded(&built.trace.envelope.tx_hash)),
        detectors_run: opts.detectors.iter().copied().collect(),
        findings,
        stats: Stats {
            vertex_count: built.epg.graph.vertex_count(),
            edge_count: built.epg.graph.edge_count(),
            build_millis,
            traversal_millis,
        },
        warnings,
    })
}

/// Names accepted by [`named_traversal`], with the number of input vertices each takes.
pub const TRAVERSALS: [(&str, usize); 6] = [
    ("control-source", 1),
    ("write-control", 1),
    ("control-block", 1),
    ("succ-block", 2),
    ("transfer-blocks", 0),
    ("reentrant-pairs", 0),
];

#[derive(Debug, thiserror::Error)]
pub enum TraversalRequestError {
    #[error("unknown traversal `{0}`")]
    UnknownName(String),
    #[error("`{name}` takes exactly {expected} input vertex id(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Result of a named traversal: a vertex set, or vertex pairs for `reentrant-pairs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum TraversalOutput {
    Vertices(VertexSet),
    Pairs(Vec<(VertexId, VertexId)>),
}

/// Evaluates one of the built-in traversals by name. `succ-block` takes the ancestor first.
pub fn named_traversal(a: &Analysis, name: &str, inputs: &[VertexId]) -> Result<TraversalOutput, TraversalRequestError> {
    let expected = TRAVERSALS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, k)| *k)
        .ok_or_else(|| TraversalRequestError::UnknownName(name.to_string()))?;
    if inputs.len() != expected {
        return Err(TraversalRequestError::Arity { name: name.to_string(), expected, got: inputs.len() });
    }
    let set = match name {
        "control-source" => control_source(a, inputs[0])?,
        "write-control" => write_control(a, inputs[0])?,
        "control-block" => control_block(a, inputs[0])?,
        "succ-block" => succ_block(a, inputs[0], inputs[1])?,
        "transfer-blocks" => transfer_blocks(a)?,
        _ => return Ok(TraversalOutput::Pairs(reentrant_pairs(a)?)),
    };
    Ok(TraversalOutput::Vertices(set))
}
