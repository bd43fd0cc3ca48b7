//! Attack conditions evaluated as traversals over a frozen execution
//! property graph.
//!
//! Detectors expect a graph built with [`ContractGranularity::Frame`], so that
//! every invocation has a contract vertex of its own.

mod access;
mod price;
mod reentrancy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::flow::{FlowOutput, Identifier, SourceRef};
use crate::graph::{ContractGranularity, Epg, Label, VertexId};
use crate::trace::{CallTree, FrameId, Trace};
use crate::traversal::{TraversalError, VertexSet};
use crate::types::Address;

pub use access::{control_source, detect_faulty_access_control, transfer_blocks};
pub use price::{detect_price_manipulation, pool_shifts, write_control, PoolShift, PriceError, PriceTable};
pub use reentrancy::{
    brute_force_reentrancy, control_block, detect_reentrancy, detect_reentrancy_r1, reentrancy_triples,
    reentrant_pairs, succ_block, Triple,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    Reentrancy,
    ReentrancyR1,
    FaultyAccessControl,
    PriceManipulation,
}

/// Optional rule adjustments, each toggled independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Refinement {
    R1,
    A1,
    A2,
    A3,
    P1,
    P2,
}

impl Refinement {
    pub const ALL: [Refinement; 6] =
        [Refinement::R1, Refinement::A1, Refinement::A2, Refinement::A3, Refinement::P1, Refinement::P2];

    pub fn name(self) -> &'static str {
        match self {
            Refinement::R1 => "r1",
            Refinement::A1 => "a1",
            Refinement::A2 => "a2",
            Refinement::A3 => "a3",
            Refinement::P1 => "p1",
            Refinement::P2 => "p2",
        }
    }
}

impl fmt::Display for Refinement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Refinement {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Refinement::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConfigError::UnknownRefinement(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} = {value} is out of range ({range})")]
    BadThreshold { name: &'static str, value: f64, range: &'static str },
    #[error("unknown refinement `{0}`")]
    UnknownRefinement(String),
}

/// Settings shared by all detectors for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Extra addresses treated as attacker-controlled by A1, on top of the
    /// contracts created inside the transaction.
    pub attacker_contracts: BTreeSet<Address>,
    /// Minimum relative pool-balance shift for P1, in (0, 1].
    pub price_fluctuation_threshold: f64,
    /// Minimum absolute pool value change in USD for P2.
    pub usd_value_threshold: f64,
    pub allowlist: Option<std::path::PathBuf>,
    pub refinements: BTreeSet<Refinement>,
    /// Also accept the root frame's `msg.sender` as an origin check.
    pub accept_root_caller: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            attacker_contracts: BTreeSet::new(),
            price_fluctuation_threshold: 0.5,
            usd_value_threshold: 10_000.0,
            allowlist: None,
            refinements: Refinement::ALL.into_iter().collect(),
            accept_root_caller: false,
        }
    }
}

impl DetectorConfig {
    /// Defaults with every refinement switched off.
    pub fn generic() -> Self {
        DetectorConfig { refinements: BTreeSet::new(), ..Default::default() }
    }

    pub fn with_refinements(mut self, rs: impl IntoIterator<Item = Refinement>) -> Self {
        self.refinements = rs.into_iter().collect();
        self
    }

    pub fn enabled(&self, r: Refinement) -> bool {
        self.refinements.contains(&r)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p1 = self.price_fluctuation_threshold;
        if !(p1 > 0.0 && p1 <= 1.0) {
            return Err(ConfigError::BadThreshold { name: "p1_threshold", value: p1, range: "(0, 1]" });
        }
        let p2 = self.usd_value_threshold;
        if !(p2 >= 0.0 && p2.is_finite()) {
            return Err(ConfigError::BadThreshold { name: "p2_threshold_usd", value: p2, range: ">= 0" });
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("detectors need a graph with one contract vertex per frame")]
    Granularity,
    #[error("vertex {descendant} is not inside the call subtree of vertex {ancestor}")]
    NotDescendant { ancestor: VertexId, descendant: VertexId },
    #[error(transparent)]
    Traversal(#[from] TraversalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Vertex,
    Edge,
}

/// A named graph element supporting a finding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Witness {
    pub name: String,
    pub element: Element,
    pub id: usize,
}

impl Witness {
    pub fn vertex(name: &str, id: VertexId) -> Self {
        Witness { name: name.to_string(), element: Element::Vertex, id }
    }

    pub fn edge(name: &str, id: usize) -> Self {
        Witness { name: name.to_string(), element: Element::Edge, id }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub rule: Rule,
    pub witnesses: Vec<Witness>,
    pub refinements_applied: Vec<Refinement>,
    /// Contract whose code holds the witness block.
    pub victim: Address,
    /// Entry pc of the witness block.
    pub pc: u64,
    pub note: String,
}

impl Finding {
    pub fn witness(&self, name: &str) -> Option<usize> {
        self.witnesses.iter().find(|w| w.name == name).map(|w| w.id)
    }

    fn ids(&self) -> Vec<usize> {
        self.witnesses.iter().map(|w| w.id).collect()
    }
}

/// Sorts by rule, then witness ids.
pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| (a.rule, a.ids(), a.victim, a.pc).cmp(&(b.rule, b.ids(), b.victim, b.pc)));
}

/// Everything a detector may look at: the graph plus the records it was
/// built from.
#[derive(Clone, Copy)]
pub struct Analysis<'a> {
    pub trace: &'a Trace,
    pub tree: &'a CallTree,
    pub flows: &'a FlowOutput,
    pub epg: &'a Epg,
}

impl<'a> Analysis<'a> {
    pub fn new(trace: &'a Trace, tree: &'a CallTree, flows: &'a FlowOutput, epg: &'a Epg) -> Result<Self, DetectError> {
        if epg.granularity != ContractGranularity::Frame {
            return Err(DetectError::Granularity);
        }
        Ok(Analysis { trace, tree, flows, epg })
    }

    /// Contract vertices of all frames, in frame order.
    pub fn frame_vertices(&self) -> Vec<VertexId> {
        (0..self.tree.len()).map(|f| self.epg.frame_vertex(f)).collect()
    }

    pub fn frame_of(&self, v: VertexId) -> Option<FrameId> {
        self.epg.frame_of(v)
    }

    pub fn source_vertex(&self, id: Identifier) -> Option<VertexId> {
        self.epg.source_vertex(&SourceRef::context(id))
    }

    /// Vertices standing for "the transaction origin" in access checks.
    pub fn origin_vertices(&self, cfg: &DetectorConfig) -> VertexSet {
        let mut out = VertexSet::new();
        out.extend(self.source_vertex(Identifier::Origin));
        if cfg.accept_root_caller {
            out.extend(self.source_vertex(Identifier::Caller(0)));
        }
        out
    }

    pub fn owner(&self, v: VertexId) -> Address {
        self.epg.owner_address(v, self.tree).unwrap_or(Address::ZERO)
    }

    pub fn block_pc(&self, v: VertexId) -> u64 {
        self.epg.block(v).map_or(0, |b| b.pc)
    }

    /// Contracts treated as attacker-owned by A1.
    pub fn attacker_addresses(&self, cfg: &DetectorConfig) -> BTreeSet<Address> {
        let mut out = cfg.attacker_contracts.clone();
        for f in self.tree.frames() {
            if f.kind.is_create() && !f.reverted {
                out.insert(f.callee);
            }
        }
        out
    }

    /// Non-discarded flows grouped by the block that issued them.
    pub fn flows_by_block(&self) -> BTreeMap<VertexId, Vec<usize>> {
        let mut out: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
        for (i, rec) in self.flows.flows.iter().enumerate() {
            if rec.discarded {
                continue;
            }
            let tail = self.epg.graph.edge(self.epg.ct_edge(rec.frame)).tail;
            if self.epg.block(tail).is_some() {
                out.entry(tail).or_default().push(i);
            }
        }
        out
    }
}

/// Re-evaluates a finding's rule on its witnesses alone.
pub fn recheck(a: &Analysis, cfg: &DetectorConfig, f: &Finding) -> Result<bool, DetectError> {
    let Some(b) = f.witness("b") else { return Ok(false) };
    match f.rule {
        Rule::Reentrancy | Rule::ReentrancyR1 => {
            let (Some(v0), Some(v)) = (f.witness("v0"), f.witness("v")) else { return Ok(false) };
            reentrancy::triple_holds(a, Triple { v0, v, b }, f.rule == Rule::ReentrancyR1)
        }
        Rule::FaultyAccessControl => access::fac_holds(a, cfg, b),
        Rule::PriceManipulation => price::price_holds(a, cfg, b),
    }
}

pub(crate) fn sigma_c_ct() -> Vec<Label> {
    let mut ls = Label::SIGMA_C.to_vec();
    ls.extend(Label::sigma_ct());
    ls
}

/// Keeps one finding per (rule, victim, pc), choosing with `better`.
pub(crate) fn dedup(findings: Vec<Finding>, better: impl Fn(&Finding, &Finding) -> bool) -> Vec<Finding> {
    let mut keep: BTreeMap<(Rule, Address, u64), Finding> = BTreeMap::new();
    for f in findings {
        let key = (f.rule, f.victim, f.pc);
        match keep.get(&key) {
            Some(existing) if !better(&f, existing) => {}
            _ => {
                keep.insert(key, f);
            }
        }
    }
    let mut out: Vec<Finding> = keep.into_values().collect();
    sort_findings(&mut out);
    out
}

pub(crate) fn lower_ids(a: &Finding, b: &Finding) -> bool {
    a.ids() < b.ids()
}
