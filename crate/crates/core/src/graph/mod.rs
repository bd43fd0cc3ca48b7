//! Labeled property graphs and the execution property graph built on them.

mod build;
mod export;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::flow::AssetFlow;
use crate::trace::CallKind;
use crate::types::Word;

pub use build::{construct_epg, BlockInfo, ContractGranularity, Epg, EpgBuilder, GraphKind};
pub use export::{from_graphson, to_dot, to_graphson, write_graph, ExportFormat};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Edge alphabet: invocations, their transformed copies, control flow and
/// data dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Invoke(CallKind),
    /// Copy of an invocation edge whose tail is the initiating basic block.
    Ct(CallKind),
    Entry,
    Jump,
    Jumpi,
    Write,
    Transition,
    Control,
    Dependency,
}

impl Label {
    pub const SIGMA_C: [Label; 3] = [Label::Entry, Label::Jump, Label::Jumpi];
    pub const SIGMA_D: [Label; 4] = [Label::Write, Label::Transition, Label::Control, Label::Dependency];

    pub fn sigma_t() -> Vec<Label> {
        CallKind::ALL.iter().map(|k| Label::Invoke(*k)).collect()
    }

    pub fn sigma_ct() -> Vec<Label> {
        CallKind::ALL.iter().map(|k| Label::Ct(*k)).collect()
    }

    pub fn all() -> Vec<Label> {
        let mut v = Label::sigma_t();
        v.extend(Label::sigma_ct());
        v.extend(Label::SIGMA_C);
        v.extend(Label::SIGMA_D);
        v
    }

    pub fn is_invoke(self) -> bool {
        matches!(self, Label::Invoke(_))
    }

    pub fn is_ct(self) -> bool {
        matches!(self, Label::Ct(_))
    }

    pub fn is_control_flow(self) -> bool {
        matches!(self, Label::Entry | Label::Jump | Label::Jumpi)
    }

    pub fn is_dependence(self) -> bool {
        matches!(self, Label::Write | Label::Transition | Label::Control | Label::Dependency)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Invoke(k) => f.write_str(k.name()),
            Label::Ct(k) => write!(f, "{}_CT", k.name()),
            Label::Entry => f.write_str("ENTRY"),
            Label::Jump => f.write_str("JUMP"),
            Label::Jumpi => f.write_str("JUMPI"),
            Label::Write => f.write_str("WRITE"),
            Label::Transition => f.write_str("TRANSITION"),
            Label::Control => f.write_str("CONTROL"),
            Label::Dependency => f.write_str("DEPENDENCY"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown edge label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(base) = s.strip_suffix("_CT") {
            return CallKind::from_name(base).map(Label::Ct).ok_or_else(|| UnknownLabel(s.to_string()));
        }
        if let Some(k) = CallKind::from_name(s) {
            return Ok(Label::Invoke(k));
        }
        Ok(match s {
            "ENTRY" => Label::Entry,
            "JUMP" => Label::Jump,
            "JUMPI" => Label::Jumpi,
            "WRITE" => Label::Write,
            "TRANSITION" => Label::Transition,
            "CONTROL" => Label::Control,
            "DEPENDENCY" => Label::Dependency,
            _ => return Err(UnknownLabel(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    Contract,
    BasicBlock,
    DataSource,
}

impl VertexKind {
    pub fn name(self) -> &'static str {
        match self {
            VertexKind::Contract => "Contract",
            VertexKind::BasicBlock => "BasicBlock",
            VertexKind::DataSource => "DataSource",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [VertexKind::Contract, VertexKind::BasicBlock, VertexKind::DataSource].into_iter().find(|k| k.name() == s)
    }
}

/// Property values attached to vertices and edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropValue {
    Int(u64),
    Bool(bool),
    Str(String),
    Word(Word),
    Bytes(Vec<u8>),
    Flows(Vec<AssetFlow>),
}

impl PropValue {
    pub fn as_int(&self) -> Option<u64> {
        match self {
            PropValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_flows(&self) -> Option<&[AssetFlow]> {
        match self {
            PropValue::Flows(f) => Some(f),
            _ => None,
        }
    }
}

impl fmt::Display for PropValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropValue::Int(i) => write!(f, "{i}"),
            PropValue::Bool(b) => write!(f, "{b}"),
            PropValue::Str(s) => f.write_str(s),
            PropValue::Word(w) => write!(f, "{w:#x}"),
            PropValue::Bytes(b) => write!(f, "0x{}", hex::encode(b)),
            PropValue::Flows(flows) => {
                let parts: Vec<String> =
                    flows.iter().map(|fl| format!("{} {}->{} {:#x}", fl.asset, fl.from, fl.to, fl.amount)).collect();
                write!(f, "[{}]", parts.join("; "))
            }
        }
    }
}

pub type Properties = BTreeMap<String, PropValue>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    pub props: Properties,
}

impl Vertex {
    pub fn prop(&self, key: &str) -> Option<&PropValue> {
        self.props.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: VertexId,
    pub head: VertexId,
    pub label: Label,
    pub props: Properties,
}

impl Edge {
    pub fn prop(&self, key: &str) -> Option<&PropValue> {
        self.props.get(key)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("edge endpoint {0} does not exist")]
    MissingVertex(VertexId),
    #[error("tag references {0}, which was never materialized")]
    DanglingSource(String),
    #[error("cannot write graph: {0}")]
    SinkFailure(#[from] std::io::Error),
    #[error("invalid graph document: {0}")]
    Import(String),
}

/// A directed multigraph with labeled edges and key/value properties.
/// Vertex and edge ids are dense and follow creation order.
#[derive(Debug, Clone, Default)]
pub struct PropertyGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_index: HashMap<(VertexId, Label), Vec<EdgeId>>,
    in_index: HashMap<(VertexId, Label), Vec<EdgeId>>,
}

impl PartialEq for PropertyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl Eq for PropertyGraph {}

impl PropertyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, kind: VertexKind, props: Properties) -> VertexId {
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, kind, props });
        id
    }

    pub fn add_edge(&mut self, tail: VertexId, head: VertexId, label: Label, props: Properties) -> Result<EdgeId, GraphError> {
        for v in [tail, head] {
            if v >= self.vertices.len() {
                return Err(GraphError::MissingVertex(v));
            }
        }
        let id = self.edges.len();
        self.edges.push(Edge { id, tail, head, label, props });
        self.out_index.entry((tail, label)).or_default().push(id);
        self.in_index.entry((head, label)).or_default().push(id);
        Ok(id)
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn contains_vertex(&self, id: VertexId) -> bool {
        id < self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges leaving `v` with the given label.
    pub fn out_edges(&self, v: VertexId, label: Label) -> impl Iterator<Item = &Edge> {
        self.out_index.get(&(v, label)).into_iter().flatten().map(|e| &self.edges[*e])
    }

    /// Edges entering `v` with the given label.
    pub fn in_edges(&self, v: VertexId, label: Label) -> impl Iterator<Item = &Edge> {
        self.in_index.get(&(v, label)).into_iter().flatten().map(|e| &self.edges[*e])
    }

    pub fn count_label(&self, pred: impl Fn(Label) -> bool) -> usize {
        self.edges.iter().filter(|e| pred(e.label)).count()
    }

    /// Checks that every edge carries the keys its label mandates and that
    /// every vertex carries the keys its kind mandates.
    pub fn check_well_formed(&self) -> Result<(), String> {
        for v in &self.vertices {
            let required: &[&str] = match v.kind {
                VertexKind::Contract => &["addr"],
                VertexKind::BasicBlock => &["index", "pc"],
                VertexKind::DataSource => &["index", "identifier", "value"],
            };
            for k in required {
                if !v.props.contains_key(*k) {
                    return Err(format!("vertex {} ({}) lacks `{k}`", v.id, v.kind.name()));
                }
            }
        }
        for e in &self.edges {
            let required: &[&str] = match e.label {
                Label::Invoke(_) | Label::Ct(_) => &["index", "value", "input", "output"],
                Label::Jumpi => &["condition"],
                _ => &[],
            };
            for k in required {
                if !e.props.contains_key(*k) {
                    return Err(format!("edge {} ({}) lacks `{k}`", e.id, e.label));
                }
            }
        }
        Ok(())
    }

    /// The sub-graph made of the edges accepted by `keep` and their
    /// endpoints, renumbered densely in the original order.
    pub fn edge_induced(&self, keep: impl Fn(&Edge) -> bool, keep_vertex: impl Fn(&Vertex) -> bool) -> PropertyGraph {
        let kept: Vec<&Edge> = self.edges.iter().filter(|e| keep(e)).collect();
        let mut used = vec![false; self.vertices.len()];
        for v in &self.vertices {
            used[v.id] = keep_vertex(v);
        }
        for e in &kept {
            used[e.tail] = true;
            used[e.head] = true;
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut out = PropertyGraph::new();
        for v in &self.vertices {
            if used[v.id] {
                remap[v.id] = out.add_vertex(v.kind, v.props.clone());
            }
        }
        for e in kept {
            out.add_edge(remap[e.tail], remap[e.head], e.label, e.props.clone()).expect("endpoints kept");
        }
        out
    }
}

pub(crate) fn props<const N: usize>(pairs: [(&str, PropValue); N]) -> Properties {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_names_round_trip() {
        for l in Label::all() {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert_eq!(Label::all().len(), 21);
        assert!("CALLX".parse::<Label>().is_err());
    }

    #[test]
    fn adjacency_is_indexed_by_label() {
        let mut g = PropertyGraph::new();
        let a = g.add_vertex(VertexKind::Contract, props([("addr", PropValue::Str("a".into()))]));
        let b = g.add_vertex(VertexKind::Contract, props([("addr", PropValue::Str("b".into()))]));
        g.add_edge(a, b, Label::Jump, Properties::new()).unwrap();
        g.add_edge(a, b, Label::Write, Properties::new()).unwrap();
        assert_eq!(g.out_edges(a, Label::Jump).count(), 1);
        assert_eq!(g.in_edges(b, Label::Write).count(), 1);
        assert_eq!(g.in_edges(a, Label::Jump).count(), 0);
        assert!(matches!(g.add_edge(a, 9, Label::Jump, Properties::new()), Err(GraphError::MissingVertex(9))));
    }
}
