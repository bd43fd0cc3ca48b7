use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{props, GraphError, Label, PropValue, Properties, PropertyGraph, VertexId, VertexKind};
use crate::flow::{FlowOutput, Identifier, SourceRef};
use crate::opcode::Opcode;
use crate::trace::{CallTree, FrameId, Trace};
use crate::types::Address;

/// How contract vertices are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContractGranularity {
    /// One vertex per distinct address.
    #[default]
    Address,
    /// One vertex per call frame; the sending account keeps a vertex of its own.
    Frame,
}

/// Which edge families an export should contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Ctg,
    Dcfg,
    Ddg,
    Epg,
}

impl std::str::FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ctg" => Ok(GraphKind::Ctg),
            "dcfg" => Ok(GraphKind::Dcfg),
            "ddg" => Ok(GraphKind::Ddg),
            "epg" => Ok(GraphKind::Epg),
            other => Err(format!("unknown graph kind `{other}`")),
        }
    }
}

/// Where a basic-block vertex came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInfo {
    pub frame: FrameId,
    pub pc: u64,
    /// Visit number of this entry pc within the frame.
    pub index: u32,
    pub first_step: usize,
    pub last_step: usize,
}

/// An execution property graph together with the registries that tie its
/// vertices back to frames, steps and data sources.
#[derive(Debug, Clone)]
pub struct Epg {
    pub graph: PropertyGraph,
    pub granularity: ContractGranularity,
    sender: VertexId,
    frame_vertex: Vec<VertexId>,
    contract_frames: BTreeMap<VertexId, Vec<FrameId>>,
    contract_addr: BTreeMap<VertexId, Address>,
    blocks: BTreeMap<VertexId, BlockInfo>,
    block_by_key: BTreeMap<(FrameId, u64, u32), VertexId>,
    step_block: Vec<Option<VertexId>>,
    sources: BTreeMap<VertexId, SourceRef>,
    source_by_ref: BTreeMap<SourceRef, VertexId>,
    invoke_edges: Vec<usize>,
    ct_edges: Vec<usize>,
}

impl Epg {
    /// Vertex of the externally owned account that sent the transaction.
    pub fn sender(&self) -> VertexId {
        self.sender
    }

    /// Contract vertex of the root frame.
    pub fn root(&self) -> VertexId {
        self.frame_vertex[0]
    }

    pub fn frame_vertex(&self, frame: FrameId) -> VertexId {
        self.frame_vertex[frame]
    }

    /// Frames represented by a contract vertex, in entry order.
    pub fn frames_of(&self, contract: VertexId) -> &[FrameId] {
        self.contract_frames.get(&contract).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contract_address(&self, v: VertexId) -> Option<Address> {
        self.contract_addr.get(&v).copied()
    }

    /// Address of the contract whose code a block or contract vertex belongs to.
    pub fn owner_address(&self, v: VertexId, tree: &CallTree) -> Option<Address> {
        match self.blocks.get(&v) {
            Some(b) => Some(tree.frame(b.frame).storage_address),
            None => self.contract_address(v),
        }
    }

    pub fn block(&self, v: VertexId) -> Option<&BlockInfo> {
        self.blocks.get(&v)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (VertexId, &BlockInfo)> {
        self.blocks.iter().map(|(v, b)| (*v, b))
    }

    pub fn block_at(&self, frame: FrameId, pc: u64, index: u32) -> Option<VertexId> {
        self.block_by_key.get(&(frame, pc, index)).copied()
    }

    /// Block whose execution contains `step`.
    pub fn block_of_step(&self, step: usize) -> Option<VertexId> {
        self.step_block.get(step).copied().flatten()
    }

    pub fn source(&self, v: VertexId) -> Option<&SourceRef> {
        self.sources.get(&v)
    }

    pub fn source_vertex(&self, source: &SourceRef) -> Option<VertexId> {
        self.source_by_ref.get(source).copied()
    }

    pub fn sources(&self) -> impl Iterator<Item = (VertexId, &SourceRef)> {
        self.sources.iter().map(|(v, s)| (*v, s))
    }

    /// The frame a contract or block vertex stands for, when unique.
    pub fn frame_of(&self, v: VertexId) -> Option<FrameId> {
        if let Some(b) = self.blocks.get(&v) {
            return Some(b.frame);
        }
        match self.frames_of(v) {
            [f] => Some(*f),
            _ => None,
        }
    }

    /// Invocation edge entering `frame`.
    pub fn invoke_edge(&self, frame: FrameId) -> usize {
        self.invoke_edges[frame]
    }

    /// Transformed invocation edge entering `frame`.
    pub fn ct_edge(&self, frame: FrameId) -> usize {
        self.ct_edges[frame]
    }

    /// Copy of the graph restricted to one family of edges.
    pub fn subgraph(&self, kind: GraphKind) -> PropertyGraph {
        match kind {
            GraphKind::Epg => self.graph.clone(),
            GraphKind::Ctg => self.graph.edge_induced(|e| e.label.is_invoke(), |v| v.kind == VertexKind::Contract),
            GraphKind::Dcfg => self.graph.edge_induced(|e| e.label.is_control_flow(), |v| v.kind == VertexKind::BasicBlock),
            GraphKind::Ddg => self.graph.edge_induced(|e| e.label.is_dependence(), |v| v.kind == VertexKind::DataSource),
        }
    }
}

/// Incremental construction of an [`Epg`]. The three component graphs share
/// one vertex space so that the final merge is a union.
pub struct EpgBuilder<'a> {
    trace: &'a Trace,
    tree: &'a CallTree,
    flows: &'a FlowOutput,
    epg: Epg,
    by_address: BTreeMap<Address, VertexId>,
    discarded: BTreeSet<SourceRef>,
    recorded: BTreeMap<SourceRef, crate::types::Word>,
}

impl<'a> EpgBuilder<'a> {
    pub fn new(trace: &'a Trace, tree: &'a CallTree, flows: &'a FlowOutput, granularity: ContractGranularity) -> Self {
        let mut discarded = BTreeSet::new();
        let mut recorded = BTreeMap::new();
        for w in &flows.writes {
            recorded.insert(w.target.clone(), w.value);
            if w.discarded {
                discarded.insert(w.target.clone());
            }
        }
        EpgBuilder {
            trace,
            tree,
            flows,
            epg: Epg {
                graph: PropertyGraph::new(),
                granularity,
                sender: 0,
                frame_vertex: Vec::new(),
                contract_frames: BTreeMap::new(),
                contract_addr: BTreeMap::new(),
                blocks: BTreeMap::new(),
                block_by_key: BTreeMap::new(),
                step_block: vec![None; trace.steps.len()],
                sources: BTreeMap::new(),
                source_by_ref: BTreeMap::new(),
                invoke_edges: Vec::new(),
                ct_edges: Vec::new(),
            },
            by_address: BTreeMap::new(),
            discarded,
            recorded,
        }
    }

    fn contract_vertex(&mut self, addr: Address, fresh: bool) -> VertexId {
        if !fresh {
            if let Some(v) = self.by_address.get(&addr) {
                return *v;
            }
        }
        let v = self.epg.graph.add_vertex(VertexKind::Contract, props([("addr", PropValue::Str(addr.to_string()))]));
        self.epg.contract_addr.insert(v, addr);
        self.by_address.entry(addr).or_insert(v);
        v
    }

    /// Call-trace graph: one invocation edge per frame, from the caller's
    /// contract vertex to the callee's.
    pub fn build_ctg(&mut self) -> Result<(), GraphError> {
        let frame_mode = self.epg.granularity == ContractGranularity::Frame;
        self.epg.sender = self.contract_vertex(self.trace.envelope.from, false);
        let mut flow_props: HashMap<FrameId, Vec<_>> = HashMap::new();
        for rec in self.flows.flows.iter().filter(|r| !r.discarded) {
            flow_props.entry(rec.frame).or_default().push(rec.flow.clone());
        }
        for frame in self.tree.frames() {
            let v = self.contract_vertex(frame.callee, frame_mode);
            self.epg.frame_vertex.push(v);
            self.epg.contract_frames.entry(v).or_default().push(frame.id);
            let tail = frame.parent.map(|p| self.epg.frame_vertex[p]).unwrap_or(self.epg.sender);
            let mut p = props([
                ("index", PropValue::Int(frame.index_in_parent as u64)),
                ("value", PropValue::Word(frame.value)),
                ("input", PropValue::Bytes(frame.input.clone())),
                ("output", PropValue::Bytes(frame.output.clone())),
            ]);
            if let Some(flows) = flow_props.remove(&frame.id) {
                p.insert("assetFlow".into(), PropValue::Flows(flows));
            }
            let e = self.epg.graph.add_edge(tail, v, Label::Invoke(frame.kind), p)?;
            self.epg.invoke_edges.push(e);
        }
        Ok(())
    }

    /// Dynamic control-flow graph of every frame. Blocks start at a frame's
    /// first step, after each jump and where execution resumes after a call.
    pub fn build_dcfg(&mut self) -> Result<(), GraphError> {
        let steps = &self.trace.steps;
        let mut current: HashMap<FrameId, (VertexId, usize)> = HashMap::new();
        let mut visits: HashMap<(FrameId, u64), u32> = HashMap::new();
        for (i, step) in steps.iter().enumerate() {
            let f = self.tree.frame_of_step(i);
            let edge = match current.get(&f) {
                None => Some((self.epg.frame_vertex[f], Label::Entry, Properties::new())),
                Some(&(block, prev)) => {
                    let op = steps[prev].op;
                    if op == Opcode::JUMP || op.is_call_like() {
                        Some((block, Label::Jump, Properties::new()))
                    } else if op == Opcode::JUMPI {
                        let taken = steps[prev].peek(1).is_some_and(|c| !c.is_zero());
                        Some((block, Label::Jumpi, props([("condition", PropValue::Bool(taken))])))
                    } else {
                        None
                    }
                }
            };
            let block = match edge {
                Some((tail, label, p)) => {
                    let count = visits.entry((f, step.pc)).or_insert(0);
                    let index = *count;
                    *count += 1;
                    let v = self.epg.graph.add_vertex(
                        VertexKind::BasicBlock,
                        props([("index", PropValue::Int(index as u64)), ("pc", PropValue::Int(step.pc))]),
                    );
                    self.epg.blocks.insert(v, BlockInfo { frame: f, pc: step.pc, index, first_step: i, last_step: i });
                    self.epg.block_by_key.insert((f, step.pc, index), v);
                    self.epg.graph.add_edge(tail, v, label, p)?;
                    v
                }
                None => {
                    let v = current[&f].0;
                    self.epg.blocks.get_mut(&v).expect("registered block").last_step = i;
                    v
                }
            };
            self.epg.step_block[i] = Some(block);
            current.insert(f, (block, i));
        }
        Ok(())
    }

    fn source_value(&self, source: &SourceRef) -> PropValue {
        let env = &self.trace.envelope;
        if let Some(v) = self.flows.observed.get(source) {
            return PropValue::Word(*v);
        }
        match &source.id {
            Identifier::Balance(a) if source.version == 0 => {
                PropValue::Word(env.balances.get(a).copied().unwrap_or_default())
            }
            Identifier::CallData(f) => PropValue::Bytes(self.tree.frame(*f).input.clone()),
            Identifier::ReturnData(f) => PropValue::Bytes(self.tree.frame(*f).output.clone()),
            Identifier::CallValue(f) => PropValue::Word(self.tree.frame(*f).value),
            Identifier::Caller(f) => PropValue::Str(self.tree.frame(*f).caller.to_string()),
            Identifier::Origin => PropValue::Str(env.from.to_string()),
            Identifier::BlockNumber => PropValue::Int(env.block_number),
            Identifier::Timestamp => PropValue::Int(env.timestamp),
            _ => PropValue::Str("unknown".into()),
        }
    }

    /// Vertex for `source`, created on first use. Versions rolled back by a
    /// revert resolve to `None`.
    fn resolve(&mut self, source: &SourceRef) -> Result<Option<VertexId>, GraphError> {
        if let Some(v) = self.epg.source_by_ref.get(source) {
            return Ok(Some(*v));
        }
        if self.discarded.contains(source) {
            return Ok(None);
        }
        if source.id.is_writable() && source.version > 0 && !self.recorded.contains_key(source) {
            return Err(GraphError::DanglingSource(source.to_string()));
        }
        let value = self.write_value(source).unwrap_or_else(|| self.source_value(source));
        let v = self.epg.graph.add_vertex(
            VertexKind::DataSource,
            props([
                ("index", PropValue::Int(source.version as u64)),
                ("identifier", PropValue::Str(source.id.to_string())),
                ("value", value),
            ]),
        );
        self.epg.sources.insert(v, source.clone());
        self.epg.source_by_ref.insert(source.clone(), v);
        Ok(Some(v))
    }

    fn write_value(&self, source: &SourceRef) -> Option<PropValue> {
        self.recorded.get(source).map(|w| PropValue::Word(*w))
    }

    /// Dynamic dependence graph over data-source versions.
    pub fn build_ddg(&mut self) -> Result<(), GraphError> {
        enum Event<'r> {
            Write(&'r crate::flow::WriteRecord),
            Control(&'r crate::flow::ControlRecord),
        }
        let flows = self.flows;
        let mut events: Vec<(usize, usize, Event)> = Vec::new();
        for (k, w) in flows.writes.iter().enumerate().filter(|(_, w)| !w.discarded) {
            events.push((w.step.map_or(0, |s| s + 1), k, Event::Write(w)));
        }
        for (k, c) in flows.controls.iter().enumerate() {
            events.push((c.jumpi_step + 1, flows.writes.len() + k, Event::Control(c)));
        }
        events.sort_by_key(|(s, k, _)| (*s, *k));

        let mut control_seen: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
        for (_, _, event) in events {
            match event {
                Event::Write(w) => {
                    let mut deps = Vec::new();
                    for s in w.value_tag.iter().chain(w.slot_tag.iter()) {
                        if let Some(v) = self.resolve(s)? {
                            deps.push(v);
                        }
                    }
                    let target = self.resolve(&w.target)?.expect("kept write is materialized");
                    if let Some(block) = w.step.and_then(|s| self.epg.step_block[s]) {
                        self.epg.graph.add_edge(block, target, Label::Write, Properties::new())?;
                    }
                    let mut seen = BTreeSet::new();
                    for d in deps {
                        if d != target && seen.insert(d) {
                            self.epg.graph.add_edge(d, target, Label::Dependency, Properties::new())?;
                        }
                    }
                }
                Event::Control(c) => {
                    let Some(block) = self.epg.step_block.get(c.taken_step).copied().flatten() else { continue };
                    for s in c.condition_tag.iter() {
                        if let Some(v) = self.resolve(s)? {
                            if control_seen.insert((v, block)) {
                                self.epg.graph.add_edge(v, block, Label::Control, Properties::new())?;
                            }
                        }
                    }
                }
            }
        }
        for rec in flows.flows.iter().filter(|r| !r.discarded) {
            for s in rec.amount_tag.iter().chain(rec.destination_tag.iter()) {
                self.resolve(s)?;
            }
        }

        let mut chains: BTreeMap<Identifier, Vec<(u32, VertexId)>> = BTreeMap::new();
        for (v, s) in &self.epg.sources {
            if s.id.is_writable() {
                chains.entry(s.id.clone()).or_default().push((s.version, *v));
            }
        }
        for chain in chains.values_mut() {
            chain.sort();
            for pair in chain.windows(2) {
                self.epg.graph.add_edge(pair[0].1, pair[1].1, Label::Transition, Properties::new())?;
            }
        }
        Ok(())
    }

    /// Adds a transformed copy of every invocation edge whose tail is the
    /// basic block that issued the call, and returns the finished graph.
    pub fn finish(mut self) -> Result<Epg, GraphError> {
        for frame in self.tree.frames() {
            let original = self.epg.graph.edge(self.epg.invoke_edges[frame.id]).clone();
            let tail = frame.call_step.and_then(|s| self.epg.step_block[s]).unwrap_or(original.tail);
            let Label::Invoke(kind) = original.label else { unreachable!("invocation edge") };
            let e = self.epg.graph.add_edge(tail, original.head, Label::Ct(kind), original.props)?;
            self.epg.ct_edges.push(e);
        }
        Ok(self.epg)
    }
}

/// Builds the call-trace, control-flow and dependence graphs and merges them.
pub fn construct_epg(
    trace: &Trace,
    tree: &CallTree,
    flows: &FlowOutput,
    granularity: ContractGranularity,
) -> Result<Epg, GraphError> {
    let mut b = EpgBuilder::new(trace, tree, flows, granularity);
    b.build_ctg()?;
    b.build_dcfg()?;
    b.build_ddg()?;
    b.finish()
}
