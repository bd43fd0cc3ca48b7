use std::collections::{BTreeMap, HashMap};

use super::assets::{extract_eth_flow, extract_token_flow, Allowlist};
use super::shadow::{transfer_tags, Effect, ShadowFrame, SourceLookup};
use super::{AssetFlow, ControlRecord, DataTag, FlowError, FlowRecord, Identifier, SourceRef, WriteRecord};
use crate::opcode::Opcode;
use crate::trace::{simulate, CallFrame, CallKind, CallTree, FrameId, Observer, OpStep, Trace};
use crate::types::{Address, Word};

/// Everything the shadow replay learned about one transaction.
#[derive(Debug, Clone, Default)]
pub struct FlowOutput {
    pub writes: Vec<WriteRecord>,
    pub controls: Vec<ControlRecord>,
    pub flows: Vec<FlowRecord>,
    pub warnings: Vec<String>,
    /// Concrete values observed for source versions on load.
    pub observed: BTreeMap<SourceRef, Word>,
    /// Shadow stack before each step, when requested.
    pub stacks: Option<Vec<Vec<DataTag>>>,
}

#[derive(Debug, Clone, Default)]
pub struct TrackerOptions {
    pub allowlist: Option<Allowlist>,
    pub record_stacks: bool,
}

/// Builds the control record for a JUMPI from its pre-state.
pub fn record_control(index: usize, step: &OpStep, frame: &ShadowFrame, next: &OpStep) -> Option<ControlRecord> {
    if step.op != Opcode::JUMPI || frame.stack.len() < 2 {
        return None;
    }
    let condition = step.peek(1)?;
    Some(ControlRecord {
        frame: frame.frame,
        jumpi_step: index,
        condition_tag: frame.stack[frame.stack.len() - 2].clone(),
        condition_value: !condition.is_zero(),
        taken_block_pc: next.pc,
        taken_step: index + 1,
    })
}

/// Builds the write record for an SSTORE from its pre-state; `version` is
/// the version the write creates.
pub fn record_write(index: usize, step: &OpStep, frame: &ShadowFrame, version: u32) -> Option<WriteRecord> {
    if step.op != Opcode::SSTORE || frame.stack.len() < 2 {
        return None;
    }
    let n = frame.stack.len();
    Some(WriteRecord {
        frame: frame.frame,
        step: Some(index),
        target: SourceRef::new(Identifier::Storage { contract: frame.storage_address, slot: step.peek(0)? }, version),
        value: step.peek(1)?,
        value_tag: frame.stack[n - 2].clone(),
        slot_tag: frame.stack[n - 1].clone(),
        discarded: false,
    })
}

#[derive(Debug, Default)]
struct SourceState {
    versions: HashMap<Identifier, u32>,
    /// Value tags of balance writes, replayed on balance reads.
    balance_tags: HashMap<SourceRef, DataTag>,
    transient: HashMap<(Address, Word), DataTag>,
}

impl SourceState {
    fn current(&self, id: &Identifier) -> u32 {
        self.versions.get(id).copied().unwrap_or(0)
    }

    fn bump(&mut self, id: &Identifier) -> u32 {
        let v = self.versions.entry(id.clone()).or_insert(0);
        *v += 1;
        *v
    }

    fn balance_ref(&self, account: Address) -> SourceRef {
        let id = Identifier::Balance(account);
        SourceRef::new(id.clone(), self.current(&id))
    }
}

impl SourceLookup for SourceState {
    fn storage(&self, contract: Address, slot: Word) -> DataTag {
        let id = Identifier::Storage { contract, slot };
        let v = self.current(&id);
        DataTag::single(SourceRef::new(id, v))
    }

    fn balance(&self, account: Address) -> DataTag {
        let r = self.balance_ref(account);
        let mut tag = self.balance_tags.get(&r).cloned().unwrap_or_default();
        tag.insert(r);
        tag
    }

    fn transient(&self, contract: Address, slot: Word) -> DataTag {
        self.transient.get(&(contract, slot)).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default)]
struct Pending {
    target_tag: DataTag,
    value_tag: DataTag,
    input: Vec<DataTag>,
    out_offset: usize,
    out_len: usize,
}

struct Mark {
    writes: usize,
    flows: usize,
    ledger: BTreeMap<Address, Word>,
}

/// Observer that runs the shadow machine over a replayed trace.
pub struct FlowTracker<'a> {
    tree: &'a CallTree,
    allowlist: Option<&'a Allowlist>,
    state: SourceState,
    shadows: Vec<ShadowFrame>,
    pending: Vec<Pending>,
    marks: Vec<Mark>,
    outputs: HashMap<FrameId, Vec<DataTag>>,
    ledger: BTreeMap<Address, Word>,
    out: FlowOutput,
}

impl<'a> FlowTracker<'a> {
    pub fn new(trace: &'a Trace, tree: &'a CallTree, options: &'a TrackerOptions) -> Self {
        FlowTracker {
            tree,
            allowlist: options.allowlist.as_ref(),
            state: SourceState::default(),
            shadows: Vec::new(),
            pending: Vec::new(),
            marks: Vec::new(),
            outputs: HashMap::new(),
            ledger: trace.envelope.balances.clone(),
            out: FlowOutput { stacks: options.record_stacks.then(Vec::new), ..Default::default() },
        }
    }

    pub fn finish(self) -> FlowOutput {
        self.out
    }

    fn write_balance(&mut self, writer: FrameId, step: Option<usize>, account: Address, value_tag: &DataTag) {
        let id = Identifier::Balance(account);
        let version = self.state.bump(&id);
        let target = SourceRef::new(id, version);
        self.state.balance_tags.insert(target.clone(), value_tag.clone());
        self.out.writes.push(WriteRecord {
            frame: writer,
            step,
            target,
            value: self.ledger.get(&account).copied().unwrap_or_default(),
            value_tag: value_tag.clone(),
            slot_tag: DataTag::empty(),
            discarded: false,
        });
    }

    fn transfer_value(&mut self, frame: &CallFrame, pending: &Pending) {
        let Some(flow) = extract_eth_flow(frame) else { return };
        if flow.from == flow.to {
            return;
        }
        let writer = frame.parent.unwrap_or(0);
        let (value_tag, amount_tag, destination_tag) = match frame.kind {
            CallKind::SelfDestruct => {
                let t = self.state.balance(flow.from);
                (t.clone(), t, pending.target_tag.clone())
            }
            _ if frame.parent.is_none() => {
                let t = DataTag::single(SourceRef::context(Identifier::CallValue(frame.id)));
                (t.clone(), t, DataTag::empty())
            }
            _ => {
                let mut v = DataTag::single(SourceRef::context(Identifier::CallValue(frame.id)));
                v.extend(&pending.value_tag);
                (v, pending.value_tag.clone(), pending.target_tag.clone())
            }
        };
        let from = self.ledger.entry(flow.from).or_default();
        *from = from.saturating_sub(flow.amount);
        let to = self.ledger.entry(flow.to).or_default();
        *to = to.saturating_add(flow.amount);
        self.write_balance(writer, frame.call_step, flow.from, &value_tag);
        self.write_balance(writer, frame.call_step, flow.to, &value_tag);
        self.out.flows.push(FlowRecord {
            frame: frame.id,
            step: frame.call_step,
            flow,
            amount_tag,
            destination_tag,
            discarded: false,
        });
    }

    fn apply_effect(&mut self, index: usize, step: &OpStep, fid: FrameId, effect: Effect) {
        match effect {
            Effect::TransientWrite { slot, tag } => {
                let addr = self.tree.frame(fid).storage_address;
                self.state.transient.insert((addr, slot), tag);
            }
            Effect::Log { topics, data } => {
                let emitter = self.tree.frame(fid).storage_address;
                match extract_token_flow(index, step, emitter, self.allowlist) {
                    Ok(Some(flow)) => {
                        let amount_tag = DataTag::union_all(data.iter().take(32));
                        self.out.flows.push(FlowRecord {
                            frame: fid,
                            step: Some(index),
                            flow,
                            amount_tag,
                            destination_tag: topics.get(2).cloned().unwrap_or_default(),
                            discarded: false,
                        });
                    }
                    Ok(None) => {}
                    Err(e) => {
                        log::warn!("{e}");
                        self.out.warnings.push(e.to_string());
                    }
                }
            }
            Effect::Invoke { target_tag, value_tag, input, out_offset, out_len } => {
                if let Some(p) = self.pending.last_mut() {
                    *p = Pending { target_tag, value_tag, input, out_offset, out_len };
                }
            }
            Effect::SelfDestruct { beneficiary_tag } => {
                if let Some(p) = self.pending.last_mut() {
                    *p = Pending { target_tag: beneficiary_tag, ..Default::default() };
                }
            }
            Effect::Halt { output } => {
                self.outputs.insert(fid, output);
            }
            Effect::StorageWrite { .. } | Effect::Branch { .. } | Effect::None | Effect::Fault => {}
        }
    }
}

impl Observer for FlowTracker<'_> {
    type Error = FlowError;

    fn enter_frame(&mut self, frame: &CallFrame) -> Result<(), FlowError> {
        let pending = self.pending.last().cloned().unwrap_or_default();
        self.marks.push(Mark { writes: self.out.writes.len(), flows: self.out.flows.len(), ledger: self.ledger.clone() });
        let failed_before_entry = frame.steps.is_empty() && frame.reverted;
        if !failed_before_entry {
            self.transfer_value(frame, &pending);
        }
        let input = if frame.parent.is_some() { pending.input } else { Vec::new() };
        self.shadows.push(ShadowFrame::new(frame.id, frame.context_frame, frame.storage_address, input));
        self.pending.push(Pending::default());
        Ok(())
    }

    fn step(&mut self, index: usize, step: &OpStep, fid: FrameId, next: Option<&OpStep>) -> Result<(), FlowError> {
        let top = self.shadows.last().expect("frame entered before its steps");
        if top.frame != fid {
            return Err(FlowError::FrameMismatch { step: index, expected: top.frame, found: fid });
        }
        if top.stack.len() != step.stack.len() {
            return Err(FlowError::ShadowDesync { step: index, shadow: top.stack.len(), concrete: step.stack.len() });
        }
        if let Some(stacks) = &mut self.out.stacks {
            stacks.push(top.stack.clone());
        }
        match step.op {
            Opcode::JUMPI => {
                if let Some(rec) = next.and_then(|n| record_control(index, step, top, n)) {
                    self.out.controls.push(rec);
                }
            }
            Opcode::SSTORE => {
                if let Some(slot) = step.peek(0) {
                    let id = Identifier::Storage { contract: top.storage_address, slot };
                    let version = self.state.current(&id) + 1;
                    if let Some(rec) = record_write(index, step, top, version) {
                        self.state.bump(&id);
                        self.out.writes.push(rec);
                    }
                }
            }
            Opcode::SLOAD | Opcode::BALANCE | Opcode::SELFBALANCE => {
                let source = match step.op {
                    Opcode::SLOAD => step.peek(0).map(|slot| {
                        let id = Identifier::Storage { contract: top.storage_address, slot };
                        SourceRef::new(id.clone(), self.state.current(&id))
                    }),
                    Opcode::BALANCE => step.peek(0).map(|a| self.state.balance_ref(Address::from_word(a))),
                    _ => Some(self.state.balance_ref(top.storage_address)),
                };
                if let (Some(source), Some(value)) = (source, next.and_then(|n| n.peek(0))) {
                    self.out.observed.entry(source).or_insert(value);
                }
            }
            _ => {}
        }
        let top = self.shadows.last_mut().expect("checked above");
        let effect = transfer_tags(index, step, top, &self.state)?;
        self.apply_effect(index, step, fid, effect);
        Ok(())
    }

    fn exit_frame(&mut self, frame: &CallFrame) -> Result<(), FlowError> {
        self.shadows.pop();
        self.pending.pop();
        let mark = self.marks.pop().expect("mark per entered frame");
        if frame.reverted {
            self.ledger = mark.ledger;
            for w in &mut self.out.writes[mark.writes..] {
                w.discarded = true;
            }
            for f in &mut self.out.flows[mark.flows..] {
                f.discarded = true;
            }
        }
        let output = self.outputs.remove(&frame.id).unwrap_or_default();
        if frame.kind == CallKind::SelfDestruct {
            return Ok(());
        }
        let (Some(parent), Some(pending)) = (self.shadows.last_mut(), self.pending.last_mut()) else {
            return Ok(());
        };
        let rd = DataTag::single(SourceRef::context(Identifier::ReturnData(frame.id)));
        let tags: Vec<DataTag> = (0..frame.output.len())
            .map(|k| output.get(k).map(|t| rd.union(t)).unwrap_or_else(|| rd.clone()))
            .collect();
        if frame.kind.is_create() {
            parent.return_data = Some((frame.id, if frame.reverted { tags } else { Vec::new() }));
        } else {
            let n = pending.out_len.min(tags.len());
            parent.mem_write(pending.out_offset, tags[..n].to_vec());
            parent.return_data = Some((frame.id, tags));
        }
        *pending = Pending::default();
        Ok(())
    }
}

/// Replays `trace` through a fresh [`FlowTracker`].
pub fn track_flows(trace: &Trace, tree: &CallTree, options: &TrackerOptions) -> Result<FlowOutput, FlowError> {
    let mut tracker = FlowTracker::new(trace, tree, options);
    simulate(tree, &trace.steps, &mut tracker)?;
    Ok(tracker.finish())
}

/// Asset flows that survived every revert.
pub fn effective_flows(out: &FlowOutput) -> impl Iterator<Item = &AssetFlow> {
    out.flows.iter().filter(|f| !f.discarded).map(|f| &f.flow)
}
