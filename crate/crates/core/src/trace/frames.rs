use std::collections::BTreeMap;
use std::ops::Range;

use serde::Serialize;

use super::{OpStep, Trace, TraceError};
use crate::opcode::Opcode;
use crate::types::{Address, Word};

pub type FrameId = usize;

/// Invocation opcodes that open a frame (the call-trace edge alphabet).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallKind {
    Call,
    DelegateCall,
    CallCode,
    StaticCall,
    Create,
    Create2,
    SelfDestruct,
}

impl CallKind {
    pub const ALL: [CallKind; 7] = [
        CallKind::Call,
        CallKind::DelegateCall,
        CallKind::CallCode,
        CallKind::StaticCall,
        CallKind::Create,
        CallKind::Create2,
        CallKind::SelfDestruct,
    ];

    pub fn from_opcode(op: Opcode) -> Option<Self> {
        Some(match op {
            Opcode::CALL => CallKind::Call,
            Opcode::DELEGATECALL => CallKind::DelegateCall,
            Opcode::CALLCODE => CallKind::CallCode,
            Opcode::STATICCALL => CallKind::StaticCall,
            Opcode::CREATE => CallKind::Create,
            Opcode::CREATE2 => CallKind::Create2,
            Opcode::SELFDESTRUCT => CallKind::SelfDestruct,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CallKind::Call => "CALL",
            CallKind::DelegateCall => "DELEGATECALL",
            CallKind::CallCode => "CALLCODE",
            CallKind::StaticCall => "STATICCALL",
            CallKind::Create => "CREATE",
            CallKind::Create2 => "CREATE2",
            CallKind::SelfDestruct => "SELFDESTRUCT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CallKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Invocations whose `value` moves ETH between two accounts.
    pub fn moves_ether(self) -> bool {
        matches!(self, CallKind::Call | CallKind::Create | CallKind::Create2 | CallKind::SelfDestruct)
    }

    pub fn is_create(self) -> bool {
        matches!(self, CallKind::Create | CallKind::Create2)
    }
}

/// One dynamic contract invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFrame {
    pub id: FrameId,
    pub parent: Option<FrameId>,
    pub children: Vec<FrameId>,
    /// `msg.sender` as seen by the callee.
    pub caller: Address,
    /// Code address being executed (beneficiary for SELFDESTRUCT).
    pub callee: Address,
    pub kind: CallKind,
    pub value: Word,
    pub input: Vec<u8>,
    pub output: Vec<u8>,
    pub reverted: bool,
    pub index_in_parent: usize,
    /// Half-open range of steps executed by this frame and its descendants.
    /// Empty for calls into accounts without code and for SELFDESTRUCT.
    pub steps: Range<usize>,
    /// Step in the parent frame that issued this invocation.
    pub call_step: Option<usize>,
    pub depth: u32,
    /// Account whose storage and balance the frame operates on.
    pub storage_address: Address,
    /// Frame whose `msg.sender` / `msg.value` this frame observes
    /// (differs from `id` only under DELEGATECALL).
    pub context_frame: FrameId,
}

/// The call-frame tree of one transaction. Frame ids follow entry order;
/// the root is frame 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallTree {
    frames: Vec<CallFrame>,
    step_frames: Vec<FrameId>,
}

impl CallTree {
    pub fn root(&self) -> &CallFrame {
        &self.frames[0]
    }

    pub fn frame(&self, id: FrameId) -> &CallFrame {
        &self.frames[id]
    }

    pub fn frames(&self) -> &[CallFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Innermost frame executing `step`.
    pub fn frame_of_step(&self, step: usize) -> FrameId {
        self.step_frames[step]
    }

    pub fn ancestors(&self, id: FrameId) -> impl Iterator<Item = FrameId> + '_ {
        std::iter::successors(self.frames[id].parent, move |f| self.frames[*f].parent)
    }

    /// `true` when `inner` is `outer` or one of its descendants.
    pub fn is_within(&self, inner: FrameId, outer: FrameId) -> bool {
        inner == outer || self.ancestors(inner).any(|a| a == outer)
    }

    /// A frame whose effects are rolled back, by itself or an ancestor.
    pub fn is_rolled_back(&self, id: FrameId) -> bool {
        self.frames[id].reverted || self.ancestors(id).any(|a| self.frames[a].reverted)
    }

    pub fn descendants(&self, id: FrameId) -> Vec<FrameId> {
        let mut out = Vec::new();
        let mut stack: Vec<FrameId> = self.frames[id].children.iter().rev().copied().collect();
        while let Some(f) = stack.pop() {
            out.push(f);
            stack.extend(self.frames[f].children.iter().rev());
        }
        out
    }
}

const MAX_SLICE: usize = 1 << 24;

fn to_usize(w: Word, step: usize, what: &str) -> Result<usize, TraceError> {
    if w > Word::from(MAX_SLICE as u64) {
        return Err(TraceError::schema(format!("structLogs[{step}]"), format!("{what} {w:#x} out of range")));
    }
    Ok(w.as_usize())
}

/// Stack operands, top first.
fn operands(step: &OpStep, index: usize) -> Result<Vec<Word>, TraceError> {
    let n = step.op.pops();
    if step.stack.len() < n {
        return Err(TraceError::schema(
            format!("structLogs[{index}].stack"),
            format!("{} needs {n} operands, stack holds {}", step.op, step.stack.len()),
        ));
    }
    Ok(step.stack.iter().rev().take(n).copied().collect())
}

fn mem_range(step: &OpStep, index: usize, offset: Word, len: Word) -> Result<Vec<u8>, TraceError> {
    let len = to_usize(len, index, "length")?;
    if len == 0 {
        return Ok(Vec::new());
    }
    let offset = to_usize(offset, index, "offset")?;
    Ok(step.memory_slice(offset, len))
}

struct CallArgs {
    kind: CallKind,
    target: Option<Address>,
    value: Word,
    input: Vec<u8>,
}

fn decode_call(step: &OpStep, index: usize) -> Result<CallArgs, TraceError> {
    let ops = operands(step, index)?;
    let kind = CallKind::from_opcode(step.op).expect("call-like opcode");
    Ok(match kind {
        CallKind::Call | CallKind::CallCode => CallArgs {
            kind,
            target: Some(Address::from_word(ops[1])),
            value: ops[2],
            input: mem_range(step, index, ops[3], ops[4])?,
        },
        CallKind::DelegateCall | CallKind::StaticCall => CallArgs {
            kind,
            target: Some(Address::from_word(ops[1])),
            value: Word::zero(),
            input: mem_range(step, index, ops[2], ops[3])?,
        },
        CallKind::Create | CallKind::Create2 => CallArgs {
            kind,
            target: None,
            value: ops[0],
            input: mem_range(step, index, ops[1], ops[2])?,
        },
        CallKind::SelfDestruct => unreachable!("SELFDESTRUCT is handled separately"),
    })
}

/// First step after `from` that runs at `depth` again (the caller resuming).
fn resume_step(steps: &[OpStep], from: usize, depth: u32) -> Option<usize> {
    (from + 1..steps.len()).find(|&j| steps[j].depth <= depth)
}

struct Builder<'a> {
    steps: &'a [OpStep],
    frames: Vec<CallFrame>,
    open: Vec<FrameId>,
    ledger: BTreeMap<Address, Word>,
    snapshots: Vec<BTreeMap<Address, Word>>,
}

impl Builder<'_> {
    fn transfer(&mut self, from: Address, to: Address, value: Word) {
        if value.is_zero() || from == to {
            return;
        }
        let src = self.ledger.entry(from).or_default();
        *src = src.saturating_sub(value);
        let dst = self.ledger.entry(to).or_default();
        *dst = dst.saturating_add(value);
    }

    fn push_child(&mut self, parent: FrameId, mut frame: CallFrame) -> FrameId {
        let id = self.frames.len();
        frame.id = id;
        frame.parent = Some(parent);
        frame.index_in_parent = self.frames[parent].children.len();
        if frame.kind == CallKind::DelegateCall {
            frame.context_frame = self.frames[parent].context_frame;
        } else {
            frame.context_frame = id;
        }
        self.frames[parent].children.push(id);
        self.frames.push(frame);
        id
    }

    fn close(&mut self, id: FrameId, last: usize, terminal: Option<&OpStep>) -> Result<(), TraceError> {
        let frame = &mut self.frames[id];
        frame.steps.end = last + 1;
        match terminal {
            Some(step) if step.op == Opcode::RETURN || step.op == Opcode::REVERT => {
                let ops = operands(step, last)?;
                frame.output = mem_range(step, last, ops[0], ops[1])?;
                frame.reverted = step.op == Opcode::REVERT;
            }
            Some(step) if step.op == Opcode::STOP || step.op == Opcode::SELFDESTRUCT => frame.reverted = false,
            // out-of-gas, invalid opcode, stack errors: the frame halts exceptionally
            _ => frame.reverted = true,
        }
        let snapshot = self.snapshots.pop().expect("snapshot per open frame");
        if self.frames[id].reverted {
            self.ledger = snapshot;
        }
        Ok(())
    }
}

/// Rebuilds the call-frame tree from the flat step sequence.
pub fn reconstruct_frames(trace: &Trace) -> Result<CallTree, TraceError> {
    let env = &trace.envelope;
    let steps = &trace.steps;
    let callee = env.callee().expect("envelope validated at parse time");
    let root = CallFrame {
        id: 0,
        parent: None,
        children: Vec::new(),
        caller: env.from,
        callee,
        kind: if env.to.is_some() { CallKind::Call } else { CallKind::Create },
        value: env.value,
        input: env.input.clone(),
        output: Vec::new(),
        reverted: trace.result.failed,
        index_in_parent: 0,
        steps: 0..0,
        call_step: None,
        depth: 1,
        storage_address: callee,
        context_frame: 0,
    };
    let mut b = Builder {
        steps,
        frames: vec![root],
        open: vec![0],
        ledger: env.balances.clone(),
        snapshots: vec![env.balances.clone()],
    };
    b.transfer(env.from, callee, env.value);

    if steps.is_empty() {
        if trace.result.failed {
            b.ledger = b.snapshots.pop().unwrap_or_default();
        }
        return Ok(CallTree { frames: b.frames, step_frames: Vec::new() });
    }
    if steps[0].depth != 1 {
        return Err(TraceError::InconsistentDepth { step: 0, message: format!("trace starts at depth {}", steps[0].depth) });
    }

    let mut step_frames = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let cur = *b.open.last().ok_or(TraceError::InconsistentDepth {
            step: i,
            message: "step after the top-level frame returned".into(),
        })?;
        if step.depth != b.frames[cur].depth {
            return Err(TraceError::InconsistentDepth {
                step: i,
                message: format!("expected depth {}, found {}", b.frames[cur].depth, step.depth),
            });
        }
        step_frames.push(cur);
        let next = b.steps.get(i + 1);
        let here = b.frames[cur].storage_address;

        if step.op.is_call_like() {
            let args = decode_call(step, i)?;
            let mut child = CallFrame {
                id: 0,
                parent: None,
                children: Vec::new(),
                caller: here,
                callee: args.target.unwrap_or(Address::ZERO),
                kind: args.kind,
                value: args.value,
                input: args.input,
                output: Vec::new(),
                reverted: false,
                index_in_parent: 0,
                steps: i + 1..i + 1,
                call_step: Some(i),
                depth: step.depth + 1,
                storage_address: Address::ZERO,
                context_frame: 0,
            };
            match next {
                Some(n) if n.depth == step.depth + 1 => {
                    if args.kind.is_create() {
                        let created = resume_step(steps, i, step.depth)
                            .and_then(|j| steps[j].peek(0))
                            .map(Address::from_word)
                            .unwrap_or(Address::ZERO);
                        child.callee = created;
                    }
                    child.storage_address = match args.kind {
                        CallKind::DelegateCall | CallKind::CallCode => here,
                        _ => child.callee,
                    };
                    let id = b.push_child(cur, child);
                    b.snapshots.push(b.ledger.clone());
                    if args.kind.moves_ether() {
                        let to = b.frames[id].callee;
                        b.transfer(here, to, args.value);
                    }
                    b.open.push(id);
                }
                Some(n) if n.depth == step.depth => {
                    // no code at the target (EOA or precompile) or the call failed before entry
                    let result = n.peek(0).unwrap_or_default();
                    if args.kind.is_create() {
                        child.callee = Address::from_word(result);
                    }
                    child.reverted = result.is_zero();
                    child.storage_address = match args.kind {
                        CallKind::DelegateCall | CallKind::CallCode => here,
                        _ => child.callee,
                    };
                    let to = child.callee;
                    let ok = !child.reverted;
                    b.push_child(cur, child);
                    if ok && args.kind.moves_ether() {
                        b.transfer(here, to, args.value);
                    }
                }
                Some(n) if n.depth > step.depth + 1 => {
                    return Err(TraceError::InconsistentDepth {
                        step: i + 1,
                        message: format!("depth jumps from {} to {}", step.depth, n.depth),
                    });
                }
                // the invocation itself halted the current frame
                Some(_) => {}
                None => return Err(TraceError::TruncatedTrace(b.open.len())),
            }
        } else if step.op == Opcode::SELFDESTRUCT {
            let ops = operands(step, i)?;
            let beneficiary = Address::from_word(ops[0]);
            let value = b.ledger.get(&here).copied().unwrap_or_default();
            let leaf = CallFrame {
                id: 0,
                parent: None,
                children: Vec::new(),
                caller: here,
                callee: beneficiary,
                kind: CallKind::SelfDestruct,
                value,
                input: Vec::new(),
                output: Vec::new(),
                reverted: false,
                index_in_parent: 0,
                steps: i + 1..i + 1,
                call_step: Some(i),
                depth: step.depth + 1,
                storage_address: beneficiary,
                context_frame: 0,
            };
            b.push_child(cur, leaf);
            b.transfer(here, beneficiary, value);
            b.ledger.insert(here, Word::zero());
        } else if let Some(n) = next {
            if n.depth > step.depth {
                return Err(TraceError::InconsistentDepth {
                    step: i + 1,
                    message: format!("depth increases after {} without a call opcode", step.op),
                });
            }
        }

        match next {
            None => {
                if b.open.len() > 1 {
                    return Err(TraceError::TruncatedTrace(b.open.len() - 1));
                }
                b.open.pop();
                b.close(0, i, Some(step))?;
            }
            Some(n) if n.depth < step.depth => {
                let levels = (step.depth - n.depth) as usize;
                if levels >= b.open.len() {
                    return Err(TraceError::InconsistentDepth {
                        step: i + 1,
                        message: format!("depth drops to {} below the top-level frame", n.depth),
                    });
                }
                for level in 0..levels {
                    let id = b.open.pop().expect("checked above");
                    b.close(id, i, if level == 0 { Some(step) } else { None })?;
                }
            }
            Some(_) => {}
        }
    }
    Ok(CallTree { frames: b.frames, step_frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;
    use serde_json::json;

    const EOA: &str = "0xabababababababababababababababababababcd";
    const A: &str = "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa";
    const B: &str = "0xbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb";

    fn step(pc: u64, op: &str, depth: u32, stack: &[u64]) -> serde_json::Value {
        json!({"pc": pc, "op": op, "gas": 100, "gasCost": 3, "depth": depth,
               "stack": stack.iter().map(|w| format!("{w:#x}")).collect::<Vec<_>>(), "memory": []})
    }

    fn doc(steps: Vec<serde_json::Value>) -> Trace {
        let d = json!({"tx": {"txHash": "0x1", "from": EOA, "to": A, "value": "0x0", "input": "0x"},
                       "trace": {"gas": 0, "failed": false, "returnValue": "", "structLogs": steps}});
        parse_trace(d.to_string().as_bytes()).unwrap()
    }

    fn call_stack(target: &str, value: u64) -> Vec<serde_json::Value> {
        // gas, addr, value, in_off, in_len, out_off, out_len (top last)
        let addr = crate::types::parse_word(target).unwrap();
        let s = vec![0u64, 0, 0, 0, value];
        let mut v: Vec<serde_json::Value> = s.iter().map(|w| json!(format!("{w:#x}"))).collect();
        v.push(json!(format!("{addr:#x}")));
        v.push(json!("0xffff"));
        v
    }

    #[test]
    fn single_frame_without_calls() {
        let t = doc(vec![step(0, "PUSH1", 1, &[]), step(2, "STOP", 1, &[1])]);
        let tree = reconstruct_frames(&t).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.root().steps, 0..2);
        assert!(!tree.root().reverted);
    }

    #[test]
    fn call_followed_by_callee_revert() {
        let mut call = step(10, "CALL", 1, &[]);
        call["stack"] = json!(call_stack(B, 5));
        let t = doc(vec![
            call,
            step(0, "PUSH1", 2, &[]),
            step(2, "PUSH1", 2, &[0]),
            step(4, "REVERT", 2, &[0, 0]),
            step(11, "STOP", 1, &[0]),
        ]);
        let tree = reconstruct_frames(&t).unwrap();
        assert_eq!(tree.len(), 2);
        let child = tree.frame(1);
        assert!(child.reverted);
        assert_eq!(child.steps, 1..4);
        assert_eq!(child.value, Word::from(5));
        assert_eq!(child.callee, B.parse().unwrap());
        assert_eq!(child.caller, A.parse().unwrap());
        assert_eq!(tree.frame_of_step(2), 1);
        assert_eq!(tree.frame_of_step(4), 0);
    }

    #[test]
    fn call_into_account_without_code_opens_empty_frame() {
        let mut call = step(10, "CALL", 1, &[]);
        call["stack"] = json!(call_stack(B, 7));
        let t = doc(vec![call, step(11, "STOP", 1, &[1])]);
        let tree = reconstruct_frames(&t).unwrap();
        let child = tree.frame(1);
        assert!(child.steps.is_empty());
        assert!(!child.reverted);
    }

    #[test]
    fn depth_increase_without_call_is_rejected() {
        let t = doc(vec![step(0, "ADD", 1, &[1, 2]), step(1, "STOP", 2, &[])]);
        assert!(matches!(reconstruct_frames(&t), Err(TraceError::InconsistentDepth { .. })));
    }

    #[test]
    fn open_frames_at_end_are_truncation() {
        let mut call = step(10, "CALL", 1, &[]);
        call["stack"] = json!(call_stack(B, 0));
        let t = doc(vec![call, step(0, "PUSH1", 2, &[])]);
        assert!(matches!(reconstruct_frames(&t), Err(TraceError::TruncatedTrace(1))));
    }

    #[test]
    fn exceptional_halt_marks_frame_reverted() {
        let mut call = step(10, "CALL", 1, &[]);
        call["stack"] = json!(call_stack(B, 0));
        let t = doc(vec![call, step(0, "ADD", 2, &[]), step(11, "STOP", 1, &[0])]);
        let tree = reconstruct_frames(&t).unwrap();
        assert!(tree.frame(1).reverted);
    }
}
