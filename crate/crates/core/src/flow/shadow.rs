use super::{DataTag, FlowError, Identifier, SourceRef};
use crate::opcode::Opcode;
use crate::trace::{FrameId, OpStep};
use crate::types::{Address, Word};

const MEMORY_BOUND: usize = 1 << 26;

/// Current-version lookups the shadow machine needs for load opcodes.
pub trait SourceLookup {
    /// Tag of an `SLOAD` from `slot` of `contract`.
    fn storage(&self, contract: Address, slot: Word) -> DataTag;
    /// Tag of a balance read, including implicit call-value provenance.
    fn balance(&self, account: Address) -> DataTag;
    fn transient(&self, contract: Address, slot: Word) -> DataTag;
}

/// Shadow state of one executing frame: a tag per stack item and per
/// memory byte.
#[derive(Debug, Clone, Default)]
pub struct ShadowFrame {
    pub frame: FrameId,
    /// Frame supplying `CALLER` and `CALLVALUE` (differs under DELEGATECALL).
    pub context_frame: FrameId,
    pub storage_address: Address,
    pub stack: Vec<DataTag>,
    pub memory: Vec<DataTag>,
    /// Provenance of each input byte, inherited from the caller's memory.
    pub input: Vec<DataTag>,
    /// Most recent callee and the tags of its return data.
    pub return_data: Option<(FrameId, Vec<DataTag>)>,
}

/// Side effects of one step that the shadow machine itself cannot resolve.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    None,
    StorageWrite { slot: Word, slot_tag: DataTag, value_tag: DataTag },
    TransientWrite { slot: Word, tag: DataTag },
    Branch { condition: DataTag },
    Log { topics: Vec<DataTag>, data: Vec<DataTag> },
    Invoke { target_tag: DataTag, value_tag: DataTag, input: Vec<DataTag>, out_offset: usize, out_len: usize },
    Halt { output: Vec<DataTag> },
    SelfDestruct { beneficiary_tag: DataTag },
    /// Stack underflow: the step halts the frame exceptionally.
    Fault,
}

impl ShadowFrame {
    pub fn new(frame: FrameId, context_frame: FrameId, storage_address: Address, input: Vec<DataTag>) -> Self {
        ShadowFrame { frame, context_frame, storage_address, input, ..Default::default() }
    }

    fn ensure(&mut self, end: usize) {
        if self.memory.len() < end {
            self.memory.resize(end, DataTag::empty());
        }
    }

    pub fn mem_read(&self, offset: usize, len: usize) -> Vec<DataTag> {
        (offset..offset + len).map(|i| self.memory.get(i).cloned().unwrap_or_default()).collect()
    }

    pub fn mem_union(&self, offset: usize, len: usize) -> DataTag {
        let end = (offset + len).min(self.memory.len());
        DataTag::union_all(self.memory.get(offset.min(end)..end).unwrap_or(&[]))
    }

    pub fn mem_write(&mut self, offset: usize, tags: Vec<DataTag>) {
        self.ensure(offset + tags.len());
        for (i, t) in tags.into_iter().enumerate() {
            self.memory[offset + i] = t;
        }
    }

    pub fn mem_fill(&mut self, offset: usize, len: usize, tag: &DataTag) {
        self.ensure(offset + len);
        for slot in &mut self.memory[offset..offset + len] {
            *slot = tag.clone();
        }
    }
}

fn bound(step: usize, w: Word) -> Result<usize, FlowError> {
    if w > Word::from(MEMORY_BOUND as u64) {
        return Err(FlowError::MemoryBound { step });
    }
    Ok(w.as_usize())
}

/// Resolves an (offset, length) operand pair; zero length never touches memory.
fn region(step: usize, offset: Word, len: Word) -> Result<(usize, usize), FlowError> {
    let len = bound(step, len)?;
    if len == 0 {
        return Ok((0, 0));
    }
    Ok((bound(step, offset)?, len))
}

fn context(name: &'static str) -> DataTag {
    DataTag::single(SourceRef::context(Identifier::ChainContext(name)))
}

fn byte_sources(bytes: &[DataTag], offset: usize, len: usize, extra: &DataTag) -> Vec<DataTag> {
    (offset..offset + len)
        .map(|i| match bytes.get(i) {
            Some(t) => extra.union(t),
            None => extra.clone(),
        })
        .collect()
}

/// Applies one opcode to the shadow frame, mirroring its stack arity.
///
/// `index` is the step's position in the trace (used for error reports).
pub fn transfer_tags(index: usize, step: &OpStep, frame: &mut ShadowFrame, lookup: &impl SourceLookup) -> Result<Effect, FlowError> {
    if frame.stack.len() != step.stack.len() {
        return Err(FlowError::ShadowDesync { step: index, shadow: frame.stack.len(), concrete: step.stack.len() });
    }
    let op = step.op;
    let depth = frame.stack.len();
    if op.is_dup() {
        let n = (op.0 - Opcode::DUP1.0) as usize + 1;
        if depth < n {
            return Ok(Effect::Fault);
        }
        let t = frame.stack[depth - n].clone();
        frame.stack.push(t);
        return Ok(Effect::None);
    }
    if op.is_swap() {
        let n = (op.0 - Opcode::SWAP1.0) as usize + 1;
        if depth < n + 1 {
            return Ok(Effect::Fault);
        }
        frame.stack.swap(depth - 1, depth - 1 - n);
        return Ok(Effect::None);
    }

    let n = op.pops();
    if depth < n {
        return Ok(Effect::Fault);
    }
    let args: Vec<Word> = step.stack.iter().rev().take(n).copied().collect();
    let tags: Vec<DataTag> = frame.stack.drain(depth - n..).rev().collect();
    let mut effect = Effect::None;

    let pushed: Option<DataTag> = match op.0 {
        // arithmetic, comparison and bitwise logic
        0x01..=0x0b | 0x10..=0x1d => Some(DataTag::union_all(&tags)),
        0x20 => {
            let (off, len) = region(index, args[0], args[1])?;
            Some(frame.mem_union(off, len))
        }
        0x30 | 0x38 | 0x58 | 0x59 | 0x5a => Some(DataTag::empty()),
        0x31 => Some(lookup.balance(Address::from_word(args[0])).union(&tags[0])),
        0x47 => Some(lookup.balance(frame.storage_address)),
        0x32 => Some(DataTag::single(SourceRef::context(Identifier::Origin))),
        0x33 => Some(DataTag::single(SourceRef::context(Identifier::Caller(frame.context_frame)))),
        0x34 => Some(DataTag::single(SourceRef::context(Identifier::CallValue(frame.context_frame)))),
        0x35 => {
            let mut t = DataTag::single(SourceRef::context(Identifier::CallData(frame.frame)));
            if args[0] < Word::from(frame.input.len() as u64) {
                let off = args[0].as_usize();
                let end = (off + 32).min(frame.input.len());
                t.extend(&DataTag::union_all(&frame.input[off..end]));
            }
            Some(t)
        }
        0x36 => Some(DataTag::single(SourceRef::context(Identifier::CallData(frame.frame)))),
        0x37 => {
            let (dest, len) = region(index, args[0], args[2])?;
            if len > 0 {
                let src = if args[1] > Word::from(MEMORY_BOUND as u64) { usize::MAX / 2 } else { args[1].as_usize() };
                let base = DataTag::single(SourceRef::context(Identifier::CallData(frame.frame)));
                let bytes = byte_sources(&frame.input, src, len, &base);
                frame.mem_write(dest, bytes);
            }
            None
        }
        0x39 => {
            let (dest, len) = region(index, args[0], args[2])?;
            frame.mem_fill(dest, len, &DataTag::empty());
            None
        }
        0x3c => {
            let (dest, len) = region(index, args[1], args[3])?;
            frame.mem_fill(dest, len, &context("EXTCODECOPY").union(&tags[0]));
            None
        }
        0x3b => Some(context("EXTCODESIZE").union(&tags[0])),
        0x3f => Some(context("EXTCODEHASH").union(&tags[0])),
        0x40 => Some(context("BLOCKHASH").union(&tags[0])),
        0x49 => Some(context("BLOBHASH").union(&tags[0])),
        0x3a => Some(context("GASPRICE")),
        0x41 => Some(context("COINBASE")),
        0x44 => Some(context("DIFFICULTY")),
        0x45 => Some(context("GASLIMIT")),
        0x46 => Some(context("CHAINID")),
        0x48 => Some(context("BASEFEE")),
        0x4a => Some(context("BLOBBASEFEE")),
        0x42 => Some(DataTag::single(SourceRef::context(Identifier::Timestamp))),
        0x43 => Some(DataTag::single(SourceRef::context(Identifier::BlockNumber))),
        0x3d => Some(match &frame.return_data {
            Some((child, _)) => DataTag::single(SourceRef::context(Identifier::ReturnData(*child))),
            None => DataTag::empty(),
        }),
        0x3e => {
            let (dest, len) = region(index, args[0], args[2])?;
            if len > 0 {
                let src = bound(index, args[1])?;
                let bytes = match &frame.return_data {
                    Some((child, out)) => {
                        byte_sources(out, src, len, &DataTag::single(SourceRef::context(Identifier::ReturnData(*child))))
                    }
                    None => vec![DataTag::empty(); len],
                };
                frame.mem_write(dest, bytes);
            }
            None
        }
        0x50 => None,
        0x51 => {
            let off = bound(index, args[0])?;
            Some(frame.mem_union(off, 32))
        }
        0x52 => {
            let off = bound(index, args[0])?;
            frame.mem_fill(off, 32, &tags[1]);
            None
        }
        0x53 => {
            let off = bound(index, args[0])?;
            frame.mem_fill(off, 1, &tags[1]);
            None
        }
        0x5e => {
            let (dest, len) = region(index, args[0], args[2])?;
            if len > 0 {
                let src = bound(index, args[1])?;
                let bytes = frame.mem_read(src, len);
                frame.mem_write(dest, bytes);
            }
            None
        }
        0x54 => Some(lookup.storage(frame.storage_address, args[0])),
        0x55 => {
            effect = Effect::StorageWrite { slot: args[0], slot_tag: tags[0].clone(), value_tag: tags[1].clone() };
            None
        }
        0x5c => Some(lookup.transient(frame.storage_address, args[0])),
        0x5d => {
            effect = Effect::TransientWrite { slot: args[0], tag: tags[1].clone() };
            None
        }
        0x56 | 0x5b => None,
        0x57 => {
            effect = Effect::Branch { condition: tags[1].clone() };
            None
        }
        0x5f..=0x7f => Some(DataTag::empty()),
        0xa0..=0xa4 => {
            let (off, len) = region(index, args[0], args[1])?;
            effect = Effect::Log { topics: tags[2..].to_vec(), data: frame.mem_read(off, len) };
            None
        }
        0xf1 | 0xf2 => {
            let (in_off, in_len) = region(index, args[3], args[4])?;
            let (out_offset, out_len) = region(index, args[5], args[6])?;
            effect = Effect::Invoke {
                target_tag: tags[1].clone(),
                value_tag: tags[2].clone(),
                input: frame.mem_read(in_off, in_len),
                out_offset,
                out_len,
            };
            Some(DataTag::empty())
        }
        0xf4 | 0xfa => {
            let (in_off, in_len) = region(index, args[2], args[3])?;
            let (out_offset, out_len) = region(index, args[4], args[5])?;
            effect = Effect::Invoke {
                target_tag: tags[1].clone(),
                value_tag: DataTag::empty(),
                input: frame.mem_read(in_off, in_len),
                out_offset,
                out_len,
            };
            Some(DataTag::empty())
        }
        0xf0 | 0xf5 => {
            let (in_off, in_len) = region(index, args[1], args[2])?;
            effect = Effect::Invoke {
                target_tag: DataTag::empty(),
                value_tag: tags[0].clone(),
                input: frame.mem_read(in_off, in_len),
                out_offset: 0,
                out_len: 0,
            };
            Some(DataTag::empty())
        }
        0xf3 | 0xfd => {
            let (off, len) = region(index, args[0], args[1])?;
            effect = Effect::Halt { output: frame.mem_read(off, len) };
            None
        }
        0x00 => {
            effect = Effect::Halt { output: Vec::new() };
            None
        }
        0xff => {
            effect = Effect::SelfDestruct { beneficiary_tag: tags[0].clone() };
            None
        }
        // INVALID and undefined bytes halt without touching the stack
        _ if op.pushes() == 0 => {
            effect = Effect::Fault;
            None
        }
        _ => Some(DataTag::union_all(&tags)),
    };
    if let Some(t) = pushed {
        frame.stack.push(t);
    }
    Ok(effect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    struct NoState;
    impl SourceLookup for NoState {
        fn storage(&self, contract: Address, slot: Word) -> DataTag {
            DataTag::single(SourceRef::new(Identifier::Storage { contract, slot }, 0))
        }
        fn balance(&self, account: Address) -> DataTag {
            DataTag::single(SourceRef::new(Identifier::Balance(account), 0))
        }
        fn transient(&self, _: Address, _: Word) -> DataTag {
            DataTag::empty()
        }
    }

    fn step(op: Opcode, stack: &[u64]) -> OpStep {
        OpStep {
            pc: 0,
            op,
            gas: 0,
            gas_cost: 0,
            depth: 1,
            stack: stack.iter().map(|w| Word::from(*w)).collect(),
            memory: Vec::new(),
            storage: BTreeMap::new(),
        }
    }

    fn tagged(id: Identifier) -> DataTag {
        DataTag::single(SourceRef::context(id))
    }

    #[test]
    fn mstore8_then_mload_carries_the_byte_tag() {
        let mut f = ShadowFrame::new(0, 0, Address::ZERO, Vec::new());
        f.stack = vec![tagged(Identifier::Origin), DataTag::empty()];
        // MSTORE8(offset=31, value=origin-tagged)
        transfer_tags(0, &step(Opcode::MSTORE8, &[7, 31]), &mut f, &NoState).unwrap();
        assert!(f.stack.is_empty());
        f.stack.push(DataTag::empty());
        transfer_tags(1, &step(Opcode::MLOAD, &[0]), &mut f, &NoState).unwrap();
        assert_eq!(f.stack, vec![tagged(Identifier::Origin)]);
    }

    #[test]
    fn constant_jumpi_condition_has_empty_tag() {
        let mut f = ShadowFrame::new(0, 0, Address::ZERO, Vec::new());
        f.stack = vec![DataTag::empty(), DataTag::empty()];
        let e = transfer_tags(0, &step(Opcode::JUMPI, &[0, 10]), &mut f, &NoState).unwrap();
        assert_eq!(e, Effect::Branch { condition: DataTag::empty() });
    }

    #[test]
    fn caller_comparison_feeds_the_condition() {
        let mut f = ShadowFrame::new(3, 3, Address::ZERO, Vec::new());
        transfer_tags(0, &step(Opcode::CALLER, &[]), &mut f, &NoState).unwrap();
        f.stack.push(DataTag::empty());
        transfer_tags(1, &step(Opcode::EQ, &[1, 2]), &mut f, &NoState).unwrap();
        assert_eq!(f.stack, vec![tagged(Identifier::Caller(3))]);
    }

    #[test]
    fn desync_is_detected() {
        let mut f = ShadowFrame::new(0, 0, Address::ZERO, Vec::new());
        let err = transfer_tags(5, &step(Opcode::POP, &[1]), &mut f, &NoState).unwrap_err();
        assert!(matches!(err, FlowError::ShadowDesync { step: 5, shadow: 0, concrete: 1 }));
    }
}
