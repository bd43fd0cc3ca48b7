//! Independent provenance interpreter for straight-line programs. It keeps
//! whole expression trees and only reads provenance off them at the end.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use epg_core::flow::{track_flows, Identifier, SourceRef, TrackerOptions};
use epg_core::trace::{parse_trace, reconstruct_frames};
use epg_core::Word;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{addr, run_program};

pub const MAX_OPS: usize = 50;
const CONTRACT: &str = "0xc0de00000000000000000000000000000000c0de";

/// Symbolic value: the expression that produced it.
#[derive(Debug)]
enum Term {
    Const(u64),
    Leaf(SourceRef),
    Apply(Vec<Rc<Term>>),
}

fn provenance(t: &Term, out: &mut BTreeSet<SourceRef>) {
    match t {
        Term::Const(_) => {}
        Term::Leaf(s) => {
            out.insert(s.clone());
        }
        Term::Apply(args) => args.iter().for_each(|a| provenance(a, out)),
    }
}

#[derive(Default)]
pub struct Oracle {
    stack: Vec<Rc<Term>>,
    memory: HashMap<usize, Rc<Term>>,
    versions: HashMap<u64, u32>,
}

impl Oracle {
    fn leaf(&mut self, id: Identifier) {
        self.stack.push(Rc::new(Term::Leaf(SourceRef::context(id))));
    }

    fn pop(&mut self) -> Rc<Term> {
        self.stack.pop().expect("generator keeps the stack deep enough")
    }

    fn offset(t: &Term) -> u64 {
        match t {
            Term::Const(c) => *c,
            other => panic!("offset must be a literal, got {other:?}"),
        }
    }

    pub fn exec(&mut self, op: &Op) {
        match op {
            Op::Push(v) => self.stack.push(Rc::new(Term::Const(*v))),
            Op::Dup(n) => {
                let t = self.stack[self.stack.len() - n].clone();
                self.stack.push(t);
            }
            Op::Swap(n) => {
                let top = self.stack.len() - 1;
                self.stack.swap(top, top - n);
            }
            Op::Add | Op::Mul => {
                let (a, b) = (self.pop(), self.pop());
                self.stack.push(Rc::new(Term::Apply(vec![a, b])));
            }
            Op::Mstore(_) | Op::Mstore8(_) => {
                let off = Self::offset(&self.pop()) as usize;
                let value = self.pop();
                let width = if matches!(op, Op::Mstore(_)) { 32 } else { 1 };
                for i in 0..width {
                    self.memory.insert(off + i, value.clone());
                }
            }
            Op::Mload(_) => {
                let off = Self::offset(&self.pop()) as usize;
                let bytes = (off..off + 32).map(|i| self.memory.get(&i).cloned().unwrap_or(Rc::new(Term::Const(0))));
                self.stack.push(Rc::new(Term::Apply(bytes.collect())));
            }
            Op::Sstore(_) => {
                let slot = Self::offset(&self.pop());
                self.pop();
                *self.versions.entry(slot).or_insert(0) += 1;
            }
            Op::Sload(_) => {
                let slot = Self::offset(&self.pop());
                let id = Identifier::Storage { contract: addr(CONTRACT), slot: Word::from(slot) };
                let version = self.versions.get(&slot).copied().unwrap_or(0);
                self.stack.push(Rc::new(Term::Leaf(SourceRef::new(id, version))));
            }
            Op::CallDataLoad(_) => {
                self.pop();
                self.leaf(Identifier::CallData(0));
            }
            Op::Caller => self.leaf(Identifier::Caller(0)),
            Op::Origin => self.leaf(Identifier::Origin),
            Op::CallValue => self.leaf(Identifier::CallValue(0)),
            Op::Timestamp => self.leaf(Identifier::Timestamp),
            Op::Number => self.leaf(Identifier::BlockNumber),
        }
    }

    pub fn tags(&self) -> Vec<BTreeSet<SourceRef>> {
        self.stack
            .iter()
            .map(|t| {
                let mut s = BTreeSet::new();
                provenance(t, &mut s);
                s
            })
            .collect()
    }
}

/// Memory, storage and calldata ops carry the literal operand the generator
/// pushes right before them.
#[derive(Debug, Clone)]
pub enum Op {
    Push(u64),
    Dup(usize),
    Swap(usize),
    Add,
    Mul,
    Mstore(u64),
    Mstore8(u64),
    Mload(u64),
    Sstore(u64),
    Sload(u64),
    CallDataLoad(u64),
    Caller,
    Origin,
    CallValue,
    Timestamp,
    Number,
}

impl Op {
    /// Expanded into the concrete instruction sequence.
    pub fn asm(&self) -> String {
        match self {
            Op::Push(v) => format!("PUSH1 {v:#x}"),
            Op::Dup(n) => format!("DUP{n}"),
            Op::Swap(n) => format!("SWAP{n}"),
            Op::Add => "ADD".into(),
            Op::Mul => "MUL".into(),
            Op::Mstore(o) => format!("PUSH1 {o:#x} MSTORE"),
            Op::Mstore8(o) => format!("PUSH1 {o:#x} MSTORE8"),
            Op::Mload(o) => format!("PUSH1 {o:#x} MLOAD"),
            Op::Sstore(s) => format!("PUSH1 {s:#x} SSTORE"),
            Op::Sload(s) => format!("PUSH1 {s:#x} SLOAD"),
            Op::CallDataLoad(o) => format!("PUSH1 {o:#x} CALLDATALOAD"),
            Op::Caller => "CALLER".into(),
            Op::Origin => "ORIGIN".into(),
            Op::CallValue => "CALLVALUE".into(),
            Op::Timestamp => "TIMESTAMP".into(),
            Op::Number => "NUMBER".into(),
        }
    }

    pub fn expand(&self) -> Vec<Op> {
        match self {
            Op::Mstore(o) | Op::Mstore8(o) | Op::Mload(o) | Op::Sstore(o) | Op::Sload(o) | Op::CallDataLoad(o) => {
                vec![Op::Push(*o), self.clone()]
            }
            other => vec![other.clone()],
        }
    }

    /// Instructions counted against the length budget.
    fn len(&self) -> usize {
        self.expand().len()
    }
}

pub fn random_program(rng: &mut StdRng) -> Vec<Op> {
    let budget = rng.gen_range(1..=MAX_OPS - 1);
    let mut ops = Vec::new();
    let mut depth = 0usize;
    let mut used = 0;
    while used < budget {
        let op = match rng.gen_range(0..16) {
            0 | 1 => Op::Push(rng.gen_range(0..=255)),
            2 if depth >= 1 => Op::Dup(rng.gen_range(1..=depth.min(4))),
            3 if depth >= 2 => Op::Swap(rng.gen_range(1..=(depth - 1).min(4))),
            4 if depth >= 2 => Op::Add,
            5 if depth >= 2 => Op::Mul,
            6 if depth >= 1 => Op::Mstore(rng.gen_range(0..96)),
            7 if depth >= 1 => Op::Mstore8(rng.gen_range(0..96)),
            8 => Op::Mload(rng.gen_range(0..96)),
            9 if depth >= 1 => Op::Sstore(rng.gen_range(0..4)),
            10 => Op::Sload(rng.gen_range(0..4)),
            11 => Op::CallDataLoad(rng.gen_range(0..64)),
            12 => Op::Caller,
            13 => Op::Origin,
            14 => Op::CallValue,
            15 => [Op::Timestamp, Op::Number][rng.gen_range(0..2)].clone(),
            _ => continue,
        };
        if used + op.len() > budget {
            break;
        }
        depth = match &op {
            Op::Dup(_) | Op::Push(_) | Op::Mload(_) | Op::Sload(_) | Op::CallDataLoad(_) => depth + 1,
            Op::Caller | Op::Origin | Op::CallValue | Op::Timestamp | Op::Number => depth + 1,
            Op::Swap(_) => depth,
            Op::Add | Op::Mul | Op::Mstore(_) | Op::Mstore8(_) | Op::Sstore(_) => depth - 1,
        };
        used += op.len();
        ops.push(op);
    }
    ops
}


/// Runs `count` random programs through the simulator and the shadow
/// tracker and compares every stack slot before every step. Returns the
/// number of slots compared.
pub fn check_programs(seed: u64, count: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut checked_slots = 0usize;
    for round in 0..count {
        let program = random_program(&mut rng);
        let src: Vec<String> = program.iter().map(Op::asm).chain(["STOP".to_string()]).collect();
        let raw = run_program(&src.join(" "), (0..64).collect());

        let trace = parse_trace(&raw).map_err(|e| e.to_string())?;
        let tree = reconstruct_frames(&trace).map_err(|e| e.to_string())?;
        let opts = TrackerOptions { allowlist: None, record_stacks: true };
        let flows = track_flows(&trace, &tree, &opts).map_err(|e| format!("round {round}: {e}"))?;
        let stacks = flows.stacks.expect("stacks were requested");

        let expanded: Vec<Op> = program.iter().flat_map(Op::expand).collect();
        if expanded.len() > MAX_OPS || stacks.len() != expanded.len() + 1 {
            return Err(format!("round {round}: {} steps for {} ops", stacks.len(), expanded.len()));
        }
        let mut oracle = Oracle::default();
        for (i, shadow) in stacks.iter().enumerate() {
            let want = oracle.tags();
            let got: Vec<BTreeSet<SourceRef>> = shadow.iter().map(|t| t.clone().into_set()).collect();
            if got != want {
                return Err(format!("round {round}, before step {i}: {got:?} != {want:?}\nprogram: {}", src.join(" ")));
            }
            checked_slots += want.len();
            if let Some(op) = expanded.get(i) {
                oracle.exec(op);
            }
        }
    }
    Ok(checked_slots)
}
