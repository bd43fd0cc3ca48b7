//! Concrete interpreter. Every executed opcode is recorded with the state it
//! observed, in the layout geth's struct logger uses.

use std::collections::BTreeMap;

use primitive_types::{U256, U512};
use serde_json::{json, Map, Value};

use crate::{addr_word, create2_address, create_address, keccak, ops, word_addr, Addr};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: U256,
    pub nonce: u64,
    pub code: Vec<u8>,
    pub storage: BTreeMap<U256, U256>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct World {
    pub accounts: BTreeMap<Addr, Account>,
}

impl World {
    pub fn account(&mut self, a: Addr) -> &mut Account {
        self.accounts.entry(a).or_default()
    }

    pub fn balance(&self, a: Addr) -> U256 {
        self.accounts.get(&a).map(|x| x.balance).unwrap_or_default()
    }

    pub fn code(&self, a: Addr) -> &[u8] {
        self.accounts.get(&a).map(|x| x.code.as_slice()).unwrap_or(&[])
    }

    pub fn sload(&self, a: Addr, slot: U256) -> U256 {
        self.accounts.get(&a).and_then(|x| x.storage.get(&slot).copied()).unwrap_or_default()
    }

    pub fn deploy(&mut self, a: Addr, code: Vec<u8>, balance: U256) {
        let acc = self.account(a);
        acc.code = code;
        acc.balance = balance;
        acc.nonce = acc.nonce.max(1);
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    pub block_number: u64,
    pub timestamp: u64,
    pub chain_id: u64,
    pub gas_price: u64,
    pub base_fee: u64,
    pub gas_limit: u64,
    pub coinbase: Addr,
}

impl Default for Env {
    fn default() -> Self {
        Env {
            block_number: 13_715_025,
            timestamp: 1_638_259_200,
            chain_id: 1,
            gas_price: 50_000_000_000,
            base_fee: 40_000_000_000,
            gas_limit: 30_000_000,
            coinbase: crate::addr("c0ffee0000000000000000000000000000000000"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tx {
    pub from: Addr,
    pub to: Option<Addr>,
    pub value: U256,
    pub input: Vec<u8>,
    pub gas: u64,
}

impl Tx {
    pub fn call(from: Addr, to: Addr, value: U256, input: Vec<u8>) -> Self {
        Tx { from, to: Some(to), value, input, gas: 10_000_000 }
    }

    pub fn intrinsic_gas(&self) -> u64 {
        let data: u64 = self.input.iter().map(|b| if *b == 0 { 4 } else { 16 }).sum();
        data + if self.to.is_none() { 53_000 } else { 21_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub pc: usize,
    pub op: u8,
    pub gas: u64,
    pub gas_cost: u64,
    pub depth: u32,
    pub stack: Vec<U256>,
    pub memory: Vec<u8>,
    pub storage: Option<BTreeMap<U256, U256>>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub steps: Vec<Step>,
    pub success: bool,
    pub output: Vec<u8>,
    pub gas_used: u64,
    pub created: Option<Addr>,
}

enum Exit {
    Stop,
    Return(Vec<u8>),
    Revert(Vec<u8>),
    Fault,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Call,
    CallCode,
    DelegateCall,
    StaticCall,
}

struct Frame {
    code: Vec<u8>,
    jumpdests: Vec<bool>,
    address: Addr,
    caller: Addr,
    value: U256,
    input: Vec<u8>,
    depth: u32,
    is_static: bool,
    stack: Vec<U256>,
    memory: Vec<u8>,
    pc: usize,
    return_data: Vec<u8>,
}

fn jumpdests(code: &[u8]) -> Vec<bool> {
    let mut out = vec![false; code.len()];
    let mut i = 0;
    while i < code.len() {
        let op = code[i];
        if op == 0x5b {
            out[i] = true;
        }
        i += if (0x60..=0x7f).contains(&op) { (op - 0x5f) as usize + 1 } else { 1 };
    }
    out
}

const MEMORY_LIMIT: usize = 1 << 20;
const MAX_DEPTH: u32 = 1024;

fn b2w(b: bool) -> U256 {
    if b {
        U256::one()
    } else {
        U256::zero()
    }
}

fn is_neg(x: U256) -> bool {
    x.bit(255)
}

fn neg(x: U256) -> U256 {
    (!x).overflowing_add(U256::one()).0
}

fn abs(x: U256) -> U256 {
    if is_neg(x) {
        neg(x)
    } else {
        x
    }
}

fn small(x: U256) -> Option<usize> {
    (x <= U256::from(MEMORY_LIMIT)).then(|| x.as_usize())
}

fn read_padded(src: &[u8], offset: U256, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    if offset < U256::from(src.len()) {
        let o = offset.as_usize();
        let n = len.min(src.len() - o);
        out[..n].copy_from_slice(&src[o..o + n]);
    }
    out
}

impl Frame {
    fn pop(&mut self) -> Option<U256> {
        self.stack.pop()
    }

    fn push(&mut self, w: U256) -> bool {
        if self.stack.len() >= 1024 {
            return false;
        }
        self.stack.push(w);
        true
    }

    fn expand(&mut self, offset: U256, len: U256) -> Option<(usize, usize)> {
        if len.is_zero() {
            return Some((0, 0));
        }
        let (o, l) = (small(offset)?, small(len)?);
        let end = o + l;
        if end > MEMORY_LIMIT {
            return None;
        }
        if self.memory.len() < end {
            self.memory.resize(end.div_ceil(32) * 32, 0);
        }
        Some((o, l))
    }
}

/// Executes transactions against a [`World`], recording every step.
pub struct Machine<'w> {
    world: &'w mut World,
    env: Env,
    origin: Addr,
    gas: u64,
    steps: Vec<Step>,
    transient: BTreeMap<(Addr, U256), U256>,
    step_limit: usize,
}

pub fn execute(world: &mut World, env: &Env, tx: &Tx) -> Outcome {
    let mut m = Machine {
        world,
        env: env.clone(),
        origin: tx.from,
        gas: tx.gas.saturating_sub(tx.intrinsic_gas()),
        steps: Vec::new(),
        transient: BTreeMap::new(),
        step_limit: 200_000,
    };
    let (success, output, created) = m.run_tx(tx);
    let gas_used = tx.intrinsic_gas() + m.steps.iter().map(|s| s.gas_cost).sum::<u64>();
    Outcome { steps: m.steps, success, output, gas_used, created }
}

impl Machine<'_> {
    fn run_tx(&mut self, tx: &Tx) -> (bool, Vec<u8>, Option<Addr>) {
        let nonce = self.world.account(tx.from).nonce;
        self.world.account(tx.from).nonce += 1;
        match tx.to {
            Some(to) => {
                let (ok, out) = self.message_call(Kind::Call, tx.from, tx.from, to, to, tx.value, tx.input.clone(), 1, false);
                (ok, out, None)
            }
            None => {
                let address = create_address(tx.from, nonce);
                let (ok, out) = self.create(tx.from, address, tx.value, tx.input.clone(), 1);
                (ok, out, Some(address))
            }
        }
    }

    fn snapshot(&self) -> (World, BTreeMap<(Addr, U256), U256>) {
        (self.world.clone(), self.transient.clone())
    }

    fn restore(&mut self, snap: (World, BTreeMap<(Addr, U256), U256>)) {
        *self.world = snap.0;
        self.transient = snap.1;
    }

    fn transfer(&mut self, from: Addr, to: Addr, value: U256) -> bool {
        if value.is_zero() {
            self.world.account(to);
            return true;
        }
        if self.world.balance(from) < value {
            return false;
        }
        self.world.account(from).balance -= value;
        let to = self.world.account(to);
        to.balance = to.balance.saturating_add(value);
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn message_call(
        &mut self,
        kind: Kind,
        sender: Addr,
        caller: Addr,
        context: Addr,
        code_address: Addr,
        value: U256,
        input: Vec<u8>,
        depth: u32,
        is_static: bool,
    ) -> (bool, Vec<u8>) {
        if depth > MAX_DEPTH {
            return (false, Vec::new());
        }
        let snap = self.snapshot();
        if matches!(kind, Kind::Call | Kind::CallCode) && !self.transfer(sender, context, value) {
            return (false, Vec::new());
        }
        let code = self.world.code(code_address).to_vec();
        if code.is_empty() {
            return (true, Vec::new());
        }
        let frame = Frame {
            jumpdests: jumpdests(&code),
            code,
            address: context,
            caller,
            value,
            input,
            depth,
            is_static,
            stack: Vec::new(),
            memory: Vec::new(),
            pc: 0,
            return_data: Vec::new(),
        };
        match self.run(frame) {
            Exit::Stop => (true, Vec::new()),
            Exit::Return(out) => (true, out),
            Exit::Revert(out) => {
                self.restore(snap);
                (false, out)
            }
            Exit::Fault => {
                self.restore(snap);
                (false, Vec::new())
            }
        }
    }

    fn create(&mut self, sender: Addr, address: Addr, value: U256, init: Vec<u8>, depth: u32) -> (bool, Vec<u8>) {
        if depth > MAX_DEPTH || self.world.balance(sender) < value {
            return (false, Vec::new());
        }
        if let Some(existing) = self.world.accounts.get(&address) {
            if existing.nonce > 0 || !existing.code.is_empty() {
                return (false, Vec::new());
            }
        }
        let snap = self.snapshot();
        self.transfer(sender, address, value);
        self.world.account(address).nonce = 1;
        if init.is_empty() {
            return (true, Vec::new());
        }
        let frame = Frame {
            jumpdests: jumpdests(&init),
            code: init,
            address,
            caller: sender,
            value,
            input: Vec::new(),
            depth,
            is_static: false,
            stack: Vec::new(),
            memory: Vec::new(),
            pc: 0,
            return_data: Vec::new(),
        };
        match self.run(frame) {
            Exit::Stop => (true, Vec::new()),
            Exit::Return(code) => {
                self.world.account(address).code = code;
                (true, Vec::new())
            }
            Exit::Revert(out) => {
                self.restore(snap);
                (false, out)
            }
            Exit::Fault => {
                self.restore(snap);
                (false, Vec::new())
            }
        }
    }

    fn record(&mut self, f: &Frame, op: u8, cost: u64) {
        let storage = matches!(op, 0x54 | 0x55).then(|| {
            self.world.accounts.get(&f.address).map(|a| a.storage.clone()).unwrap_or_default()
        });
        self.steps.push(Step {
            pc: f.pc,
            op,
            gas: self.gas,
            gas_cost: cost,
            depth: f.depth,
            stack: f.stack.clone(),
            memory: f.memory.clone(),
            storage,
        });
    }

    fn run(&mut self, mut f: Frame) -> Exit {
        loop {
            let op = f.code.get(f.pc).copied().unwrap_or(0x00);
            let cost = ops::gas_cost(op);
            if self.steps.len() >= self.step_limit {
                return Exit::Fault;
            }
            self.record(&f, op, cost.min(self.gas));
            if self.gas < cost {
                self.gas = 0;
                return Exit::Fault;
            }
            self.gas -= cost;
            match self.exec(&mut f, op) {
                Ok(None) => {}
                Ok(Some(exit)) => return exit,
                Err(()) => return Exit::Fault,
            }
        }
    }

    /// Executes one opcode. `Ok(Some(_))` ends the frame.
    fn exec(&mut self, f: &mut Frame, op: u8) -> Result<Option<Exit>, ()> {
        macro_rules! pop {
            () => {
                f.pop().ok_or(())?
            };
        }
        macro_rules! push {
            ($e:expr) => {{
                let v = $e;
                if !f.push(v) {
                    return Err(());
                }
            }};
        }
        macro_rules! bin {
            ($fun:expr) => {{
                let a = pop!();
                let b = pop!();
                let g: fn(U256, U256) -> U256 = $fun;
                push!(g(a, b));
            }};
        }
        let mut next_pc = f.pc + 1;
        match op {
            0x00 => return Ok(Some(Exit::Stop)),
            0x01 => bin!(|a, b| a.overflowing_add(b).0),
            0x02 => bin!(|a, b| a.overflowing_mul(b).0),
            0x03 => bin!(|a, b| a.overflowing_sub(b).0),
            0x04 => bin!(|a, b| if b.is_zero() { U256::zero() } else { a / b }),
            0x05 => bin!(|a, b| {
                if b.is_zero() {
                    return U256::zero();
                }
                let q = abs(a) / abs(b);
                if is_neg(a) != is_neg(b) {
                    neg(q)
                } else {
                    q
                }
            }),
            0x06 => bin!(|a, b| if b.is_zero() { U256::zero() } else { a % b }),
            0x07 => bin!(|a, b| {
                if b.is_zero() {
                    return U256::zero();
                }
                let r = abs(a) % abs(b);
                if is_neg(a) {
                    neg(r)
                } else {
                    r
                }
            }),
            0x08 | 0x09 => {
                let (a, b, n) = (pop!(), pop!(), pop!());
                if n.is_zero() {
                    push!(U256::zero());
                } else {
                    let (a, b, n) = (U512::from(a), U512::from(b), U512::from(n));
                    let r = if op == 0x08 { (a + b) % n } else { (a * b) % n };
                    push!(U256::try_from(r).expect("reduced modulo a word"));
                }
            }
            0x0a => bin!(|a, b| a.overflowing_pow(b).0),
            0x0b => bin!(|b, x| {
                if b >= U256::from(31) {
                    return x;
                }
                let bit = b.as_usize() * 8 + 7;
                let mask = (U256::one() << bit) - 1;
                if x.bit(bit) {
                    x | !mask
                } else {
                    x & mask
                }
            }),
            0x10 => bin!(|a, b| b2w(a < b)),
            0x11 => bin!(|a, b| b2w(a > b)),
            0x12 | 0x13 => {
                let (a, b) = (pop!(), pop!());
                let lt = match (is_neg(a), is_neg(b)) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => a < b,
                };
                let gt = a != b && !lt;
                push!(b2w(if op == 0x12 { lt } else { gt }));
            }
            0x14 => bin!(|a, b| b2w(a == b)),
            0x15 => {
                let a = pop!();
                push!(b2w(a.is_zero()));
            }
            0x16 => bin!(|a, b| a & b),
            0x17 => bin!(|a, b| a | b),
            0x18 => bin!(|a, b| a ^ b),
            0x19 => {
                let a = pop!();
                push!(!a);
            }
            0x1a => bin!(|i, x| if i >= U256::from(32) { U256::zero() } else { U256::from(x.byte(31 - i.as_usize())) }),
            0x1b => bin!(|s, x| if s >= U256::from(256) { U256::zero() } else { x << s.as_usize() }),
            0x1c => bin!(|s, x| if s >= U256::from(256) { U256::zero() } else { x >> s.as_usize() }),
            0x1d => bin!(|s, x| {
                let negative = is_neg(x);
                if s >= U256::from(256) {
                    return if negative { U256::MAX } else { U256::zero() };
                }
                let s = s.as_usize();
                let shifted = x >> s;
                if negative && s > 0 {
                    shifted | !(U256::MAX >> s)
                } else {
                    shifted
                }
            }),
            0x20 => {
                let (o, l) = (pop!(), pop!());
                let (o, l) = f.expand(o, l).ok_or(())?;
                let h = keccak(&f.memory[o..o + l]);
                push!(U256::from_big_endian(&h));
            }
            0x30 => push!(addr_word(f.address)),
            0x31 => {
                let a = pop!();
                push!(self.world.balance(word_addr(a)));
            }
            0x32 => push!(addr_word(self.origin)),
            0x33 => push!(addr_word(f.caller)),
            0x34 => push!(f.value),
            0x35 => {
                let o = pop!();
                push!(U256::from_big_endian(&read_padded(&f.input, o, 32)));
            }
            0x36 => push!(U256::from(f.input.len())),
            0x37 | 0x39 | 0x3e => {
                let (mo, so, l) = (pop!(), pop!(), pop!());
                if op == 0x3e && (so.saturating_add(l) > U256::from(f.return_data.len())) {
                    return Err(());
                }
                let (mo, l) = f.expand(mo, l).ok_or(())?;
                let src = match op {
                    0x37 => &f.input,
                    0x39 => &f.code,
                    _ => &f.return_data,
                };
                let data = read_padded(src, so, l);
                f.memory[mo..mo + l].copy_from_slice(&data);
            }
            0x38 => push!(U256::from(f.code.len())),
            0x3a => push!(U256::from(self.env.gas_price)),
            0x3b => {
                let a = pop!();
                push!(U256::from(self.world.code(word_addr(a)).len()));
            }
            0x3c => {
                let (a, mo, so, l) = (pop!(), pop!(), pop!(), pop!());
                let (mo, l) = f.expand(mo, l).ok_or(())?;
                let data = read_padded(self.world.code(word_addr(a)), so, l);
                f.memory[mo..mo + l].copy_from_slice(&data);
            }
            0x3d => push!(U256::from(f.return_data.len())),
            0x3f => {
                let a = word_addr(pop!());
                let h = match self.world.accounts.get(&a) {
                    Some(_) => U256::from_big_endian(&keccak(self.world.code(a))),
                    None => U256::zero(),
                };
                push!(h);
            }
            0x40 => {
                let n = pop!();
                let h = if n < U256::from(self.env.block_number) && n + 256 >= U256::from(self.env.block_number) {
                    U256::from_big_endian(&keccak(&n.to_big_endian()))
                } else {
                    U256::zero()
                };
                push!(h);
            }
            0x41 => push!(addr_word(self.env.coinbase)),
            0x42 => push!(U256::from(self.env.timestamp)),
            0x43 => push!(U256::from(self.env.block_number)),
            0x44 => push!(U256::from(0x1234_5678u64)),
            0x45 => push!(U256::from(self.env.gas_limit)),
            0x46 => push!(U256::from(self.env.chain_id)),
            0x47 => push!(self.world.balance(f.address)),
            0x48 => push!(U256::from(self.env.base_fee)),
            0x50 => {
                pop!();
            }
            0x51 => {
                let o = pop!();
                let (o, _) = f.expand(o, U256::from(32)).ok_or(())?;
                push!(U256::from_big_endian(&f.memory[o..o + 32]));
            }
            0x52 => {
                let (o, v) = (pop!(), pop!());
                let (o, _) = f.expand(o, U256::from(32)).ok_or(())?;
                f.memory[o..o + 32].copy_from_slice(&v.to_big_endian());
            }
            0x53 => {
                let (o, v) = (pop!(), pop!());
                let (o, _) = f.expand(o, U256::one()).ok_or(())?;
                f.memory[o] = v.byte(0);
            }
            0x54 => {
                let s = pop!();
                push!(self.world.sload(f.address, s));
            }
            0x55 => {
                if f.is_static {
                    return Err(());
                }
                let (s, v) = (pop!(), pop!());
                let acc = self.world.account(f.address);
                if v.is_zero() {
                    acc.storage.remove(&s);
                } else {
                    acc.storage.insert(s, v);
                }
            }
            0x56 | 0x57 => {
                let dest = pop!();
                let take = if op == 0x57 { !pop!().is_zero() } else { true };
                if take {
                    let d = small(dest).ok_or(())?;
                    if !f.jumpdests.get(d).copied().unwrap_or(false) {
                        return Err(());
                    }
                    next_pc = d;
                }
            }
            0x58 => push!(U256::from(f.pc)),
            0x59 => push!(U256::from(f.memory.len())),
            0x5a => push!(U256::from(self.gas)),
            0x5b => {}
            0x5c => {
                let s = pop!();
                push!(self.transient.get(&(f.address, s)).copied().unwrap_or_default());
            }
            0x5d => {
                if f.is_static {
                    return Err(());
                }
                let (s, v) = (pop!(), pop!());
                self.transient.insert((f.address, s), v);
            }
            0x5e => {
                let (d, s, l) = (pop!(), pop!(), pop!());
                let (so, l2) = f.expand(s, l).ok_or(())?;
                let (d, _) = f.expand(d, l).ok_or(())?;
                f.memory.copy_within(so..so + l2, d);
            }
            0x5f => push!(U256::zero()),
            0x60..=0x7f => {
                let n = (op - 0x5f) as usize;
                let bytes = read_padded(&f.code, U256::from(f.pc + 1), n);
                push!(U256::from_big_endian(&bytes));
                next_pc = f.pc + 1 + n;
            }
            0x80..=0x8f => {
                let n = (op - 0x7f) as usize;
                if f.stack.len() < n {
                    return Err(());
                }
                let v = f.stack[f.stack.len() - n];
                push!(v);
            }
            0x90..=0x9f => {
                let n = (op - 0x8f) as usize;
                let len = f.stack.len();
                if len < n + 1 {
                    return Err(());
                }
                f.stack.swap(len - 1, len - 1 - n);
            }
            0xa0..=0xa4 => {
                if f.is_static {
                    return Err(());
                }
                let (o, l) = (pop!(), pop!());
                for _ in 0..(op - 0xa0) {
                    pop!();
                }
                f.expand(o, l).ok_or(())?;
            }
            0xf0 | 0xf5 => {
                if f.is_static {
                    return Err(());
                }
                let (value, o, l) = (pop!(), pop!(), pop!());
                let salt = if op == 0xf5 { Some(pop!()) } else { None };
                let (o, l) = f.expand(o, l).ok_or(())?;
                let init = f.memory[o..o + l].to_vec();
                let nonce = self.world.account(f.address).nonce;
                let address = match salt {
                    Some(s) => create2_address(f.address, s, &init),
                    None => create_address(f.address, nonce),
                };
                let ok_depth = f.depth < MAX_DEPTH;
                if ok_depth {
                    self.world.account(f.address).nonce += 1;
                }
                let (ok, out) = if ok_depth { self.create(f.address, address, value, init, f.depth + 1) } else { (false, Vec::new()) };
                f.return_data = if ok { Vec::new() } else { out };
                push!(if ok { addr_word(address) } else { U256::zero() });
            }
            0xf1 | 0xf2 | 0xf4 | 0xfa => {
                let _gas = pop!();
                let target = word_addr(pop!());
                let value = if matches!(op, 0xf1 | 0xf2) { pop!() } else { U256::zero() };
                let (io, il, oo, ol) = (pop!(), pop!(), pop!(), pop!());
                if op == 0xf1 && f.is_static && !value.is_zero() {
                    return Err(());
                }
                let (io, il) = f.expand(io, il).ok_or(())?;
                let (oo, ol) = f.expand(oo, ol).ok_or(())?;
                let input = f.memory[io..io + il].to_vec();
                let (kind, caller, context, call_value, is_static) = match op {
                    0xf1 => (Kind::Call, f.address, target, value, f.is_static),
                    0xf2 => (Kind::CallCode, f.address, f.address, value, f.is_static),
                    0xf4 => (Kind::DelegateCall, f.caller, f.address, f.value, f.is_static),
                    _ => (Kind::StaticCall, f.address, target, U256::zero(), true),
                };
                let (ok, out) =
                    self.message_call(kind, f.address, caller, context, target, call_value, input, f.depth + 1, is_static);
                let n = ol.min(out.len());
                f.memory[oo..oo + n].copy_from_slice(&out[..n]);
                f.return_data = out;
                push!(b2w(ok));
            }
            0xf3 | 0xfd => {
                let (o, l) = (pop!(), pop!());
                let (o, l) = f.expand(o, l).ok_or(())?;
                let out = f.memory[o..o + l].to_vec();
                return Ok(Some(if op == 0xf3 { Exit::Return(out) } else { Exit::Revert(out) }));
            }
            0xff => {
                if f.is_static {
                    return Err(());
                }
                let beneficiary = word_addr(pop!());
                let bal = self.world.balance(f.address);
                self.world.account(f.address).balance = U256::zero();
                let to = self.world.account(beneficiary);
                to.balance = to.balance.saturating_add(bal);
                return Ok(Some(Exit::Stop));
            }
            _ => return Err(()),
        }
        f.pc = next_pc;
        Ok(None)
    }
}

fn hex_word(w: &U256) -> String {
    format!("{w:#x}")
}

/// Optional envelope fields a fixture can add.
#[derive(Debug, Clone, Default)]
pub struct TraceMeta {
    pub tx_hash: [u8; 32],
    pub token_balances: BTreeMap<Addr, BTreeMap<Addr, U256>>,
}

fn addr_str(a: &Addr) -> String {
    format!("0x{}", hex::encode(a.as_bytes()))
}

/// Renders a recorded execution as a trace document.
pub fn trace_document(before: &World, env: &Env, tx: &Tx, outcome: &Outcome, meta: &TraceMeta) -> Value {
    let balances: Map<String, Value> =
        before.accounts.iter().map(|(a, acc)| (addr_str(a), json!(hex_word(&acc.balance)))).collect();
    let mut txo = Map::new();
    txo.insert("txHash".into(), json!(format!("0x{}", hex::encode(meta.tx_hash))));
    txo.insert("from".into(), json!(addr_str(&tx.from)));
    txo.insert("to".into(), tx.to.map(|a| json!(addr_str(&a))).unwrap_or(Value::Null));
    if let Some(c) = outcome.created {
        txo.insert("contractAddress".into(), json!(addr_str(&c)));
    }
    txo.insert("value".into(), json!(hex_word(&tx.value)));
    txo.insert("input".into(), json!(format!("0x{}", hex::encode(&tx.input))));
    txo.insert("blockNumber".into(), json!(env.block_number));
    txo.insert("timestamp".into(), json!(env.timestamp));
    txo.insert("balances".into(), Value::Object(balances));
    if !meta.token_balances.is_empty() {
        let t: Map<String, Value> = meta
            .token_balances
            .iter()
            .map(|(tok, holders)| {
                let h: Map<String, Value> = holders.iter().map(|(a, v)| (addr_str(a), json!(hex_word(v)))).collect();
                (addr_str(tok), Value::Object(h))
            })
            .collect();
        txo.insert("tokenBalances".into(), Value::Object(t));
    }
    let logs: Vec<Value> = outcome
        .steps
        .iter()
        .map(|s| {
            let mut o = Map::new();
            o.insert("pc".into(), json!(s.pc));
            o.insert("op".into(), json!(ops::display_name(s.op)));
            o.insert("gas".into(), json!(s.gas));
            o.insert("gasCost".into(), json!(s.gas_cost));
            o.insert("depth".into(), json!(s.depth));
            o.insert("stack".into(), Value::Array(s.stack.iter().map(|w| json!(hex_word(w))).collect()));
            o.insert("memory".into(), Value::Array(s.memory.chunks(32).map(|c| json!(hex::encode(c))).collect()));
            if let Some(st) = &s.storage {
                let m: Map<String, Value> = st
                    .iter()
                    .map(|(k, v)| (hex::encode(k.to_big_endian()), json!(hex::encode(v.to_big_endian()))))
                    .collect();
                o.insert("storage".into(), Value::Object(m));
            }
            Value::Object(o)
        })
        .collect();
    json!({
        "tx": Value::Object(txo),
        "trace": {
            "gas": outcome.gas_used,
            "failed": !outcome.success,
            "returnValue": hex::encode(&outcome.output),
            "structLogs": logs,
        }
    })
}
