//! Offline transaction traces: parsing, call-frame reconstruction and replay.
//!
//! The input document wraps a geth-style `structLogs` trace together with the
//! transaction envelope needed to attribute the top-level call:
//!
//! ```json
//! { "tx":    { "txHash": "0x..", "from": "0x..", "to": "0x..", "value": "0x0",
//!              "input": "0x", "blockNumber": 1, "timestamp": 0 },
//!   "trace": { "gas": 21000, "failed": false, "returnValue": "",
//!              "structLogs": [ { "pc": 0, "op": "PUSH1", ... } ] } }
//! ```
//!
//! Each struct log records the machine state *before* its opcode executes.

mod frames;
mod simulate;

use std::collections::BTreeMap;
use std::io::Read;

use serde_json::{json, Map, Value};

use crate::opcode::Opcode;
use crate::types::{bytes_hex, parse_bytes, parse_word, word_hex, word_hex_padded, Address, Word, WordParseError};

pub use frames::{reconstruct_frames, CallFrame, CallKind, CallTree, FrameId};
pub use simulate::{simulate, Observer};

/// EVM stack limit.
pub const MAX_STACK: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("schema violation at {location}: {message}")]
    SchemaViolation { location: String, message: String },
    #[error("word overflow at {location}: {value} exceeds 256 bits")]
    WordOverflow { location: String, value: String },
    #[error("inconsistent depth at step {step}: {message}")]
    InconsistentDepth { step: usize, message: String },
    #[error("truncated trace: {0} frame(s) still open after the last step")]
    TruncatedTrace(usize),
    #[error("I/O error reading trace: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceError {
    fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        TraceError::SchemaViolation { location: location.into(), message: message.into() }
    }
}

/// One executed opcode, with the machine state observed before it ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpStep {
    pub pc: u64,
    pub op: Opcode,
    pub gas: u64,
    pub gas_cost: u64,
    pub depth: u32,
    /// Bottom first, top last.
    pub stack: Vec<Word>,
    pub memory: Vec<u8>,
    pub storage: BTreeMap<Word, Word>,
}

impl OpStep {
    /// The `n`-th item from the top of the stack (0 = top).
    pub fn peek(&self, n: usize) -> Option<Word> {
        self.stack.len().checked_sub(n + 1).map(|i| self.stack[i])
    }

    /// Reads `len` bytes of memory, zero-padding past the recorded end.
    pub fn memory_slice(&self, offset: usize, len: usize) -> Vec<u8> {
        (offset..offset.saturating_add(len)).map(|i| self.memory.get(i).copied().unwrap_or(0)).collect()
    }
}

/// The transaction a trace belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionEnvelope {
    pub tx_hash: Word,
    pub from: Address,
    /// `None` for contract creation.
    pub to: Option<Address>,
    /// Address of the contract deployed by a creation transaction.
    pub contract_address: Option<Address>,
    pub value: Word,
    pub input: Vec<u8>,
    pub block_number: u64,
    pub timestamp: u64,
    /// Known ETH balances before the transaction.
    pub balances: BTreeMap<Address, Word>,
    /// Known token balances before the transaction: token -> holder -> amount.
    pub token_balances: BTreeMap<Address, BTreeMap<Address, Word>>,
}

impl TransactionEnvelope {
    /// Address executing the top-level frame.
    pub fn callee(&self) -> Option<Address> {
        self.to.or(self.contract_address)
    }

    /// Intrinsic gas charged before the first opcode.
    pub fn intrinsic_gas(&self) -> u64 {
        let data: u64 = self.input.iter().map(|b| if *b == 0 { 4 } else { 16 }).sum();
        let base = if self.to.is_none() { 53_000 } else { 21_000 };
        base + data
    }
}

/// Outcome fields recorded by the tracer next to `structLogs`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceResult {
    pub gas_used: u64,
    pub failed: bool,
    pub return_value: Vec<u8>,
}

/// A parsed trace document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub envelope: TransactionEnvelope,
    pub result: TraceResult,
    pub steps: Vec<OpStep>,
}

/// Parses a trace document from raw bytes.
pub fn parse_trace(raw: &[u8]) -> Result<Trace, TraceError> {
    let doc: Value = serde_json::from_slice(raw).map_err(|e| TraceError::MalformedTrace(e.to_string()))?;
    Trace::from_json(&doc)
}

pub fn read_trace(mut reader: impl Read) -> Result<Trace, TraceError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    parse_trace(&buf)
}

fn word_at(v: &Value, location: &str) -> Result<Word, TraceError> {
    match v {
        Value::String(s) => parse_word(s).map_err(|e| match e {
            WordParseError::Overflow(value) => TraceError::WordOverflow { location: location.to_string(), value },
            WordParseError::NotHex(s) => TraceError::schema(location, format!("`{s}` is not a hex word")),
        }),
        Value::Number(n) => n
            .as_u64()
            .map(Word::from)
            .ok_or_else(|| TraceError::schema(location, format!("`{n}` is not a non-negative integer"))),
        other => Err(TraceError::schema(location, format!("expected hex string, found {other}"))),
    }
}

fn u64_at(v: &Value, location: &str) -> Result<u64, TraceError> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| TraceError::schema(location, format!("`{n}` is not a non-negative integer"))),
        Value::String(_) => {
            let w = word_at(v, location)?;
            if w > Word::from(u64::MAX) {
                return Err(TraceError::schema(location, "value does not fit in 64 bits"));
            }
            Ok(w.as_u64())
        }
        other => Err(TraceError::schema(location, format!("expected integer, found {other}"))),
    }
}

fn address_at(v: &Value, location: &str) -> Result<Address, TraceError> {
    v.as_str()
        .ok_or_else(|| TraceError::schema(location, "expected address string"))?
        .parse()
        .map_err(|e: crate::types::AddressParseError| TraceError::schema(location, e.to_string()))
}

fn bytes_at(v: &Value, location: &str) -> Result<Vec<u8>, TraceError> {
    let s = v.as_str().ok_or_else(|| TraceError::schema(location, "expected hex byte string"))?;
    parse_bytes(s).map_err(|e| TraceError::schema(location, e.to_string()))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, location: &str) -> Result<&'a Value, TraceError> {
    obj.get(key).ok_or_else(|| TraceError::schema(location, format!("missing field `{key}`")))
}

impl TransactionEnvelope {
    fn from_json(v: &Value) -> Result<Self, TraceError> {
        let loc = "tx";
        let obj = v.as_object().ok_or_else(|| TraceError::schema(loc, "envelope must be an object"))?;
        let to = match obj.get("to") {
            None | Some(Value::Null) => None,
            Some(v) => Some(address_at(v, "tx.to")?),
        };
        let contract_address = match obj.get("contractAddress") {
            None | Some(Value::Null) => None,
            Some(v) => Some(address_at(v, "tx.contractAddress")?),
        };
        if to.is_none() && contract_address.is_none() {
            return Err(TraceError::schema(loc, "creation transaction needs `contractAddress`"));
        }
        let mut balances = BTreeMap::new();
        if let Some(b) = obj.get("balances") {
            let b = b.as_object().ok_or_else(|| TraceError::schema("tx.balances", "expected object"))?;
            for (k, v) in b {
                let location = format!("tx.balances.{k}");
                balances.insert(address_at(&Value::String(k.clone()), &location)?, word_at(v, &location)?);
            }
        }
        let mut token_balances = BTreeMap::new();
        if let Some(t) = obj.get("tokenBalances") {
            let t = t.as_object().ok_or_else(|| TraceError::schema("tx.tokenBalances", "expected object"))?;
            for (token, holders) in t {
                let location = format!("tx.tokenBalances.{token}");
                let token_addr = address_at(&Value::String(token.clone()), &location)?;
                let holders = holders.as_object().ok_or_else(|| TraceError::schema(&location, "expected object"))?;
                let mut map = BTreeMap::new();
                for (holder, amount) in holders {
                    let location = format!("{location}.{holder}");
                    map.insert(address_at(&Value::String(holder.clone()), &location)?, word_at(amount, &location)?);
                }
                token_balances.insert(token_addr, map);
            }
        }
        Ok(TransactionEnvelope {
            tx_hash: word_at(field(obj, "txHash", loc)?, "tx.txHash")?,
            from: address_at(field(obj, "from", loc)?, "tx.from")?,
            to,
            contract_address,
            value: obj.get("value").map(|v| word_at(v, "tx.value")).transpose()?.unwrap_or_default(),
            input: obj.get("input").map(|v| bytes_at(v, "tx.input")).transpose()?.unwrap_or_default(),
            block_number: obj.get("blockNumber").map(|v| u64_at(v, "tx.blockNumber")).transpose()?.unwrap_or(0),
            timestamp: obj.get("timestamp").map(|v| u64_at(v, "tx.timestamp")).transpose()?.unwrap_or(0),
            balances,
            token_balances,
        })
    }

    fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("txHash".into(), json!(format!("0x{}", word_hex_padded(&self.tx_hash))));
        obj.insert("from".into(), json!(self.from.to_string()));
        obj.insert("to".into(), self.to.map(|a| json!(a.to_string())).unwrap_or(Value::Null));
        if let Some(c) = self.contract_address {
            obj.insert("contractAddress".into(), json!(c.to_string()));
        }
        obj.insert("value".into(), json!(word_hex(&self.value)));
        obj.insert("input".into(), json!(bytes_hex(&self.input)));
        obj.insert("blockNumber".into(), json!(self.block_number));
        obj.insert("timestamp".into(), json!(self.timestamp));
        if !self.balances.is_empty() {
            let b: Map<String, Value> = self.balances.iter().map(|(a, w)| (a.to_string(), json!(word_hex(w)))).collect();
            obj.insert("balances".into(), Value::Object(b));
        }
        if !self.token_balances.is_empty() {
            let t: Map<String, Value> = self
                .token_balances
                .iter()
                .map(|(token, holders)| {
                    let h: Map<String, Value> = holders.iter().map(|(a, w)| (a.to_string(), json!(word_hex(w)))).collect();
                    (token.to_string(), Value::Object(h))
                })
                .collect();
            obj.insert("tokenBalances".into(), Value::Object(t));
        }
        Value::Object(obj)
    }
}

impl OpStep {
    fn from_json(v: &Value, index: usize) -> Result<Self, TraceError> {
        let loc = format!("structLogs[{index}]");
        let obj = v.as_object().ok_or_else(|| TraceError::schema(&loc, "step must be an object"))?;
        let op_name = field(obj, "op", &loc)?
            .as_str()
            .ok_or_else(|| TraceError::schema(format!("{loc}.op"), "expected mnemonic string"))?;
        let op = op_name.parse::<Opcode>().map_err(|e| TraceError::schema(format!("{loc}.op"), e.to_string()))?;
        let depth = u64_at(field(obj, "depth", &loc)?, &format!("{loc}.depth"))?;
        if depth == 0 || depth > u32::MAX as u64 {
            return Err(TraceError::schema(format!("{loc}.depth"), "depth must be at least 1"));
        }
        let stack_v = field(obj, "stack", &loc)?
            .as_array()
            .ok_or_else(|| TraceError::schema(format!("{loc}.stack"), "expected array"))?;
        if stack_v.len() > MAX_STACK {
            return Err(TraceError::schema(format!("{loc}.stack"), "stack deeper than 1024"));
        }
        let stack = stack_v
            .iter()
            .enumerate()
            .map(|(i, w)| word_at(w, &format!("{loc}.stack[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let memory_v = field(obj, "memory", &loc)?
            .as_array()
            .ok_or_else(|| TraceError::schema(format!("{loc}.memory"), "expected array of 32-byte words"))?;
        let mut memory = Vec::with_capacity(memory_v.len() * 32);
        for (i, w) in memory_v.iter().enumerate() {
            let word = word_at(w, &format!("{loc}.memory[{i}]"))?;
            memory.extend_from_slice(&word.to_big_endian());
        }
        let mut storage = BTreeMap::new();
        if let Some(s) = obj.get("storage") {
            let s = s.as_object().ok_or_else(|| TraceError::schema(format!("{loc}.storage"), "expected object"))?;
            for (k, v) in s {
                let location = format!("{loc}.storage.{k}");
                storage.insert(word_at(&Value::String(k.clone()), &location)?, word_at(v, &location)?);
            }
        }
        Ok(OpStep {
            pc: u64_at(field(obj, "pc", &loc)?, &format!("{loc}.pc"))?,
            op,
            gas: obj.get("gas").map(|v| u64_at(v, &format!("{loc}.gas"))).transpose()?.unwrap_or(0),
            gas_cost: obj.get("gasCost").map(|v| u64_at(v, &format!("{loc}.gasCost"))).transpose()?.unwrap_or(0),
            depth: depth as u32,
            stack,
            memory,
            storage,
        })
    }

    fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("pc".into(), json!(self.pc));
        obj.insert("op".into(), json!(self.op.to_string()));
        obj.insert("gas".into(), json!(self.gas));
        obj.insert("gasCost".into(), json!(self.gas_cost));
        obj.insert("depth".into(), json!(self.depth));
        obj.insert("stack".into(), Value::Array(self.stack.iter().map(|w| json!(word_hex(w))).collect()));
        obj.insert(
            "memory".into(),
            Value::Array(self.memory.chunks(32).map(|c| json!(hex::encode(c))).collect()),
        );
        if !self.storage.is_empty() {
            let s: Map<String, Value> =
                self.storage.iter().map(|(k, v)| (word_hex_padded(k), json!(word_hex_padded(v)))).collect();
            obj.insert("storage".into(), Value::Object(s));
        }
        Value::Object(obj)
    }
}

impl Trace {
    pub fn from_json(doc: &Value) -> Result<Self, TraceError> {
        let root = doc.as_object().ok_or_else(|| TraceError::schema("$", "document must be an object"))?;
        let envelope = TransactionEnvelope::from_json(field(root, "tx", "$")?)?;
        let trace = field(root, "trace", "$")?
            .as_object()
            .ok_or_else(|| TraceError::schema("trace", "expected object"))?;
        let logs = field(trace, "structLogs", "trace")?
            .as_array()
            .ok_or_else(|| TraceError::schema("trace.structLogs", "expected array"))?;
        let steps = logs.iter().enumerate().map(|(i, v)| OpStep::from_json(v, i)).collect::<Result<Vec<_>, _>>()?;
        let result = TraceResult {
            gas_used: trace.get("gas").map(|v| u64_at(v, "trace.gas")).transpose()?.unwrap_or(0),
            failed: trace.get("failed").and_then(Value::as_bool).unwrap_or(false),
            return_value: trace.get("returnValue").map(|v| bytes_at(v, "trace.returnValue")).transpose()?.unwrap_or_default(),
        };
        Ok(Trace { envelope, result, steps })
    }

    /// Canonical serialization; reparsing it yields an identical `Trace`.
    pub fn to_json(&self) -> Value {
        json!({
            "tx": self.envelope.to_json(),
            "trace": {
                "gas": self.result.gas_used,
                "failed": self.result.failed,
                "returnValue": hex::encode(&self.result.return_value),
                "structLogs": self.steps.iter().map(OpStep::to_json).collect::<Vec<_>>(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING_STEP: &str = r#"{
        "pc": 1164, "op": "SSTORE", "gas": 5718423, "gasCost": 20000, "depth": 2,
        "stack": ["0xd0e30db0", "0x3d2", "0x16345785d8a0000", "0x16345785d8a0000",
                  "0xbb1cc82d95791a1a9ca876fa9a5c6956b2ce21989bd57cca42dcdd3cbf705c6"],
        "memory": ["000000000000000000000000f079d7911c13369e7fd85607970036d2883afcfd",
                   "0000000000000000000000000000000000000000000000000000000000000003",
                   "0000000000000000000000000000000000000000000000000000000000000060"],
        "storage": {"0bb1cc82d95791a1a9ca876fa9a5c6956b2ce21989bd57cca42dcdd3cbf705c6":
                    "000000000000000000000000000000000000000000000000016345785d8a0000"}
    }"#;

    fn wrap(steps: &str) -> String {
        format!(
            r#"{{"tx": {{"txHash": "0x01", "from": "0xabababababababababababababababababababcd", "to": "0xbabababababababababababababababababababa", "value": "0x0", "input": "0x", "blockNumber": 1, "timestamp": 2}},
                "trace": {{"gas": 21000, "failed": false, "returnValue": "", "structLogs": [{steps}]}}}}"#
        )
    }

    #[test]
    fn parses_the_reference_sstore_step() {
        let trace = parse_trace(wrap(LISTING_STEP).as_bytes()).unwrap();
        let step = &trace.steps[0];
        assert_eq!(step.pc, 1164);
        assert_eq!(step.op, Opcode::SSTORE);
        assert_eq!(step.gas, 5718423);
        assert_eq!(step.gas_cost, 20000);
        assert_eq!(step.depth, 2);
        assert_eq!(step.stack.len(), 5);
        let top = parse_word("0x0bb1cc82d95791a1a9ca876fa9a5c6956b2ce21989bd57cca42dcdd3cbf705c6").unwrap();
        assert_eq!(step.peek(0), Some(top));
        assert_eq!(step.memory.len(), 96);
        assert_eq!(step.memory[31 + 32], 3);
        assert_eq!(step.storage[&top], Word::from(0x16345785d8a0000u64));
    }

    #[test]
    fn empty_struct_logs_give_zero_steps() {
        let trace = parse_trace(wrap("").as_bytes()).unwrap();
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn syntax_errors_are_malformed() {
        assert!(matches!(parse_trace(b"{\"tx\": "), Err(TraceError::MalformedTrace(_))));
    }

    #[test]
    fn missing_required_step_fields_violate_schema() {
        for missing in ["pc", "op", "depth", "memory"] {
            let mut v: Value = serde_json::from_str(LISTING_STEP).unwrap();
            v.as_object_mut().unwrap().remove(missing);
            let err = parse_trace(wrap(&v.to_string()).as_bytes()).unwrap_err();
            assert!(matches!(err, TraceError::SchemaViolation { .. }), "{missing}: {err}");
        }
    }

    #[test]
    fn oversized_words_overflow() {
        let step = LISTING_STEP.replace("0x3d2", &format!("0x1{}", "0".repeat(64)));
        assert!(matches!(parse_trace(wrap(&step).as_bytes()), Err(TraceError::WordOverflow { .. })));
    }

    #[test]
    fn canonical_form_is_idempotent() {
        let trace = parse_trace(wrap(LISTING_STEP).as_bytes()).unwrap();
        let again = Trace::from_json(&trace.to_json()).unwrap();
        assert_eq!(trace, again);
    }
}
