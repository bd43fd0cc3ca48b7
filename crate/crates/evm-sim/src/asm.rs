//! Text assembler.
//!
//! Tokens are separated by whitespace; `;` starts a comment.
//!
//! * `ADD`, `PUSH1 0x20`, `PUSH 1000` (smallest push that fits)
//! * `:name` defines a label at the current offset and emits `JUMPDEST`
//! * `=name` defines a label without emitting anything
//! * `@name` pushes a label's offset with `PUSH2`
//! * `$NAME` in an operand position is replaced by a caller-supplied constant
//! * `.org N` pads with `INVALID` up to offset `N`
//! * `.bytes 0x...` emits raw bytes

use std::collections::HashMap;

use primitive_types::U256;

use crate::ops;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmError {
    UnknownMnemonic(String),
    MissingOperand(String),
    BadOperand(String),
    UnknownLabel(String),
    UnknownConstant(String),
    DuplicateLabel(String),
    OrgBackwards { at: usize, target: usize },
}

impl std::fmt::Display for AsmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::error::Error for AsmError {}

enum Item {
    Op(u8),
    Push { size: usize, value: Operand },
    Label(String, bool),
    Org(usize),
    Bytes(Vec<u8>),
}

enum Operand {
    Value(U256),
    Label(String),
}

fn parse_number(s: &str) -> Option<U256> {
    if let Some(h) = s.strip_prefix("0x") {
        U256::from_str_radix(h, 16).ok()
    } else {
        U256::from_dec_str(s).ok()
    }
}

fn min_size(v: U256) -> usize {
    (v.bits().div_ceil(8)).max(1)
}

pub fn assemble(src: &str, consts: &HashMap<&str, U256>) -> Result<Vec<u8>, AsmError> {
    let tokens: Vec<&str> = src.lines().flat_map(|l| l.split(';').next().unwrap_or("").split_whitespace()).collect();
    let operand = |tok: Option<&&str>, what: &str| -> Result<Operand, AsmError> {
        let t = *tok.ok_or_else(|| AsmError::MissingOperand(what.to_string()))?;
        if let Some(name) = t.strip_prefix('$') {
            return consts.get(name).copied().map(Operand::Value).ok_or_else(|| AsmError::UnknownConstant(name.into()));
        }
        if let Some(name) = t.strip_prefix('@') {
            return Ok(Operand::Label(name.to_string()));
        }
        parse_number(t).map(Operand::Value).ok_or_else(|| AsmError::BadOperand(t.to_string()))
    };

    let mut items = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        i += 1;
        if let Some(name) = t.strip_prefix(':') {
            items.push(Item::Label(name.to_string(), true));
        } else if let Some(name) = t.strip_prefix('=') {
            items.push(Item::Label(name.to_string(), false));
        } else if let Some(name) = t.strip_prefix('@') {
            items.push(Item::Push { size: 2, value: Operand::Label(name.to_string()) });
        } else if let Some(name) = t.strip_prefix('$') {
            let v = consts.get(name).copied().ok_or_else(|| AsmError::UnknownConstant(name.into()))?;
            items.push(Item::Push { size: min_size(v), value: Operand::Value(v) });
        } else if t == ".org" {
            let n = tokens.get(i).and_then(|s| parse_number(s)).ok_or_else(|| AsmError::MissingOperand(".org".into()))?;
            i += 1;
            items.push(Item::Org(n.as_usize()));
        } else if t == ".bytes" {
            let h = tokens.get(i).ok_or_else(|| AsmError::MissingOperand(".bytes".into()))?;
            i += 1;
            items.push(Item::Bytes(hex::decode(h.trim_start_matches("0x")).map_err(|_| AsmError::BadOperand(h.to_string()))?));
        } else if t.eq_ignore_ascii_case("PUSH") {
            let v = operand(tokens.get(i), t)?;
            i += 1;
            let size = match &v {
                Operand::Value(v) => min_size(*v),
                Operand::Label(_) => 2,
            };
            items.push(Item::Push { size, value: v });
        } else {
            let op = ops::from_name(t).ok_or_else(|| AsmError::UnknownMnemonic(t.to_string()))?;
            if (0x60..=0x7f).contains(&op) {
                let v = operand(tokens.get(i), t)?;
                i += 1;
                items.push(Item::Push { size: (op - 0x5f) as usize, value: v });
            } else {
                items.push(Item::Op(op));
            }
        }
    }

    let mut labels = HashMap::new();
    let mut pc = 0usize;
    for item in &items {
        match item {
            Item::Op(_) => pc += 1,
            Item::Push { size, .. } => pc += 1 + size,
            Item::Label(name, dest) => {
                if labels.insert(name.clone(), pc).is_some() {
                    return Err(AsmError::DuplicateLabel(name.clone()));
                }
                if *dest {
                    pc += 1;
                }
            }
            Item::Org(n) => {
                if *n < pc {
                    return Err(AsmError::OrgBackwards { at: pc, target: *n });
                }
                pc = *n;
            }
            Item::Bytes(b) => pc += b.len(),
        }
    }

    let mut out = Vec::with_capacity(pc);
    for item in items {
        match item {
            Item::Op(op) => out.push(op),
            Item::Push { size, value } => {
                let v = match value {
                    Operand::Value(v) => v,
                    Operand::Label(l) => U256::from(*labels.get(&l).ok_or(AsmError::UnknownLabel(l))?),
                };
                if min_size(v) > size {
                    return Err(AsmError::BadOperand(format!("{v:#x} does not fit in {size} bytes")));
                }
                out.push(0x5f + size as u8);
                out.extend_from_slice(&v.to_big_endian()[32 - size..]);
            }
            Item::Label(_, dest) => {
                if dest {
                    out.push(0x5b);
                }
            }
            Item::Org(n) => out.resize(n, 0xfe),
            Item::Bytes(b) => out.extend(b),
        }
    }
    Ok(out)
}
