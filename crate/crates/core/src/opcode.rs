//! EVM opcode mnemonics and stack arity.

use std::fmt;
use std::str::FromStr;

/// A single EVM opcode byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Opcode(pub u8);

#[derive(Debug, Clone, Copy)]
struct OpInfo {
    name: &'static str,
    pops: u8,
    pushes: u8,
}

const fn op(name: &'static str, pops: u8, pushes: u8) -> Option<OpInfo> {
    Some(OpInfo { name, pops, pushes })
}

const PUSH_NAMES: [&str; 33] = [
    "PUSH0", "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9",
    "PUSH10", "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18",
    "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27",
    "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
const DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];
const SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];
const LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

const fn build_table() -> [Option<OpInfo>; 256] {
    let mut t: [Option<OpInfo>; 256] = [None; 256];
    t[0x00] = op("STOP", 0, 0);
    t[0x01] = op("ADD", 2, 1);
    t[0x02] = op("MUL", 2, 1);
    t[0x03] = op("SUB", 2, 1);
    t[0x04] = op("DIV", 2, 1);
    t[0x05] = op("SDIV", 2, 1);
    t[0x06] = op("MOD", 2, 1);
    t[0x07] = op("SMOD", 2, 1);
    t[0x08] = op("ADDMOD", 3, 1);
    t[0x09] = op("MULMOD", 3, 1);
    t[0x0a] = op("EXP", 2, 1);
    t[0x0b] = op("SIGNEXTEND", 2, 1);
    t[0x10] = op("LT", 2, 1);
    t[0x11] = op("GT", 2, 1);
    t[0x12] = op("SLT", 2, 1);
    t[0x13] = op("SGT", 2, 1);
    t[0x14] = op("EQ", 2, 1);
    t[0x15] = op("ISZERO", 1, 1);
    t[0x16] = op("AND", 2, 1);
    t[0x17] = op("OR", 2, 1);
    t[0x18] = op("XOR", 2, 1);
    t[0x19] = op("NOT", 1, 1);
    t[0x1a] = op("BYTE", 2, 1);
    t[0x1b] = op("SHL", 2, 1);
    t[0x1c] = op("SHR", 2, 1);
    t[0x1d] = op("SAR", 2, 1);
    t[0x20] = op("SHA3", 2, 1);
    t[0x30] = op("ADDRESS", 0, 1);
    t[0x31] = op("BALANCE", 1, 1);
    t[0x32] = op("ORIGIN", 0, 1);
    t[0x33] = op("CALLER", 0, 1);
    t[0x34] = op("CALLVALUE", 0, 1);
    t[0x35] = op("CALLDATALOAD", 1, 1);
    t[0x36] = op("CALLDATASIZE", 0, 1);
    t[0x37] = op("CALLDATACOPY", 3, 0);
    t[0x38] = op("CODESIZE", 0, 1);
    t[0x39] = op("CODECOPY", 3, 0);
    t[0x3a] = op("GASPRICE", 0, 1);
    t[0x3b] = op("EXTCODESIZE", 1, 1);
    t[0x3c] = op("EXTCODECOPY", 4, 0);
    t[0x3d] = op("RETURNDATASIZE", 0, 1);
    t[0x3e] = op("RETURNDATACOPY", 3, 0);
    t[0x3f] = op("EXTCODEHASH", 1, 1);
    t[0x40] = op("BLOCKHASH", 1, 1);
    t[0x41] = op("COINBASE", 0, 1);
    t[0x42] = op("TIMESTAMP", 0, 1);
    t[0x43] = op("NUMBER", 0, 1);
    t[0x44] = op("DIFFICULTY", 0, 1);
    t[0x45] = op("GASLIMIT", 0, 1);
    t[0x46] = op("CHAINID", 0, 1);
    t[0x47] = op("SELFBALANCE", 0, 1);
    t[0x48] = op("BASEFEE", 0, 1);
    t[0x49] = op("BLOBHASH", 1, 1);
    t[0x4a] = op("BLOBBASEFEE", 0, 1);
    t[0x50] = op("POP", 1, 0);
    t[0x51] = op("MLOAD", 1, 1);
    t[0x52] = op("MSTORE", 2, 0);
    t[0x53] = op("MSTORE8", 2, 0);
    t[0x54] = op("SLOAD", 1, 1);
    t[0x55] = op("SSTORE", 2, 0);
    t[0x56] = op("JUMP", 1, 0);
    t[0x57] = op("JUMPI", 2, 0);
    t[0x58] = op("PC", 0, 1);
    t[0x59] = op("MSIZE", 0, 1);
    t[0x5a] = op("GAS", 0, 1);
    t[0x5b] = op("JUMPDEST", 0, 0);
    t[0x5c] = op("TLOAD", 1, 1);
    t[0x5d] = op("TSTORE", 2, 0);
    t[0x5e] = op("MCOPY", 3, 0);
    let mut i = 0;
    while i < 33 {
        t[0x5f + i] = op(PUSH_NAMES[i], 0, 1);
        i += 1;
    }
    let mut i = 0;
    while i < 16 {
        t[0x80 + i] = op(DUP_NAMES[i], (i + 1) as u8, (i + 2) as u8);
        t[0x90 + i] = op(SWAP_NAMES[i], (i + 2) as u8, (i + 2) as u8);
        i += 1;
    }
    let mut i = 0;
    while i < 5 {
        t[0xa0 + i] = op(LOG_NAMES[i], (i + 2) as u8, 0);
        i += 1;
    }
    t[0xf0] = op("CREATE", 3, 1);
    t[0xf1] = op("CALL", 7, 1);
    t[0xf2] = op("CALLCODE", 7, 1);
    t[0xf3] = op("RETURN", 2, 0);
    t[0xf4] = op("DELEGATECALL", 6, 1);
    t[0xf5] = op("CREATE2", 4, 1);
    t[0xfa] = op("STATICCALL", 6, 1);
    t[0xfd] = op("REVERT", 2, 0);
    t[0xfe] = op("INVALID", 0, 0);
    t[0xff] = op("SELFDESTRUCT", 1, 0);
    t
}

static TABLE: [Option<OpInfo>; 256] = build_table();

#[allow(missing_docs)]
impl Opcode {
    pub const STOP: Opcode = Opcode(0x00);
    pub const ADD: Opcode = Opcode(0x01);
    pub const MUL: Opcode = Opcode(0x02);
    pub const EQ: Opcode = Opcode(0x14);
    pub const SHA3: Opcode = Opcode(0x20);
    pub const ADDRESS: Opcode = Opcode(0x30);
    pub const BALANCE: Opcode = Opcode(0x31);
    pub const ORIGIN: Opcode = Opcode(0x32);
    pub const CALLER: Opcode = Opcode(0x33);
    pub const CALLVALUE: Opcode = Opcode(0x34);
    pub const CALLDATALOAD: Opcode = Opcode(0x35);
    pub const CALLDATASIZE: Opcode = Opcode(0x36);
    pub const CALLDATACOPY: Opcode = Opcode(0x37);
    pub const CODECOPY: Opcode = Opcode(0x39);
    pub const EXTCODECOPY: Opcode = Opcode(0x3c);
    pub const RETURNDATASIZE: Opcode = Opcode(0x3d);
    pub const RETURNDATACOPY: Opcode = Opcode(0x3e);
    pub const TIMESTAMP: Opcode = Opcode(0x42);
    pub const NUMBER: Opcode = Opcode(0x43);
    pub const SELFBALANCE: Opcode = Opcode(0x47);
    pub const POP: Opcode = Opcode(0x50);
    pub const MLOAD: Opcode = Opcode(0x51);
    pub const MSTORE: Opcode = Opcode(0x52);
    pub const MSTORE8: Opcode = Opcode(0x53);
    pub const SLOAD: Opcode = Opcode(0x54);
    pub const SSTORE: Opcode = Opcode(0x55);
    pub const JUMP: Opcode = Opcode(0x56);
    pub const JUMPI: Opcode = Opcode(0x57);
    pub const JUMPDEST: Opcode = Opcode(0x5b);
    pub const TLOAD: Opcode = Opcode(0x5c);
    pub const TSTORE: Opcode = Opcode(0x5d);
    pub const MCOPY: Opcode = Opcode(0x5e);
    pub const PUSH0: Opcode = Opcode(0x5f);
    pub const PUSH1: Opcode = Opcode(0x60);
    pub const PUSH32: Opcode = Opcode(0x7f);
    pub const DUP1: Opcode = Opcode(0x80);
    pub const DUP16: Opcode = Opcode(0x8f);
    pub const SWAP1: Opcode = Opcode(0x90);
    pub const SWAP16: Opcode = Opcode(0x9f);
    pub const LOG0: Opcode = Opcode(0xa0);
    pub const LOG3: Opcode = Opcode(0xa3);
    pub const LOG4: Opcode = Opcode(0xa4);
    pub const CREATE: Opcode = Opcode(0xf0);
    pub const CALL: Opcode = Opcode(0xf1);
    pub const CALLCODE: Opcode = Opcode(0xf2);
    pub const RETURN: Opcode = Opcode(0xf3);
    pub const DELEGATECALL: Opcode = Opcode(0xf4);
    pub const CREATE2: Opcode = Opcode(0xf5);
    pub const STATICCALL: Opcode = Opcode(0xfa);
    pub const REVERT: Opcode = Opcode(0xfd);
    pub const INVALID: Opcode = Opcode(0xfe);
    pub const SELFDESTRUCT: Opcode = Opcode(0xff);
}

impl Opcode {
    fn info(self) -> Option<OpInfo> {
        TABLE[self.0 as usize]
    }

    pub fn is_defined(self) -> bool {
        self.info().is_some()
    }

    pub fn name(self) -> &'static str {
        self.info().map(|i| i.name).unwrap_or("INVALID")
    }

    /// Number of stack items consumed.
    pub fn pops(self) -> usize {
        self.info().map(|i| i.pops as usize).unwrap_or(0)
    }

    /// Number of stack items produced.
    pub fn pushes(self) -> usize {
        self.info().map(|i| i.pushes as usize).unwrap_or(0)
    }

    pub fn is_push(self) -> bool {
        (0x5f..=0x7f).contains(&self.0)
    }

    /// Immediate byte count for PUSHn.
    pub fn push_size(self) -> usize {
        if self.is_push() {
            (self.0 - 0x5f) as usize
        } else {
            0
        }
    }

    pub fn is_dup(self) -> bool {
        (0x80..=0x8f).contains(&self.0)
    }

    pub fn is_swap(self) -> bool {
        (0x90..=0x9f).contains(&self.0)
    }

    pub fn is_log(self) -> bool {
        (0xa0..=0xa4).contains(&self.0)
    }

    /// Opcodes that open a new execution frame.
    pub fn is_call_like(self) -> bool {
        matches!(
            self,
            Opcode::CALL | Opcode::CALLCODE | Opcode::DELEGATECALL | Opcode::STATICCALL | Opcode::CREATE | Opcode::CREATE2
        )
    }

    /// Opcodes that end a frame normally or by revert.
    pub fn is_terminal(self) -> bool {
        matches!(self, Opcode::STOP | Opcode::RETURN | Opcode::REVERT | Opcode::SELFDESTRUCT | Opcode::INVALID)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_defined() {
            f.write_str(self.name())
        } else {
            write!(f, "opcode {:#04x} not defined", self.0)
        }
    }
}

impl fmt::Debug for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown opcode mnemonic `{0}`")]
pub struct UnknownOpcode(pub String);

impl FromStr for Opcode {
    type Err = UnknownOpcode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // aliases emitted by different tracers
        let canonical = match s {
            "KECCAK256" => "SHA3",
            "PREVRANDAO" => "DIFFICULTY",
            "SUICIDE" => "SELFDESTRUCT",
            other => other,
        };
        if let Some(code) = TABLE.iter().position(|e| e.map(|i| i.name) == Some(canonical)) {
            return Ok(Opcode(code as u8));
        }
        // geth renders undefined bytes as "opcode 0x.. not defined"
        if let Some(rest) = s.strip_prefix("opcode ").and_then(|r| r.strip_suffix(" not defined")) {
            if let Some(h) = rest.strip_prefix("0x") {
                if let Ok(b) = u8::from_str_radix(h, 16) {
                    return Ok(Opcode(b));
                }
            }
        }
        Err(UnknownOpcode(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnemonics_round_trip() {
        for b in 0..=255u8 {
            let op = Opcode(b);
            let parsed: Opcode = op.to_string().parse().unwrap();
            if op.is_defined() {
                assert_eq!(parsed, op);
            }
        }
    }

    #[test]
    fn arity_of_common_opcodes() {
        assert_eq!((Opcode::CALL.pops(), Opcode::CALL.pushes()), (7, 1));
        assert_eq!((Opcode(0x82).pops(), Opcode(0x82).pushes()), (3, 4));
        assert_eq!((Opcode(0x91).pops(), Opcode(0x91).pushes()), (3, 3));
        assert_eq!(Opcode::LOG3.pops(), 5);
        assert_eq!(Opcode::PUSH32.push_size(), 32);
        assert_eq!("KECCAK256".parse::<Opcode>().unwrap(), Opcode::SHA3);
    }
}
