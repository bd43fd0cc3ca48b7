//! Opcode mnemonics and static gas costs.

pub fn name(op: u8) -> Option<String> {
    let n = match op {
        0x00 => "STOP",
        0x01 => "ADD",
        0x02 => "MUL",
        0x03 => "SUB",
        0x04 => "DIV",
        0x05 => "SDIV",
        0x06 => "MOD",
        0x07 => "SMOD",
        0x08 => "ADDMOD",
        0x09 => "MULMOD",
        0x0a => "EXP",
        0x0b => "SIGNEXTEND",
        0x10 => "LT",
        0x11 => "GT",
        0x12 => "SLT",
        0x13 => "SGT",
        0x14 => "EQ",
        0x15 => "ISZERO",
        0x16 => "AND",
        0x17 => "OR",
        0x18 => "XOR",
        0x19 => "NOT",
        0x1a => "BYTE",
        0x1b => "SHL",
        0x1c => "SHR",
        0x1d => "SAR",
        0x20 => "SHA3",
        0x30 => "ADDRESS",
        0x31 => "BALANCE",
        0x32 => "ORIGIN",
        0x33 => "CALLER",
        0x34 => "CALLVALUE",
        0x35 => "CALLDATALOAD",
        0x36 => "CALLDATASIZE",
        0x37 => "CALLDATACOPY",
        0x38 => "CODESIZE",
        0x39 => "CODECOPY",
        0x3a => "GASPRICE",
        0x3b => "EXTCODESIZE",
        0x3c => "EXTCODECOPY",
        0x3d => "RETURNDATASIZE",
        0x3e => "RETURNDATACOPY",
        0x3f => "EXTCODEHASH",
        0x40 => "BLOCKHASH",
        0x41 => "COINBASE",
        0x42 => "TIMESTAMP",
        0x43 => "NUMBER",
        0x44 => "DIFFICULTY",
        0x45 => "GASLIMIT",
        0x46 => "CHAINID",
        0x47 => "SELFBALANCE",
        0x48 => "BASEFEE",
        0x50 => "POP",
        0x51 => "MLOAD",
        0x52 => "MSTORE",
        0x53 => "MSTORE8",
        0x54 => "SLOAD",
        0x55 => "SSTORE",
        0x56 => "JUMP",
        0x57 => "JUMPI",
        0x58 => "PC",
        0x59 => "MSIZE",
        0x5a => "GAS",
        0x5b => "JUMPDEST",
        0x5c => "TLOAD",
        0x5d => "TSTORE",
        0x5e => "MCOPY",
        0x5f => "PUSH0",
        0x60..=0x7f => return Some(format!("PUSH{}", op - 0x5f)),
        0x80..=0x8f => return Some(format!("DUP{}", op - 0x7f)),
        0x90..=0x9f => return Some(format!("SWAP{}", op - 0x8f)),
        0xa0..=0xa4 => return Some(format!("LOG{}", op - 0xa0)),
        0xf0 => "CREATE",
        0xf1 => "CALL",
        0xf2 => "CALLCODE",
        0xf3 => "RETURN",
        0xf4 => "DELEGATECALL",
        0xf5 => "CREATE2",
        0xfa => "STATICCALL",
        0xfd => "REVERT",
        0xfe => "INVALID",
        0xff => "SELFDESTRUCT",
        _ => return None,
    };
    Some(n.to_string())
}

/// Mnemonic for any byte; undefined opcodes render as `opcode 0x..`.
pub fn display_name(op: u8) -> String {
    name(op).unwrap_or_else(|| format!("opcode 0x{op:02x} not defined"))
}

pub fn from_name(s: &str) -> Option<u8> {
    let upper = s.to_ascii_uppercase();
    if upper == "KECCAK256" {
        return Some(0x20);
    }
    (0..=255u8).find(|b| name(*b).as_deref() == Some(upper.as_str()))
}

pub fn gas_cost(op: u8) -> u64 {
    match op {
        0x00 | 0x5b => 1,
        0x20 => 30,
        0x31 | 0x3b | 0x3c | 0x3f => 100,
        0x54 => 100,
        0x55 => 5000,
        0x5c | 0x5d => 100,
        0xa0..=0xa4 => 375 * (1 + (op - 0xa0) as u64),
        0xf0 | 0xf5 => 32000,
        0xf1 | 0xf2 | 0xf4 | 0xfa => 100,
        0xff => 5000,
        0x0a => 10,
        0x08 | 0x09 | 0x56 => 8,
        0x57 => 10,
        0x02 | 0x04 | 0x05 | 0x06 | 0x07 | 0x0b => 5,
        0x30 | 0x32..=0x34 | 0x36 | 0x38 | 0x3a | 0x3d | 0x41..=0x46 | 0x48 | 0x50 | 0x58..=0x5a | 0x5f => 2,
        _ => 3,
    }
}
