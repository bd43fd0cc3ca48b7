//! A small concrete EVM that records geth-style struct logs, plus a text
//! assembler. Used to produce deterministic trace fixtures.

pub mod asm;
pub mod fixtures;
pub mod ops;
pub mod vm;

use primitive_types::{H160, U256};
use sha3::{Digest, Keccak256};

pub use asm::{assemble, AsmError};
pub use vm::{execute, trace_document, Account, Env, Outcome, Step, TraceMeta, Tx, World};

pub type Addr = H160;

pub fn keccak(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

/// Address from its low 20 bytes written as hex.
pub fn addr(s: &str) -> Addr {
    let digits = s.trim_start_matches("0x");
    let padded = format!("{digits:0>40}");
    H160::from_slice(&hex::decode(padded).expect("hex address"))
}

pub fn addr_word(a: Addr) -> U256 {
    U256::from_big_endian(a.as_bytes())
}

pub fn word_addr(w: U256) -> Addr {
    H160::from_slice(&w.to_big_endian()[12..])
}

pub fn ether(n: u64) -> U256 {
    U256::from(n) * U256::exp10(18)
}

/// First four bytes of the hash of a function signature.
pub fn selector(signature: &str) -> [u8; 4] {
    let h = keccak(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

/// Calldata for `signature` with static word arguments.
pub fn calldata(signature: &str, args: &[U256]) -> Vec<u8> {
    let mut out = selector(signature).to_vec();
    for a in args {
        out.extend_from_slice(&a.to_big_endian());
    }
    out
}

fn rlp_bytes(b: &[u8]) -> Vec<u8> {
    if b.len() == 1 && b[0] < 0x80 {
        return b.to_vec();
    }
    let mut out = vec![0x80 + b.len() as u8];
    out.extend_from_slice(b);
    out
}

/// Address of a contract created by `sender` with `nonce`.
pub fn create_address(sender: Addr, nonce: u64) -> Addr {
    let nonce_bytes: Vec<u8> = nonce.to_be_bytes().into_iter().skip_while(|b| *b == 0).collect();
    let mut payload = rlp_bytes(sender.as_bytes());
    payload.extend(rlp_bytes(&nonce_bytes));
    let mut enc = vec![0xc0 + payload.len() as u8];
    enc.extend(payload);
    H160::from_slice(&keccak(&enc)[12..])
}

pub fn create2_address(sender: Addr, salt: U256, init_code: &[u8]) -> Addr {
    let mut buf = vec![0xff];
    buf.extend_from_slice(sender.as_bytes());
    buf.extend_from_slice(&salt.to_big_endian());
    buf.extend_from_slice(&keccak(init_code));
    H160::from_slice(&keccak(&buf)[12..])
}

/// Init code that copies `runtime` into memory and returns it.
pub fn deployer(runtime: &[u8]) -> Vec<u8> {
    let len = runtime.len();
    assert!(len < 0x10000, "runtime too large");
    let header_len = 14u8;
    let mut code = vec![
        0x61, (len >> 8) as u8, len as u8, // PUSH2 len
        0x60, header_len,                  // PUSH1 offset
        0x60, 0x00,                        // PUSH1 0
        0x39,                              // CODECOPY
        0x61, (len >> 8) as u8, len as u8, // PUSH2 len
        0x60, 0x00,                        // PUSH1 0
        0xf3,                              // RETURN
    ];
    debug_assert_eq!(code.len(), header_len as usize);
    code.extend_from_slice(runtime);
    code
}
