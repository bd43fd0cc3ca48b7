use std::collections::BTreeSet;
use std::path::Path;

use super::{Asset, AssetFlow};
use crate::opcode::Opcode;
use crate::trace::{CallFrame, OpStep};
use crate::types::{parse_word, Address, Word};

/// keccak-256 of `Transfer(address,address,uint256)`.
pub const TRANSFER_TOPIC: &str = "ddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef";

/// Token contracts whose `Transfer` events are trusted.
pub type Allowlist = BTreeSet<Address>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("Transfer log at step {step} carries {len} data bytes, expected at least 32")]
pub struct MalformedLog {
    pub step: usize,
    pub len: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum AllowlistError {
    #[error("cannot read allowlist: {0}")]
    Io(#[from] std::io::Error),
    #[error("allowlist line {line}: {source}")]
    BadAddress { line: usize, source: crate::types::AddressParseError },
}

/// Reads one address per line; blank lines and `#` comments are skipped.
pub fn load_allowlist(path: &Path) -> Result<Allowlist, AllowlistError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Allowlist::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.insert(line.parse().map_err(|source| AllowlistError::BadAddress { line: i + 1, source })?);
    }
    Ok(out)
}

/// ETH moved by an invocation, if any.
pub fn extract_eth_flow(frame: &CallFrame) -> Option<AssetFlow> {
    (frame.kind.moves_ether() && !frame.value.is_zero()).then(|| AssetFlow {
        asset: Asset::Eth,
        from: frame.caller,
        to: frame.callee,
        amount: frame.value,
    })
}

fn transfer_topic() -> Word {
    parse_word(TRANSFER_TOPIC).expect("constant topic")
}

/// Decodes an ERC-20 `Transfer` event emitted by `emitter` at `step`.
pub fn extract_token_flow(
    index: usize,
    step: &OpStep,
    emitter: Address,
    allowlist: Option<&Allowlist>,
) -> Result<Option<AssetFlow>, MalformedLog> {
    if step.op != Opcode::LOG3 && step.op != Opcode::LOG4 {
        return Ok(None);
    }
    let (Some(offset), Some(len), Some(topic0), Some(from), Some(to)) =
        (step.peek(0), step.peek(1), step.peek(2), step.peek(3), step.peek(4))
    else {
        return Ok(None);
    };
    if topic0 != transfer_topic() {
        return Ok(None);
    }
    if allowlist.is_some_and(|a| !a.contains(&emitter)) {
        return Ok(None);
    }
    if len < Word::from(32) {
        return Err(MalformedLog { step: index, len: len.as_usize() });
    }
    if offset > Word::from(u32::MAX) {
        return Err(MalformedLog { step: index, len: 0 });
    }
    let amount = Word::from_big_endian(&step.memory_slice(offset.as_usize(), 32));
    Ok(Some(AssetFlow { asset: Asset::Token(emitter), from: Address::from_word(from), to: Address::from_word(to), amount }))
}
