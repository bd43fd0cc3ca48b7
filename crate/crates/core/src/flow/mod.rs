//! Shadow execution: data tags, control and write records, asset flows.

mod assets;
mod shadow;
mod tracker;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::trace::FrameId;
use crate::types::{Address, Word};

pub use assets::{extract_eth_flow, extract_token_flow, load_allowlist, Allowlist, AllowlistError, MalformedLog, TRANSFER_TOPIC};
pub use shadow::{transfer_tags, Effect, ShadowFrame, SourceLookup};
pub use tracker::{effective_flows, record_control, record_write, track_flows, FlowOutput, FlowTracker, TrackerOptions};

/// Identity of a data source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Identifier {
    Storage { contract: Address, slot: Word },
    Balance(Address),
    CallData(FrameId),
    CallValue(FrameId),
    Origin,
    Caller(FrameId),
    BlockNumber,
    Timestamp,
    ChainContext(&'static str),
    ReturnData(FrameId),
}

impl Identifier {
    /// Storage slots and balances change during execution; everything else
    /// is read-only context.
    pub fn is_writable(&self) -> bool {
        matches!(self, Identifier::Storage { .. } | Identifier::Balance(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Identifier::Storage { .. } => "storage",
            Identifier::Balance(_) => "balance",
            Identifier::CallData(_) => "calldata",
            Identifier::CallValue(_) => "callvalue",
            Identifier::Origin => "origin",
            Identifier::Caller(_) => "caller",
            Identifier::BlockNumber => "number",
            Identifier::Timestamp => "timestamp",
            Identifier::ChainContext(_) => "context",
            Identifier::ReturnData(_) => "returndata",
        }
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identifier::Storage { contract, slot } => write!(f, "storage({contract},{slot:#x})"),
            Identifier::Balance(a) => write!(f, "balance({a})"),
            Identifier::CallData(id) => write!(f, "calldata(#{id})"),
            Identifier::CallValue(id) => write!(f, "callvalue(#{id})"),
            Identifier::Origin => f.write_str("origin"),
            Identifier::Caller(id) => write!(f, "caller(#{id})"),
            Identifier::BlockNumber => f.write_str("number"),
            Identifier::Timestamp => f.write_str("timestamp"),
            Identifier::ChainContext(name) => write!(f, "context({name})"),
            Identifier::ReturnData(id) => write!(f, "returndata(#{id})"),
        }
    }
}

/// One version of a data source. Contextual sources always carry version 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceRef {
    pub id: Identifier,
    pub version: u32,
}

impl SourceRef {
    pub fn new(id: Identifier, version: u32) -> Self {
        SourceRef { id, version }
    }

    pub fn context(id: Identifier) -> Self {
        SourceRef { id, version: 0 }
    }
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.id, self.version)
    }
}

/// The set of sources a shadow value derives from. Empty means constant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DataTag(BTreeSet<SourceRef>);

impl DataTag {
    pub fn empty() -> Self {
        DataTag(BTreeSet::new())
    }

    pub fn single(source: SourceRef) -> Self {
        DataTag(BTreeSet::from([source]))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, source: &SourceRef) -> bool {
        self.0.contains(source)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SourceRef> {
        self.0.iter()
    }

    pub fn insert(&mut self, source: SourceRef) {
        self.0.insert(source);
    }

    pub fn extend(&mut self, other: &DataTag) {
        if self.0.is_empty() {
            self.0 = other.0.clone();
        } else {
            self.0.extend(other.0.iter().cloned());
        }
    }

    pub fn union(&self, other: &DataTag) -> DataTag {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    pub fn union_all<'a>(tags: impl IntoIterator<Item = &'a DataTag>) -> DataTag {
        let mut out = DataTag::empty();
        for t in tags {
            out.extend(t);
        }
        out
    }

    pub fn into_set(self) -> BTreeSet<SourceRef> {
        self.0
    }
}

impl FromIterator<SourceRef> for DataTag {
    fn from_iter<I: IntoIterator<Item = SourceRef>>(iter: I) -> Self {
        DataTag(iter.into_iter().collect())
    }
}

/// Native ETH or a contract-realized token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Asset {
    Eth,
    Token(Address),
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Asset::Eth => f.write_str("ETH"),
            Asset::Token(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Asset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One transfer of value between two accounts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct AssetFlow {
    pub asset: Asset,
    pub from: Address,
    pub to: Address,
    #[serde(serialize_with = "serialize_word")]
    pub amount: Word,
}

pub(crate) fn serialize_word<S: serde::Serializer>(w: &Word, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{w:#x}"))
}

/// Outcome of one conditional jump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlRecord {
    pub frame: FrameId,
    pub jumpi_step: usize,
    pub condition_tag: DataTag,
    pub condition_value: bool,
    /// Entry pc of the block that actually ran next.
    pub taken_block_pc: u64,
    pub taken_step: usize,
}

/// A new version of a writable data source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteRecord {
    /// Frame whose code performed the write.
    pub frame: FrameId,
    /// `None` for the top-level value transfer, which no opcode performs.
    pub step: Option<usize>,
    pub target: SourceRef,
    pub value: Word,
    pub value_tag: DataTag,
    pub slot_tag: DataTag,
    /// Rolled back by a revert in this frame or an ancestor.
    pub discarded: bool,
}

/// An asset flow together with the provenance of its amount and recipient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    /// Frame whose incoming call-trace edge carries the flow.
    pub frame: FrameId,
    pub step: Option<usize>,
    pub flow: AssetFlow,
    pub amount_tag: DataTag,
    pub destination_tag: DataTag,
    pub discarded: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("shadow stack out of sync at step {step}: shadow holds {shadow} items, trace holds {concrete}")]
    ShadowDesync { step: usize, shadow: usize, concrete: usize },
    #[error("step {step} attributed to frame {found}, but frame {expected} is executing")]
    FrameMismatch { step: usize, expected: FrameId, found: FrameId },
    #[error("memory access at step {step} exceeds the supported bound")]
    MemoryBound { step: usize },
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
}
