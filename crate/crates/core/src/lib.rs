//! Execution property graphs for EVM transactions.
//!
//! The pipeline replays a struct-log trace, tracks data, control and asset
//! flows on a shadow machine, merges the call trace, dynamic control-flow and
//! dynamic dependence graphs into one property graph, and evaluates attack
//! conditions as compositions of graph traversals.

pub mod flow;
pub mod cli;
pub mod detect;
pub mod graph;
pub mod opcode;
pub mod trace;
pub mod traversal;
pub mod types;

pub use types::{Address, Word};
