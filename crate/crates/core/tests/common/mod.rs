#![allow(dead_code)]

use std::path::PathBuf;

use epg_core::cli::{build, Built};
use epg_core::detect::{DetectorConfig, PriceTable};
use epg_core::graph::ContractGranularity;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixture_dir().join(format!("{name}.json"))
}

pub fn raw(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// Names of every well-formed trace in the corpus, sorted.
pub fn corpus() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            let stem = p.file_stem()?.to_str()?.to_string();
            (p.extension()? == "json" && stem != "malformed").then_some(stem)
        })
        .collect();
    names.sort();
    names
}

pub fn built(name: &str) -> Built {
    build(&raw(name), &DetectorConfig::default(), ContractGranularity::Frame).unwrap()
}

pub fn built_with(name: &str, granularity: ContractGranularity) -> Built {
    build(&raw(name), &DetectorConfig::default(), granularity).unwrap()
}

pub fn prices() -> PriceTable {
    PriceTable::load(&fixture_dir().join("prices.csv")).unwrap()
}

pub fn addr(s: &str) -> epg_core::Address {
    s.parse().unwrap()
}

pub const FOO: &str = "0xf0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0";
pub const BAR: &str = "0xbabababababababababababababababababababa";
pub const POOL: &str = "0x3030303030303030303030303030303030303030";
pub const LENDING: &str = "0x1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e";
pub const GUARD_VICTIM: &str = "0x6060606060606060606060606060606060606060";
pub const PROXY: &str = "0x9090909090909090909090909090909090909090";

/// Runs assembled `code` as the callee of a single call from a fresh EOA
/// and returns the trace document.
pub fn run_program(code: &str, input: Vec<u8>) -> Vec<u8> {
    use epg_evmsim::vm::{execute, trace_document, Env, TraceMeta, Tx, World};
    let bytes = epg_evmsim::asm::assemble(code, &Default::default()).unwrap();
    let from = epg_evmsim::addr("a11ce00000000000000000000000000000000001");
    let to = epg_evmsim::addr("c0de00000000000000000000000000000000c0de");
    let mut world = World::default();
    world.account(from).balance = epg_evmsim::ether(1);
    world.deploy(to, bytes, Default::default());
    let before = world.clone();
    let env = Env::default();
    let tx = Tx::call(from, to, Default::default(), input);
    let outcome = execute(&mut world, &env, &tx);
    serde_json::to_vec(&trace_document(&before, &env, &tx, &outcome, &TraceMeta::default())).unwrap()
}

pub fn build_raw(raw: &[u8]) -> Built {
    build(raw, &DetectorConfig::default(), ContractGranularity::Frame).unwrap()
}

pub mod algebra;
pub mod oracle;
