use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::access::{control_source_of, transfer_blocks};
use super::{dedup, lower_ids, Analysis, DetectError, DetectorConfig, Finding, Refinement, Rule, Witness};
use crate::flow::Asset;
use crate::graph::{Label, VertexId};
use crate::traversal::{in_, VertexSet};
use crate::types::{Address, Word};

#[derive(Debug, thiserror::Error)]
pub enum PriceError {
    #[error("cannot read price table: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed price table: {0}")]
    Csv(#[from] csv::Error),
    #[error("price table line {line}: bad token `{token}`")]
    BadToken { line: u64, token: String },
    #[error("price table line {line}: price {price} is not strictly positive")]
    NonPositive { line: u64, price: f64 },
    #[error("no price for {asset} at or before block {block}")]
    MissingPrice { asset: Asset, block: u64 },
}

#[derive(Deserialize)]
struct Row {
    token: String,
    block: u64,
    usd_price: f64,
}

/// Historical USD prices per asset, looked up by block number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceTable {
    series: BTreeMap<Asset, BTreeMap<u64, f64>>,
}

impl PriceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads CSV with header `token,block,usd_price`; `ETH` names native ether.
    pub fn from_reader(r: impl Read) -> Result<Self, PriceError> {
        let mut table = PriceTable::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            // header is line 1
            let line = i as u64 + 2;
            let asset = if row.token.eq_ignore_ascii_case("eth") {
                Asset::Eth
            } else {
                let a: Address = row.token.parse().map_err(|_| PriceError::BadToken { line, token: row.token.clone() })?;
                Asset::Token(a)
            };
            table.insert(asset, row.block, row.usd_price).map_err(|_| PriceError::NonPositive { line, price: row.usd_price })?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PriceError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn insert(&mut self, asset: Asset, block: u64, usd_price: f64) -> Result<(), PriceError> {
        if !(usd_price > 0.0 && usd_price.is_finite()) {
            return Err(PriceError::NonPositive { line: 0, price: usd_price });
        }
        self.series.entry(asset).or_default().insert(block, usd_price);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.series.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Price at the latest recorded block not after `block`.
    pub fn price_at(&self, asset: Asset, block: u64) -> Result<f64, PriceError> {
        self.series
            .get(&asset)
            .and_then(|s| s.range(..=block).next_back())
            .map(|(_, p)| *p)
            .ok_or(PriceError::MissingPrice { asset, block })
    }
}

/// Balance movement of one swap pool during the transaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PoolShift {
    pub pool: Address,
    /// Largest `|net change| / (balance before + inflow)` over the pool's assets.
    pub shift: f64,
    /// Net change per asset in base units (positive means the pool gained).
    pub deltas: BTreeMap<String, f64>,
    #[serde(skip)]
    raw_deltas: BTreeMap<Asset, f64>,
}

impl PoolShift {
    /// Absolute USD value of the pool's net change, or the assets lacking a price.
    pub fn usd_change(&self, prices: &PriceTable, block: u64) -> Result<f64, Vec<Asset>> {
        let mut missing = Vec::new();
        let mut total = 0.0;
        for (asset, delta) in &self.raw_deltas {
            match prices.price_at(*asset, block) {
                Ok(p) => total += delta / 1e18 * p,
                Err(_) => missing.push(*asset),
            }
        }
        if missing.is_empty() {
            Ok(total.abs())
        } else {
            Err(missing)
        }
    }
}

fn word_f64(w: Word) -> f64 {
    w.0.iter().rev().fold(0.0, |acc, limb| acc * 18_446_744_073_709_551_616.0 + *limb as f64)
}

/// Contracts that both receive and send assets, spanning at least two
/// distinct assets, with their relative balance shift. An address only
/// counts as a pool if it held a reserve of every asset it traded before
/// the transaction; this keeps attacker contracts that merely route a swap
/// out of the set.
pub fn pool_shifts(a: &Analysis) -> Vec<PoolShift> {
    let env = &a.trace.envelope;
    let mut inflow: BTreeMap<Address, BTreeMap<Asset, f64>> = BTreeMap::new();
    let mut outflow: BTreeMap<Address, BTreeMap<Asset, f64>> = BTreeMap::new();
    for rec in a.flows.flows.iter().filter(|r| !r.discarded) {
        let amt = word_f64(rec.flow.amount);
        *inflow.entry(rec.flow.to).or_default().entry(rec.flow.asset).or_default() += amt;
        *outflow.entry(rec.flow.from).or_default().entry(rec.flow.asset).or_default() += amt;
    }
    let mut out = Vec::new();
    for (pool, ins) in &inflow {
        let Some(outs) = outflow.get(pool) else { continue };
        let assets: BTreeSet<Asset> = ins.keys().chain(outs.keys()).copied().collect();
        if assets.len() < 2 {
            continue;
        }
        let mut shift: f64 = 0.0;
        let mut raw = BTreeMap::new();
        let mut reserves = true;
        for asset in assets {
            let i = ins.get(&asset).copied().unwrap_or(0.0);
            let o = outs.get(&asset).copied().unwrap_or(0.0);
            let pre = match asset {
                Asset::Eth => env.balances.get(pool).copied(),
                Asset::Token(t) => env.token_balances.get(&t).and_then(|h| h.get(pool)).copied(),
            }
            .map_or(0.0, word_f64);
            reserves &= pre > 0.0;
            let delta = i - o;
            let base = pre + i;
            if base > 0.0 {
                shift = shift.max(delta.abs() / base);
            }
            raw.insert(asset, delta);
        }
        if !reserves {
            continue;
        }
        out.push(PoolShift {
            pool: *pool,
            shift,
            deltas: raw.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            raw_deltas: raw,
        });
    }
    out
}

/// Control sources of every block that wrote state the controls of `b` depend on.
pub fn write_control(a: &Analysis, b: VertexId) -> Result<VertexSet, DetectError> {
    write_control_of(a, &control_source_of(a, &VertexSet::from([b]), &BTreeSet::new())?)
}

fn write_control_of(a: &Analysis, cs: &VertexSet) -> Result<VertexSet, DetectError> {
    let writers = in_([Label::Write]).eval(&a.epg.graph, cs)?;
    control_source_of(a, &writers, &BTreeSet::new())
}

/// Generic condition for one block.
pub(crate) fn price_holds(a: &Analysis, cfg: &DetectorConfig, b: VertexId) -> Result<bool, DetectError> {
    if !transfer_blocks(a)?.contains(&b) {
        return Ok(false);
    }
    let cs = control_source_of(a, &VertexSet::from([b]), &BTreeSet::new())?;
    if in_([Label::Write]).eval(&a.epg.graph, &cs)?.is_empty() {
        return Ok(false);
    }
    Ok(write_control_of(a, &cs)?.is_disjoint(&a.origin_vertices(cfg)))
}

/// Transfers steered by state that was written without origin control.
pub fn detect_price_manipulation(
    a: &Analysis,
    cfg: &DetectorConfig,
    prices: Option<&PriceTable>,
) -> Result<Vec<Finding>, DetectError> {
    let origin = a.origin_vertices(cfg);
    let by_block = a.flows_by_block();
    let mut raw = Vec::new();
    for b in transfer_blocks(a)? {
        let cs = control_source_of(a, &VertexSet::from([b]), &BTreeSet::new())?;
        // a transfer that reads no written state has nothing to manipulate
        if in_([Label::Write]).eval(&a.epg.graph, &cs)?.is_empty() {
            continue;
        }
        if !write_control_of(a, &cs)?.is_disjoint(&origin) {
            continue;
        }
        let victim = a.owner(b);
        let pc = a.block_pc(b);
        let mut witnesses = vec![Witness::vertex("b", b)];
        if let Some(&f) = by_block.get(&b).and_then(|v| v.first()) {
            witnesses.push(Witness::edge("transfer", a.epg.ct_edge(a.flows.flows[f].frame)));
        }
        raw.push(Finding {
            rule: Rule::PriceManipulation,
            witnesses,
            refinements_applied: Vec::new(),
            victim,
            pc,
            note: format!("transfer at pc {pc} depends on state written without any check on the transaction origin"),
        });
    }
    let mut findings = dedup(raw, lower_ids);
    if findings.is_empty() {
        return Ok(findings);
    }

    let pools = pool_shifts(a);
    if cfg.enabled(Refinement::P1) {
        let best = pools.iter().map(|p| p.shift).fold(0.0, f64::max);
        if best <= cfg.price_fluctuation_threshold {
            return Ok(Vec::new());
        }
        let moved: Vec<String> = pools
            .iter()
            .filter(|p| p.shift > cfg.price_fluctuation_threshold)
            .map(|p| format!("{} ({:.1}%)", p.pool, p.shift * 100.0))
            .collect();
        for f in &mut findings {
            f.refinements_applied.push(Refinement::P1);
            f.note.push_str(&format!("; pool balance shift: {}", moved.join(", ")));
        }
    }
    if cfg.enabled(Refinement::P2) {
        let block = a.trace.envelope.block_number;
        let empty = PriceTable::new();
        let table = prices.unwrap_or(&empty);
        let mut best: Option<f64> = None;
        let mut missing: BTreeSet<Asset> = BTreeSet::new();
        for p in &pools {
            match p.usd_change(table, block) {
                Ok(v) => best = Some(best.map_or(v, |b: f64| b.max(v))),
                Err(m) => missing.extend(m),
            }
        }
        if missing.is_empty() && best.is_none_or(|v| v <= cfg.usd_value_threshold) {
            return Ok(Vec::new());
        }
        for f in &mut findings {
            f.refinements_applied.push(Refinement::P2);
            if missing.is_empty() {
                f.note.push_str(&format!("; pool value change ${:.0}", best.unwrap_or(0.0)));
            } else {
                let names: Vec<String> = missing.iter().map(|a| a.to_string()).collect();
                f.note.push_str(&format!(
                    "; low confidence: no USD price for {} at block {block}, value filter not applied",
                    names.join(", ")
                ));
            }
        }
    }
    Ok(findings)
}
