//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use epg_core::cli::{analyze, AnalyzeOptions, Built};
use epg_core::detect::{
    brute_force_reentrancy, detect_faulty_access_control, detect_price_manipulation, detect_reentrancy,
    detect_reentrancy_r1, reentrancy_triples, DetectorConfig, Refinement, Rule,
};
use epg_core::flow::Identifier;
use epg_core::graph::{from_graphson, to_dot, to_graphson, ContractGranularity, GraphKind, Label, PropertyGraph};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn analysis_err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The pc of the block in Foo that writes Foo's storage after the nested call.
fn storage_write_pcs(b: &Built) -> Vec<u64> {
    let g = &b.epg.graph;
    let mut pcs: Vec<u64> = g
        .edges()
        .iter()
        .filter(|e| e.label == Label::Write)
        .filter(|e| matches!(b.epg.source(e.head).map(|s| &s.id), Some(Identifier::Storage { contract, .. }) if *contract == addr(FOO)))
        .filter_map(|e| b.epg.block(e.tail).map(|i| i.pc))
        .collect();
    pcs.sort();
    pcs.dedup();
    pcs
}

fn foo_bar_scenario() -> Outcome {
    let t0 = Instant::now();
    let cfg = DetectorConfig::generic();
    let attack = built("foo_bar_attack");
    let found = detect_reentrancy(&attack.analysis().map_err(analysis_err)?, &cfg).map_err(analysis_err)?;
    ensure(found.len() == 1, format!("expected one reentrancy finding, got {}", found.len()))?;
    let write_pcs = storage_write_pcs(&attack);
    ensure(write_pcs == [found[0].pc], format!("finding pc {} vs storage-write blocks {write_pcs:?}", found[0].pc))?;
    let patched = built("foo_bar_patched");
    let clean = detect_reentrancy(&patched.analysis().map_err(analysis_err)?, &cfg).map_err(analysis_err)?;
    ensure(clean.is_empty(), format!("patched trace has {} findings", clean.len()))?;
    let took = t0.elapsed();
    ensure(took < Duration::from_secs(5), format!("took {took:?}"))?;
    Ok(format!("one finding at pc {}, patched clean, {:?}", found[0].pc, took))
}

fn dot_lines(dot: &str) -> (BTreeMap<String, usize>, BTreeMap<String, usize>) {
    let mut names = BTreeMap::new();
    let (mut vs, mut es) = (BTreeMap::new(), BTreeMap::new());
    let body: Vec<&str> = dot.lines().map(str::trim).filter(|l| l.ends_with("];")).collect();
    for line in body.iter().filter(|l| !l.contains("->")) {
        let (name, attrs) = line.split_once(' ').unwrap_or_default();
        names.insert(name.to_string(), attrs.to_string());
        *vs.entry(attrs.to_string()).or_insert(0) += 1;
    }
    for line in body.iter().filter(|l| l.contains("->")) {
        let (tail, rest) = line.split_once(" -> ").unwrap_or_default();
        let (head, attrs) = rest.split_once(' ').unwrap_or_default();
        let key = format!("{} -> {} {attrs}", names.get(tail).cloned().unwrap_or_default(), names.get(head).cloned().unwrap_or_default());
        *es.entry(key).or_insert(0) += 1;
    }
    (vs, es)
}

fn ctg_topology() -> Outcome {
    let golden = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/foo_bar_ctg.dot"))
        .map_err(|e| e.to_string())?;
    let b = built_with("foo_bar_attack", ContractGranularity::Address);
    let ctg = b.epg.subgraph(GraphKind::Ctg);
    ensure(dot_lines(&to_dot(&ctg)) == dot_lines(&golden), "vertex/edge multisets differ from the golden file")?;
    ensure(ctg.vertex_count() == 3, format!("{} contract vertices", ctg.vertex_count()))?;
    let id = |a: &str| ctg.vertices().iter().find(|v| b.epg.contract_address(v.id) == Some(addr(a))).map(|v| v.id);
    let (bar, foo) = (id(BAR).ok_or("no Bar vertex")?, id(FOO).ok_or("no Foo vertex")?);
    let call = |t, h| ctg.edges().iter().any(|e| e.label.is_invoke() && e.tail == t && e.head == h);
    ensure(call(bar, foo) && call(foo, bar), "no CALL cycle between Bar and Foo")?;
    Ok(format!("3 contracts, {} CALL edges, golden multisets equal", ctg.edge_count()))
}

fn traversal_algebra() -> Outcome {
    let t0 = Instant::now();
    algebra::check_random_graphs(0xacce_0001, 10_000)?;
    let took = t0.elapsed();
    ensure(took < Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("10000 random graphs match the reference in {took:?}"))
}

fn tag_oracle() -> Outcome {
    let slots = oracle::check_programs(0xacce_0002, 1_000)?;
    Ok(format!("1000 programs, {slots} stack slots, zero mismatches"))
}

fn brute_force_equivalence() -> Outcome {
    let names = corpus();
    ensure(names.len() >= 12, format!("only {} traces", names.len()))?;
    let mut triples = 0;
    for name in &names {
        let b = built(name);
        let a = b.analysis().map_err(analysis_err)?;
        let fast = reentrancy_triples(&a, false).map_err(analysis_err)?;
        ensure(fast == brute_force_reentrancy(&a), format!("{name} diverges"))?;
        triples += fast.len();
    }
    Ok(format!("{} traces, {triples} triples, zero divergence", names.len()))
}

fn refinements() -> Outcome {
    let generic = DetectorConfig::generic();
    let nf = built("no_asset_flow");
    let a = nf.analysis().map_err(analysis_err)?;
    ensure(detect_reentrancy(&a, &generic).map_err(analysis_err)?.is_empty(), "generic rule fires on no_asset_flow")?;
    ensure(!detect_reentrancy_r1(&a, &generic).map_err(analysis_err)?.is_empty(), "R1 misses no_asset_flow")?;

    let hv = built("harvest_fixed_recipient");
    let a = hv.analysis().map_err(analysis_err)?;
    ensure(!detect_faulty_access_control(&a, &generic).map_err(analysis_err)?.is_empty(), "generic FAC silent on harvest")?;
    let a2 = generic.clone().with_refinements([Refinement::A2]);
    ensure(detect_faulty_access_control(&a, &a2).map_err(analysis_err)?.is_empty(), "A2 does not suppress harvest")?;

    let p1 = generic.clone().with_refinements([Refinement::P1]);
    ensure(p1.price_fluctuation_threshold == 0.5, "P1 threshold is not 0.5")?;
    let small = built("swap_borrow_1pct");
    let a = small.analysis().map_err(analysis_err)?;
    ensure(detect_price_manipulation(&a, &p1, None).map_err(analysis_err)?.is_empty(), "P1 keeps the 1% swap")?;
    let large = built("swap_borrow_99pct");
    let a = large.analysis().map_err(analysis_err)?;
    ensure(!detect_price_manipulation(&a, &p1, None).map_err(analysis_err)?.is_empty(), "P1 drops the 99% swap")?;
    Ok("R1 fires on no_asset_flow, A2 suppresses harvest, P1 splits 1%/99%".into())
}

fn monox_patterns() -> Outcome {
    let cfg = DetectorConfig::default();
    let rm = built("monox_remove_liquidity");
    let fac = detect_faulty_access_control(&rm.analysis().map_err(analysis_err)?, &cfg).map_err(analysis_err)?;
    ensure(fac.iter().any(|f| f.rule == Rule::FaultyAccessControl && f.victim == addr(POOL)), "no FAC finding at the pool")?;
    let pump = built("monox_price_pump");
    let pm = detect_price_manipulation(&pump.analysis().map_err(analysis_err)?, &cfg, Some(&prices())).map_err(analysis_err)?;
    ensure(pm.iter().any(|f| f.rule == Rule::PriceManipulation && f.victim == addr(POOL)), "no price finding at the pool")?;
    Ok(format!("FAC at pool pc {}, price manipulation at pool pc {}", fac[0].pc, pm[0].pc))
}

fn performance() -> Outcome {
    let opts = AnalyzeOptions { prices: Some(prices()), ..AnalyzeOptions::default() };
    let mut worst = (String::new(), Duration::ZERO);
    for name in corpus() {
        let t0 = Instant::now();
        analyze(&raw(&name), &opts).map_err(|e| format!("{name}: {e}"))?;
        let took = t0.elapsed();
        if took > worst.1 {
            worst = (name, took);
        }
    }
    ensure(worst.1 < Duration::from_secs(1), format!("{} took {:?}", worst.0, worst.1))?;
    Ok(format!("slowest trace {} at {:?}", worst.0, worst.1))
}

fn canonical(g: &PropertyGraph) -> (Vec<String>, Vec<String>) {
    let sig = |id| format!("{:?}", g.vertex(id).props);
    let mut vs: Vec<String> = g.vertices().iter().map(|v| format!("{:?}{}", v.kind, sig(v.id))).collect();
    let mut es: Vec<String> = g.edges().iter().map(|e| format!("{}-{}{:?}->{}", sig(e.tail), e.label, e.props, sig(e.head))).collect();
    vs.sort();
    es.sort();
    (vs, es)
}

fn export_round_trip() -> Outcome {
    let names = corpus();
    for name in &names {
        let b = built(name);
        let g = &b.epg.graph;
        let back = from_graphson(&to_graphson(g)).map_err(|e| format!("{name}: {e}"))?;
        ensure(&back == g && canonical(&back) == canonical(g), format!("{name}: GraphSON round trip differs"))?;
        ensure(to_dot(g) == to_dot(&built(name).epg.graph), format!("{name}: DOT differs between runs"))?;
    }
    Ok(format!("{} traces round-trip; DOT stable", names.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Foo/Bar reentrancy scenario", foo_bar_scenario),
        ("Foo/Bar call-topology golden", ctg_topology),
        ("traversal algebra property suite", traversal_algebra),
        ("tag-propagation oracle", tag_oracle),
        ("brute-force triple equivalence", brute_force_equivalence),
        ("refinement behavior", refinements),
        ("MonoX-pattern fixtures", monox_patterns),
        ("performance smoke", performance),
        ("export round trip", export_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
