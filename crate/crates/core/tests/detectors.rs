mod common;

use std::collections::BTreeSet;

use common::*;
use epg_core::cli::Built;
use epg_core::detect::*;
use epg_core::flow::Identifier;
use epg_core::graph::{ContractGranularity, VertexId};
use epg_core::traversal::VertexSet;
use epg_core::Address;

fn sites(fs: &[Finding]) -> BTreeSet<(Rule, Address, u64)> {
    fs.iter().map(|f| (f.rule, f.victim, f.pc)).collect()
}

fn reentrancy(b: &Built) -> Vec<Finding> {
    detect_reentrancy(&b.analysis().unwrap(), &DetectorConfig::default()).unwrap()
}

fn frames_at(b: &Built, address: &str) -> Vec<VertexId> {
    let want = addr(address);
    (0..b.tree.len()).filter(|f| b.tree.frame(*f).callee == want).map(|f| b.epg.frame_vertex(f)).collect()
}

fn block_with_pc(b: &Built, set: &VertexSet, pc: u64) -> bool {
    set.iter().any(|v| b.epg.block(*v).is_some_and(|i| i.pc == pc))
}

// ---- reentrancy -------------------------------------------------------

#[test]
fn foo_bar_has_exactly_one_reentrancy_at_the_stale_write() {
    let b = built("foo_bar_attack");
    let fs = reentrancy(&b);
    assert_eq!(fs.len(), 1, "{fs:#?}");
    let f = &fs[0];
    assert_eq!(f.rule, Rule::Reentrancy);
    assert_eq!(f.pc, 384);
    assert_eq!(f.victim, addr(FOO));
    let foo_frames = frames_at(&b, FOO);
    assert!(foo_frames.contains(&f.witness("v0").unwrap()));
    assert!(foo_frames.contains(&f.witness("v").unwrap()));
    assert_ne!(f.witness("v0"), f.witness("v"));
    assert_eq!(b.epg.block(f.witness("b").unwrap()).unwrap().pc, 384);
}

#[test]
fn patched_foo_bar_is_clean() {
    assert!(reentrancy(&built("foo_bar_patched")).is_empty());
}

#[test]
fn benign_nested_calls_are_clean() {
    assert!(reentrancy(&built("benign_nested")).is_empty());
}

#[test]
fn delegate_and_create_reentrancy_are_caught() {
    let d = reentrancy(&built("delegatecall_reentrancy"));
    assert_eq!(sites(&d), BTreeSet::from([(Rule::Reentrancy, addr(PROXY), 384)]));
    let c = reentrancy(&built("create_reentrancy"));
    assert_eq!(sites(&c), BTreeSet::from([(Rule::Reentrancy, addr(FOO), 384)]));
}

#[test]
fn control_block_of_reentered_foo_contains_the_stale_write() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let inner = *frames_at(&b, FOO).last().unwrap();
    assert!(block_with_pc(&b, &control_block(&a, inner).unwrap(), 384));
}

#[test]
fn control_block_is_empty_without_tagged_conditions() {
    let b = built("empty_transfer");
    let a = b.analysis().unwrap();
    assert!(control_block(&a, b.epg.frame_vertex(0)).unwrap().is_empty());
}

#[test]
fn control_block_ignores_ordering_within_a_frame() {
    // slot 0 is written first, then read by the branch
    let raw = run_program("PUSH1 1 PUSH1 0 SSTORE PUSH1 0 SLOAD @a JUMPI :a STOP", vec![]);
    let b = build_raw(&raw);
    let a = b.analysis().unwrap();
    let got = control_block(&a, b.epg.frame_vertex(0)).unwrap();
    assert!(block_with_pc(&b, &got, 0), "{got:?}");
}

#[test]
fn succ_block_after_nested_bar_call() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let outer_foo = frames_at(&b, FOO)[0];
    let nested_bar = frames_at(&b, BAR)[1];
    assert!(block_with_pc(&b, &succ_block(&a, outer_foo, nested_bar).unwrap(), 384));
}

#[test]
fn succ_block_of_the_last_call_is_empty() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let last = b.epg.frame_vertex(b.tree.len() - 1);
    let parent = b.epg.frame_vertex(b.tree.frame(b.tree.len() - 1).parent.unwrap());
    let after = succ_block(&a, parent, last).unwrap();
    // everything left in the parent after the final call returns
    let end = b.tree.frame(b.tree.len() - 1).steps.end;
    for v in &after {
        assert!(b.epg.block(*v).unwrap().first_step >= end);
    }
    let leaf = b.epg.frame_vertex(6);
    let leaf_parent = b.epg.frame_vertex(b.tree.frame(6).parent.unwrap());
    let s = succ_block(&a, leaf_parent, leaf).unwrap();
    assert!(s.iter().all(|v| b.epg.block(*v).is_some()));
}

/// Hand enumeration: blocks inside v0's subtree, outside v's, starting after v ends.
fn succ_by_hand(b: &Built, f0: usize, f: usize) -> VertexSet {
    let end = b.tree.frame(f).steps.end;
    b.epg
        .blocks()
        .filter(|(_, i)| b.tree.is_within(i.frame, f0) && !b.tree.is_within(i.frame, f) && i.first_step >= end)
        .map(|(v, _)| v)
        .collect()
}

#[test]
fn succ_block_matches_hand_enumeration_for_all_nested_pairs() {
    for name in ["foo_bar_attack", "mutual_recursion", "benign_nested", "delegatecall_reentrancy"] {
        let b = built(name);
        let a = b.analysis().unwrap();
        for f0 in 0..b.tree.len() {
            for f in 0..b.tree.len() {
                if f == f0 || !b.tree.is_within(f, f0) {
                    continue;
                }
                let got = succ_block(&a, b.epg.frame_vertex(f0), b.epg.frame_vertex(f)).unwrap();
                assert_eq!(got, succ_by_hand(&b, f0, f), "{name}: f0={f0} f={f}");
            }
        }
    }
}

#[test]
fn succ_block_rejects_non_descendants() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let (outer, inner) = (b.epg.frame_vertex(1), b.epg.frame_vertex(3));
    assert!(matches!(succ_block(&a, inner, outer), Err(DetectError::NotDescendant { .. })));
}

#[test]
fn r1_fires_where_the_generic_rule_cannot() {
    let b = built("no_asset_flow");
    let a = b.analysis().unwrap();
    let cfg = DetectorConfig::default();
    assert!(detect_reentrancy(&a, &cfg).unwrap().is_empty());
    let r1 = detect_reentrancy_r1(&a, &cfg).unwrap();
    assert_eq!(sites(&r1), BTreeSet::from([(Rule::ReentrancyR1, addr(GUARD_VICTIM), 65)]));
}

#[test]
fn r1_also_fires_on_foo_bar_and_not_on_straight_line_code() {
    let cfg = DetectorConfig::default();
    let b = built("foo_bar_attack");
    let r1 = detect_reentrancy_r1(&b.analysis().unwrap(), &cfg).unwrap();
    assert_eq!(r1.len(), 1);
    assert_eq!(r1[0].pc, 384);
    let s = built("single_frame");
    assert!(detect_reentrancy_r1(&s.analysis().unwrap(), &cfg).unwrap().is_empty());
}

#[test]
fn traversal_triples_equal_brute_force_on_the_corpus() {
    let names = corpus();
    assert!(names.len() >= 12);
    for name in names {
        let b = built(&name);
        let a = b.analysis().unwrap();
        assert_eq!(reentrancy_triples(&a, false).unwrap(), brute_force_reentrancy(&a), "{name}");
    }
}

#[test]
fn detectors_refuse_address_granularity() {
    let b = built_with("foo_bar_attack", ContractGranularity::Address);
    assert!(matches!(b.analysis(), Err(DetectError::Granularity)));
}

// ---- access control ---------------------------------------------------

#[test]
fn control_source_of_a_guarded_transfer_contains_caller_and_owner_slot() {
    let b = built("guarded_withdraw");
    let a = b.analysis().unwrap();
    let t = *transfer_blocks(&a).unwrap().iter().next().unwrap();
    let cs = control_source(&a, t).unwrap();
    let ids: Vec<&Identifier> = cs.iter().filter_map(|v| b.epg.source(*v)).map(|s| &s.id).collect();
    assert!(ids.iter().any(|i| matches!(i, Identifier::Caller(_))), "{ids:?}");
    assert!(ids.iter().any(|i| matches!(i, Identifier::Storage { .. })), "{ids:?}");
}

#[test]
fn control_source_of_an_unconditioned_first_block_is_empty() {
    let raw = run_program("PUSH1 1 POP STOP", vec![]);
    let b = build_raw(&raw);
    let a = b.analysis().unwrap();
    let first = b.epg.block_at(0, 0, 0).unwrap();
    assert!(control_source(&a, first).unwrap().is_empty());
}

#[test]
fn control_source_follows_dependencies_back_to_calldata() {
    let raw = run_program("PUSH1 0 CALLDATALOAD PUSH1 0 SSTORE PUSH1 0 SLOAD @a JUMPI :a STOP", vec![1; 32]);
    let b = build_raw(&raw);
    let a = b.analysis().unwrap();
    let last = b.epg.blocks().max_by_key(|(_, i)| i.first_step).unwrap().0;
    let cs = control_source(&a, last).unwrap();
    assert!(cs.iter().any(|v| matches!(b.epg.source(*v).map(|s| &s.id), Some(Identifier::CallData(0)))));
}

#[test]
fn transfer_blocks_cover_eth_and_token_transfers_only() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let t = transfer_blocks(&a).unwrap();
    assert!(t.iter().all(|v| a.owner(*v) == addr(FOO) && a.block_pc(*v) == 268));
    assert_eq!(t.len(), 3);

    let m = built("monox_remove_liquidity");
    let a = m.analysis().unwrap();
    let t = transfer_blocks(&a).unwrap();
    assert!(t.iter().any(|v| a.owner(*v) == addr(POOL)));
}

#[test]
fn unguarded_liquidity_removal_is_faulty_access_control() {
    let b = built("monox_remove_liquidity");
    let fs = detect_faulty_access_control(&b.analysis().unwrap(), &DetectorConfig::default()).unwrap();
    assert_eq!(fs.len(), 1);
    assert_eq!(fs[0].victim, addr(POOL));
}

#[test]
fn origin_guarded_removal_is_clean() {
    let b = built("monox_remove_liquidity_guarded");
    let a = b.analysis().unwrap();
    assert!(detect_faulty_access_control(&a, &DetectorConfig::generic()).unwrap().is_empty());
    assert!(detect_faulty_access_control(&a, &DetectorConfig::default()).unwrap().is_empty());
}

#[test]
fn a2_suppresses_fixed_recipient_harvest() {
    let b = built("harvest_fixed_recipient");
    let a = b.analysis().unwrap();
    let generic = detect_faulty_access_control(&a, &DetectorConfig::generic()).unwrap();
    assert_eq!(generic.len(), 1);
    let a2 = DetectorConfig::generic().with_refinements([Refinement::A2]);
    assert!(detect_faulty_access_control(&a, &a2).unwrap().is_empty());
}

#[test]
fn a1_ignores_origin_checks_inside_attacker_contracts() {
    let b = built("attacker_origin_check");
    let a = b.analysis().unwrap();
    assert!(detect_faulty_access_control(&a, &DetectorConfig::generic()).unwrap().is_empty());
    let a1 = DetectorConfig::generic().with_refinements([Refinement::A1]);
    let fs = detect_faulty_access_control(&a, &a1).unwrap();
    assert_eq!(sites(&fs), BTreeSet::from([(Rule::FaultyAccessControl, addr(POOL), 270)]));
}

#[test]
fn a3_suppresses_user_swaps_paid_by_the_sender() {
    let b = built("user_swap");
    let a = b.analysis().unwrap();
    assert!(!detect_faulty_access_control(&a, &DetectorConfig::generic()).unwrap().is_empty());
    let a3 = DetectorConfig::generic().with_refinements([Refinement::A3]);
    assert!(detect_faulty_access_control(&a, &a3).unwrap().is_empty());
}

#[test]
fn configured_attacker_contracts_extend_a1() {
    let cfg = DetectorConfig { attacker_contracts: [addr(BAR)].into(), ..DetectorConfig::default() };
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    assert!(a.attacker_addresses(&cfg).contains(&addr(BAR)));
}

// ---- price manipulation -----------------------------------------------

#[test]
fn write_control_sees_origin_guard_on_the_writer() {
    let b = built("origin_guarded_price");
    let a = b.analysis().unwrap();
    let origin = a.origin_vertices(&DetectorConfig::default());
    let lending = transfer_blocks(&a).unwrap().into_iter().find(|v| a.owner(*v) == addr(LENDING)).unwrap();
    assert!(!write_control(&a, lending).unwrap().is_disjoint(&origin));
}

#[test]
fn write_control_is_empty_without_written_sources() {
    let raw = run_program("PUSH1 0 CALLDATALOAD @a JUMPI :a STOP", vec![1; 32]);
    let b = build_raw(&raw);
    let a = b.analysis().unwrap();
    for (v, _) in b.epg.blocks() {
        assert!(write_control(&a, v).unwrap().is_empty());
    }
}

#[test]
fn write_control_lacks_origin_for_attacker_written_reserves() {
    let b = built("swap_borrow_99pct");
    let a = b.analysis().unwrap();
    let origin = a.origin_vertices(&DetectorConfig::default());
    let lending = transfer_blocks(&a).unwrap().into_iter().find(|v| a.owner(*v) == addr(LENDING)).unwrap();
    let wc = write_control(&a, lending).unwrap();
    assert!(!wc.is_empty());
    assert!(wc.is_disjoint(&origin));
}

#[test]
fn swap_and_borrow_is_price_manipulation() {
    let b = built("swap_borrow_99pct");
    let a = b.analysis().unwrap();
    let fs = detect_price_manipulation(&a, &DetectorConfig::generic(), None).unwrap();
    assert_eq!(sites(&fs), BTreeSet::from([(Rule::PriceManipulation, addr(LENDING), 150)]));
}

#[test]
fn p1_separates_small_and_large_reserve_shifts() {
    let p1 = DetectorConfig::generic().with_refinements([Refinement::P1]);
    assert_eq!(p1.price_fluctuation_threshold, 0.5);
    let small = built("swap_borrow_1pct");
    let a = small.analysis().unwrap();
    assert!(!detect_price_manipulation(&a, &DetectorConfig::generic(), None).unwrap().is_empty());
    assert!(detect_price_manipulation(&a, &p1, None).unwrap().is_empty());
    let large = built("swap_borrow_99pct");
    let fs = detect_price_manipulation(&large.analysis().unwrap(), &p1, None).unwrap();
    assert_eq!(fs.len(), 1);
    assert_eq!(fs[0].refinements_applied, vec![Refinement::P1]);
}

#[test]
fn pool_shift_values() {
    let b = built("swap_borrow_1pct");
    let shifts = pool_shifts(&b.analysis().unwrap());
    assert_eq!(shifts.len(), 1);
    assert_eq!(shifts[0].pool, addr(POOL));
    assert!((shifts[0].shift - 0.01).abs() < 1e-9);
}

#[test]
fn p2_uses_prices_and_annotates_missing_ones() {
    let b = built("monox_price_pump");
    let a = b.analysis().unwrap();
    let p2 = DetectorConfig::generic().with_refinements([Refinement::P2]);
    let table = prices();
    let fs = detect_price_manipulation(&a, &p2, Some(&table)).unwrap();
    assert_eq!(fs.len(), 1);
    assert!(fs[0].note.contains("pool value change"));

    let strict = DetectorConfig { usd_value_threshold: 1e12, ..p2.clone() };
    assert!(detect_price_manipulation(&a, &strict, Some(&table)).unwrap().is_empty());

    let fs = detect_price_manipulation(&a, &p2, Some(&PriceTable::new())).unwrap();
    assert_eq!(fs.len(), 1);
    assert!(fs[0].note.contains("low confidence"));
}

#[test]
fn origin_guarded_price_update_is_clean() {
    let b = built("origin_guarded_price");
    let a = b.analysis().unwrap();
    assert!(detect_price_manipulation(&a, &DetectorConfig::generic(), None).unwrap().is_empty());
}

#[test]
fn monox_pump_flags_the_pool() {
    let b = built("monox_price_pump");
    let fs = detect_price_manipulation(&b.analysis().unwrap(), &DetectorConfig::default(), Some(&prices())).unwrap();
    assert_eq!(sites(&fs), BTreeSet::from([(Rule::PriceManipulation, addr(POOL), 152)]));
}

// ---- properties -------------------------------------------------------

#[test]
fn access_refinements_only_suppress() {
    use Refinement::*;
    for name in corpus() {
        let b = built(&name);
        let a = b.analysis().unwrap();
        let run = |rs: &[Refinement]| {
            sites(&detect_faulty_access_control(&a, &DetectorConfig::generic().with_refinements(rs.to_vec())).unwrap())
        };
        let (s1, s12, s123) = (run(&[A1]), run(&[A1, A2]), run(&[A1, A2, A3]));
        assert!(s12.is_subset(&s1), "{name}");
        assert!(s123.is_subset(&s12), "{name}");
    }
}

#[test]
fn r1_sites_include_generic_sites() {
    for name in corpus() {
        let b = built(&name);
        let a = b.analysis().unwrap();
        let cfg = DetectorConfig::default();
        let key = |fs: Vec<Finding>| fs.into_iter().map(|f| (f.victim, f.pc)).collect::<BTreeSet<_>>();
        let generic = key(detect_reentrancy(&a, &cfg).unwrap());
        let r1 = key(detect_reentrancy_r1(&a, &cfg).unwrap());
        assert!(generic.is_subset(&r1), "{name}");
    }
}

fn everything(a: &Analysis, cfg: &DetectorConfig) -> Vec<Finding> {
    let table = prices();
    let mut fs = detect_reentrancy(a, cfg).unwrap();
    fs.extend(detect_reentrancy_r1(a, cfg).unwrap());
    fs.extend(detect_faulty_access_control(a, cfg).unwrap());
    fs.extend(detect_price_manipulation(a, cfg, Some(&table)).unwrap());
    fs
}

#[test]
fn every_finding_rechecks_on_its_witnesses() {
    for name in corpus() {
        let b = built(&name);
        let a = b.analysis().unwrap();
        for cfg in [DetectorConfig::generic(), DetectorConfig::default()] {
            for f in everything(&a, &cfg) {
                assert!(recheck(&a, &cfg, &f).unwrap(), "{name}: {f:?}");
            }
        }
    }
}

#[test]
fn recheck_rejects_a_tampered_witness() {
    let b = built("foo_bar_attack");
    let a = b.analysis().unwrap();
    let mut f = reentrancy(&b).remove(0);
    let v0 = f.witness("v0").unwrap();
    for w in &mut f.witnesses {
        if w.name == "v" {
            w.id = v0;
        }
    }
    assert!(!recheck(&a, &DetectorConfig::default(), &f).unwrap());
}

#[test]
fn findings_are_deterministic() {
    for name in corpus() {
        let first = everything(&built(&name).analysis().unwrap(), &DetectorConfig::default());
        let second = everything(&built(&name).analysis().unwrap(), &DetectorConfig::default());
        assert_eq!(first, second, "{name}");
    }
}
