use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{dedup, sigma_c_ct, Analysis, DetectError, DetectorConfig, Finding, Refinement, Rule, Witness};
use crate::flow::{Identifier, SourceRef};
use crate::graph::{Label, PropValue, VertexId, VertexKind};
use crate::traversal::{compose, filter, in_, out, repeat, repeat_exclusive, Traversal, VertexSet};

/// One satisfying assignment of the reentrancy condition: `v` re-enters the
/// contract of `v0`, and block `b` runs after `v` returns and writes state
/// that steered execution inside `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub v0: VertexId,
    pub v: VertexId,
    pub b: VertexId,
}

/// Pairs `(v0, v)` where `v` is a strict descendant invocation of `v0` on the
/// same address.
pub fn reentrant_pairs(a: &Analysis) -> Result<Vec<(VertexId, VertexId)>, DetectError> {
    let g = &a.epg.graph;
    let mut out_pairs = Vec::new();
    for v0 in a.frame_vertices() {
        let addr = g.vertex(v0).prop("addr").cloned();
        let same = filter(move |v| v.prop("addr") == addr.as_ref());
        let t = same.after(repeat_exclusive(out(Label::sigma_t())));
        for v in t.eval_one(g, v0)? {
            out_pairs.push((v0, v));
        }
    }
    Ok(out_pairs)
}

fn subtree<'a>() -> Traversal<'a> {
    repeat(out(sigma_c_ct()))
}

/// Blocks writing any version, at or after the one read, of a data source
/// that controls a block in `v`'s call subtree.
pub fn control_block(a: &Analysis, v: VertexId) -> Result<VertexSet, DetectError> {
    let t = compose([in_([Label::Write]), repeat(out([Label::Transition])), in_([Label::Control]), subtree()]);
    Ok(t.eval_one(&a.epg.graph, v)?)
}

/// Blocks inside `v0`'s subtree that run after each call on the path from
/// `v` up to (but excluding) `v0` has returned.
pub fn succ_block(a: &Analysis, v0: VertexId, v: VertexId) -> Result<VertexSet, DetectError> {
    let g = &a.epg.graph;
    let up = repeat(in_(Label::sigma_t()));
    let above_v = up.eval_one(g, v)?;
    if !above_v.contains(&v0) {
        return Err(DetectError::NotDescendant { ancestor: v0, descendant: v });
    }
    let above_v0 = up.eval_one(g, v0)?;
    let path: VertexSet = above_v.difference(&above_v0).copied().collect();
    let succ1 = compose([
        filter(|x| x.kind == VertexKind::BasicBlock),
        subtree(),
        out([Label::Jump, Label::Jumpi]),
        in_(Label::sigma_ct()),
    ]);
    Ok(succ1.eval(g, &path)?)
}

fn has_asset_flow(a: &Analysis, sub: &VertexSet) -> bool {
    let g = &a.epg.graph;
    sub.iter().any(|b| {
        Label::sigma_ct().into_iter().any(|l| {
            g.out_edges(*b, l).any(|e| matches!(e.prop("assetFlow"), Some(PropValue::Flows(f)) if !f.is_empty()))
        })
    })
}

/// Versions of writable sources read inside `sub`, either by a branch
/// condition or as an input to a write.
fn read_versions(a: &Analysis, sub: &VertexSet) -> Result<VertexSet, DetectError> {
    let g = &a.epg.graph;
    let mut read = in_([Label::Control]).eval(g, sub)?;
    read.extend(in_([Label::Dependency]).after(out([Label::Write])).eval(g, sub)?);
    read.retain(|s| a.epg.source(*s).is_some_and(|r| r.id.is_writable()));
    Ok(read)
}

/// Blocks that may close a triple for re-entered frame `v`, before the
/// ordering constraint is applied.
fn writers_for(a: &Analysis, v: VertexId, status_change: bool) -> Result<VertexSet, DetectError> {
    let g = &a.epg.graph;
    let sub = subtree().eval_one(g, v)?;
    if status_change {
        let read = read_versions(a, &sub)?;
        let later = repeat(out([Label::Transition])).after(out([Label::Transition])).eval(g, &read)?;
        Ok(in_([Label::Write]).eval(g, &later)?)
    } else if has_asset_flow(a, &sub) {
        control_block(a, v)
    } else {
        Ok(VertexSet::new())
    }
}

/// All triples satisfying the generic condition (`status_change == false`)
/// or the status-change variant.
pub fn reentrancy_triples(a: &Analysis, status_change: bool) -> Result<BTreeSet<Triple>, DetectError> {
    let mut triples = BTreeSet::new();
    let mut cache: HashMap<VertexId, VertexSet> = HashMap::new();
    for (v0, v) in reentrant_pairs(a)? {
        if !cache.contains_key(&v) {
            cache.insert(v, writers_for(a, v, status_change)?);
        }
        let writers = &cache[&v];
        if writers.is_empty() {
            continue;
        }
        for b in succ_block(a, v0, v)?.intersection(writers) {
            triples.insert(Triple { v0, v, b: *b });
        }
    }
    Ok(triples)
}

/// Evaluates the condition for one fixed triple.
pub(crate) fn triple_holds(a: &Analysis, t: Triple, status_change: bool) -> Result<bool, DetectError> {
    let g = &a.epg.graph;
    let (Some(x), Some(y)) = (g.vertex(t.v0).prop("addr"), g.vertex(t.v).prop("addr")) else {
        return Ok(false);
    };
    if x != y || !repeat_exclusive(out(Label::sigma_t())).eval_one(g, t.v0)?.contains(&t.v) {
        return Ok(false);
    }
    Ok(writers_for(a, t.v, status_change)?.contains(&t.b) && succ_block(a, t.v0, t.v)?.contains(&t.b))
}

fn findings_from(a: &Analysis, triples: &BTreeSet<Triple>, rule: Rule, applied: Vec<Refinement>) -> Vec<Finding> {
    let raw = triples
        .iter()
        .map(|t| {
            let victim = a.owner(t.b);
            let pc = a.block_pc(t.b);
            Finding {
                rule,
                witnesses: vec![Witness::vertex("v0", t.v0), Witness::vertex("v", t.v), Witness::vertex("b", t.b)],
                refinements_applied: applied.clone(),
                victim,
                pc,
                note: format!(
                    "{victim} is re-entered; the block at pc {pc} runs after the nested call returns and writes state observed inside it"
                ),
            }
        })
        .collect();
    let v0_matches = |f: &Finding| a.epg.contract_address(f.witness("v0").unwrap_or(0)) == Some(f.victim);
    dedup(raw, |new, old| match (v0_matches(new), v0_matches(old)) {
        (true, false) => true,
        (false, true) => false,
        _ => super::lower_ids(new, old),
    })
}

pub fn detect_reentrancy(a: &Analysis, _cfg: &DetectorConfig) -> Result<Vec<Finding>, DetectError> {
    let triples = reentrancy_triples(a, false)?;
    Ok(findings_from(a, &triples, Rule::Reentrancy, Vec::new()))
}

/// Reentrancy through unexpected state changes, without requiring an asset
/// transfer inside the re-entered call.
pub fn detect_reentrancy_r1(a: &Analysis, _cfg: &DetectorConfig) -> Result<Vec<Finding>, DetectError> {
    let triples = reentrancy_triples(a, true)?;
    Ok(findings_from(a, &triples, Rule::ReentrancyR1, vec![Refinement::R1]))
}

/// Exhaustive search over frames, blocks and tracker records that does not
/// use the traversal engine. Used as an oracle for [`reentrancy_triples`]
/// with `status_change == false`.
pub fn brute_force_reentrancy(a: &Analysis) -> BTreeSet<Triple> {
    let tree = a.tree;
    let flows = a.flows;
    let discarded: BTreeSet<&SourceRef> = flows.writes.iter().filter(|w| w.discarded).map(|w| &w.target).collect();

    let mut block_writes: BTreeMap<VertexId, Vec<(&Identifier, u32)>> = BTreeMap::new();
    for w in flows.writes.iter().filter(|w| !w.discarded) {
        if let Some(b) = w.step.and_then(|s| a.epg.block_of_step(s)) {
            block_writes.entry(b).or_default().push((&w.target.id, w.target.version));
        }
    }
    // (frame of the controlled block, writable source read by the condition)
    let mut reads: Vec<(usize, &Identifier, u32)> = Vec::new();
    for c in &flows.controls {
        let frame = tree.frame_of_step(c.taken_step);
        for s in c.condition_tag.iter() {
            if s.id.is_writable() && !discarded.contains(s) {
                reads.push((frame, &s.id, s.version));
            }
        }
    }

    let mut out = BTreeSet::new();
    for f0 in tree.frames() {
        for f in tree.frames() {
            if f.id == f0.id || !tree.is_within(f.id, f0.id) || f.callee != f0.callee {
                continue;
            }
            let funded = flows.flows.iter().any(|r| !r.discarded && r.frame != f.id && tree.is_within(r.frame, f.id));
            if !funded {
                continue;
            }
            let inner_reads: Vec<(&Identifier, u32)> =
                reads.iter().filter(|(h, _, _)| tree.is_within(*h, f.id)).map(|(_, id, ver)| (*id, *ver)).collect();
            for (b, info) in a.epg.blocks() {
                let later = info.first_step >= f.steps.end && f.call_step.is_none_or(|s| info.first_step > s);
                if !later || !tree.is_within(info.frame, f0.id) || tree.is_within(info.frame, f.id) {
                    continue;
                }
                let Some(writes) = block_writes.get(&b) else { continue };
                let hit = writes.iter().any(|(id, k)| inner_reads.iter().any(|(rid, j)| rid == id && k >= j));
                if hit {
                    out.insert(Triple { v0: a.epg.frame_vertex(f0.id), v: a.epg.frame_vertex(f.id), b });
                }
            }
        }
    }
    out
}
