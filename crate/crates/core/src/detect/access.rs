use std::collections::{BTreeMap, BTreeSet};

use super::{dedup, lower_ids, sigma_c_ct, Analysis, DetectError, DetectorConfig, Finding, Refinement, Rule, Witness};
use crate::flow::{DataTag, Identifier};
use crate::graph::{Label, PropValue, VertexId, VertexKind};
use crate::traversal::{compose, filter, in_, repeat, Traversal, VertexSet};

/// Data sources that steer any block executed at or before `b`, closed
/// under data dependence.
pub fn control_source(a: &Analysis, b: VertexId) -> Result<VertexSet, DetectError> {
    control_source_of(a, &VertexSet::from([b]), &BTreeSet::new())
}

/// Same as [`control_source`] for a set of blocks, ignoring conditions
/// evaluated inside `skip` blocks.
pub(crate) fn control_source_of(
    a: &Analysis,
    start: &VertexSet,
    skip: &BTreeSet<VertexId>,
) -> Result<VertexSet, DetectError> {
    let t: Traversal = compose([
        repeat(in_([Label::Dependency])),
        in_([Label::Control]),
        filter(move |v| !skip.contains(&v.id)),
        repeat(in_(sigma_c_ct())),
    ]);
    Ok(t.eval(&a.epg.graph, start)?)
}

/// Blocks whose outgoing transformed invocation edge moves an asset.
pub fn transfer_blocks(a: &Analysis) -> Result<VertexSet, DetectError> {
    let g = &a.epg.graph;
    let has_transfer = filter(move |v| {
        v.kind == VertexKind::BasicBlock
            && Label::sigma_ct().into_iter().any(|l| {
                g.out_edges(v.id, l).any(|e| matches!(e.prop("assetFlow"), Some(PropValue::Flows(f)) if !f.is_empty()))
            })
    });
    let contracts: VertexSet = g.vertices().iter().filter(|v| v.kind == VertexKind::Contract).map(|v| v.id).collect();
    Ok(has_transfer.after(in_(Label::sigma_ct())).eval(g, &contracts)?)
}

/// Blocks executed by code of an attacker-owned contract.
pub(crate) fn attacker_blocks(a: &Analysis, cfg: &DetectorConfig) -> BTreeSet<VertexId> {
    let attackers = a.attacker_addresses(cfg);
    a.epg
        .blocks()
        .filter(|(_, info)| {
            let f = a.tree.frame(info.frame);
            attackers.contains(&f.callee) || attackers.contains(&f.storage_address)
        })
        .map(|(v, _)| v)
        .collect()
}

fn tag_vertices(a: &Analysis, tag: &DataTag) -> VertexSet {
    tag.iter().filter_map(|s| a.epg.source_vertex(s)).collect()
}

fn dependency_closure(a: &Analysis, start: &VertexSet) -> Result<VertexSet, DetectError> {
    Ok(repeat(in_([Label::Dependency])).eval(&a.epg.graph, start)?)
}

/// Whether a flow's recipient can be chosen through call data supplied to
/// some frame other than the one that records the flow.
fn destination_from_calldata(a: &Analysis, flow: usize) -> Result<bool, DetectError> {
    let rec = &a.flows.flows[flow];
    let closure = dependency_closure(a, &tag_vertices(a, &rec.destination_tag))?;
    Ok(closure.iter().any(|s| matches!(a.epg.source(*s).map(|r| &r.id), Some(Identifier::CallData(f)) if *f != rec.frame)))
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

/// Groups flows whose amounts share a data source and reports, per flow,
/// whether its group contains at least one flow under origin control.
fn controlled_groups(
    a: &Analysis,
    origin: &VertexSet,
    skip: &BTreeSet<VertexId>,
) -> Result<BTreeMap<usize, bool>, DetectError> {
    let kept: Vec<usize> = (0..a.flows.flows.len()).filter(|i| !a.flows.flows[*i].discarded).collect();
    let mut closures = Vec::with_capacity(kept.len());
    let mut controlled = Vec::with_capacity(kept.len());
    for &i in &kept {
        let rec = &a.flows.flows[i];
        closures.push(dependency_closure(a, &tag_vertices(a, &rec.amount_tag))?);
        let tail = a.epg.graph.edge(a.epg.ct_edge(rec.frame)).tail;
        let by_origin = if a.epg.block(tail).is_some() {
            !control_source_of(a, &VertexSet::from([tail]), skip)?.is_disjoint(origin)
        } else {
            false
        };
        controlled.push(by_origin || rec.flow.from == a.trace.envelope.from);
    }
    let mut parent: Vec<usize> = (0..kept.len()).collect();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            if !closures[i].is_disjoint(&closures[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut group_ok: BTreeMap<usize, bool> = BTreeMap::new();
    for i in 0..kept.len() {
        let r = find(&mut parent, i);
        *group_ok.entry(r).or_default() |= controlled[i];
    }
    Ok(kept.iter().enumerate().map(|(k, &i)| (i, group_ok[&find(&mut parent, k)])).collect())
}

/// Generic condition for one block, with A1's exclusion when enabled.
pub(crate) fn fac_holds(a: &Analysis, cfg: &DetectorConfig, b: VertexId) -> Result<bool, DetectError> {
    let skip = if cfg.enabled(Refinement::A1) { attacker_blocks(a, cfg) } else { BTreeSet::new() };
    if skip.contains(&b) || !transfer_blocks(a)?.contains(&b) {
        return Ok(false);
    }
    Ok(control_source_of(a, &VertexSet::from([b]), &skip)?.is_disjoint(&a.origin_vertices(cfg)))
}

/// Transfers whose guarding conditions never involve the transaction origin.
pub fn detect_faulty_access_control(a: &Analysis, cfg: &DetectorConfig) -> Result<Vec<Finding>, DetectError> {
    let origin = a.origin_vertices(cfg);
    let a1 = cfg.enabled(Refinement::A1);
    let a2 = cfg.enabled(Refinement::A2);
    let a3 = cfg.enabled(Refinement::A3);
    let skip = if a1 { attacker_blocks(a, cfg) } else { BTreeSet::new() };
    let by_block = a.flows_by_block();
    let groups = if a3 { Some(controlled_groups(a, &origin, &skip)?) } else { None };
    let applied: Vec<Refinement> = [(a1, Refinement::A1), (a2, Refinement::A2), (a3, Refinement::A3)]
        .into_iter()
        .filter_map(|(on, r)| on.then_some(r))
        .collect();

    let mut raw = Vec::new();
    for b in transfer_blocks(a)? {
        if skip.contains(&b) {
            continue;
        }
        let cs = control_source_of(a, &VertexSet::from([b]), &skip)?;
        if !cs.is_disjoint(&origin) {
            continue;
        }
        let mut flows: Vec<usize> = by_block.get(&b).cloned().unwrap_or_default();
        if a2 {
            let mut kept = Vec::new();
            for f in flows {
                if destination_from_calldata(a, f)? {
                    kept.push(f);
                }
            }
            flows = kept;
        }
        if let Some(groups) = &groups {
            flows.retain(|f| !groups.get(f).copied().unwrap_or(false));
        }
        let Some(&first) = flows.first() else { continue };
        let rec = &a.flows.flows[first];
        let victim = a.owner(b);
        let pc = a.block_pc(b);
        raw.push(Finding {
            rule: Rule::FaultyAccessControl,
            witnesses: vec![Witness::vertex("b", b), Witness::edge("transfer", a.epg.ct_edge(rec.frame))],
            refinements_applied: applied.clone(),
            victim,
            pc,
            note: format!(
                "{} {} moved from {} to {} by the block at pc {pc} without any check on the transaction origin",
                rec.flow.amount, rec.flow.asset, rec.flow.from, rec.flow.to
            ),
        });
    }
    Ok(dedup(raw, lower_ids))
}
