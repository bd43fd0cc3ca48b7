//! Random small labeled graphs and a naive traversal evaluator that works
//! straight from the set definitions.

use std::collections::BTreeSet;

use epg_core::graph::{Label, Properties, PropertyGraph, VertexKind};
use epg_core::trace::CallKind;
use epg_core::traversal::{compose, filter, in_, out, repeat, repeat_exclusive, Traversal, VertexSet};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const LABELS: [Label; 4] = [Label::Invoke(CallKind::Call), Label::Jump, Label::Dependency, Label::Control];
pub const KINDS: [VertexKind; 3] = [VertexKind::Contract, VertexKind::BasicBlock, VertexKind::DataSource];

pub struct Sample {
    pub graph: PropertyGraph,
    pub kinds: Vec<VertexKind>,
    pub edges: Vec<(usize, Label, usize)>,
}

pub fn random_graph(rng: &mut StdRng) -> Sample {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=10);
    let mut graph = PropertyGraph::new();
    let kinds: Vec<VertexKind> = (0..n).map(|_| KINDS[rng.gen_range(0..KINDS.len())]).collect();
    for k in &kinds {
        graph.add_vertex(*k, Properties::new());
    }
    let mut edges = Vec::new();
    for _ in 0..m {
        let e = (rng.gen_range(0..n), LABELS[rng.gen_range(0..LABELS.len())], rng.gen_range(0..n));
        graph.add_edge(e.0, e.2, e.1, Properties::new()).unwrap();
        edges.push(e);
    }
    Sample { graph, kinds, edges }
}

/// A traversal expression mirrored as plain data for the reference evaluator.
#[derive(Debug, Clone)]
pub enum Expr {
    Id,
    KindIs(VertexKind),
    Out(Vec<Label>),
    In(Vec<Label>),
    Repeat(Box<Expr>),
    RepeatEx(Box<Expr>),
    Compose(Vec<Expr>),
}

pub fn random_labels(rng: &mut StdRng) -> Vec<Label> {
    let picked: Vec<Label> = LABELS.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    if picked.is_empty() {
        vec![LABELS[rng.gen_range(0..LABELS.len())]]
    } else {
        picked
    }
}

pub fn random_expr(rng: &mut StdRng, depth: u32) -> Expr {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return match rng.gen_range(0..4) {
            0 => Expr::Id,
            1 => Expr::KindIs(KINDS[rng.gen_range(0..KINDS.len())]),
            2 => Expr::Out(random_labels(rng)),
            _ => Expr::In(random_labels(rng)),
        };
    }
    match rng.gen_range(0..3) {
        0 => Expr::Repeat(Box::new(random_expr(rng, depth - 1))),
        1 => Expr::RepeatEx(Box::new(random_expr(rng, depth - 1))),
        _ => Expr::Compose((0..rng.gen_range(0..=3)).map(|_| random_expr(rng, depth - 1)).collect()),
    }
}

pub fn to_traversal(e: &Expr) -> Traversal<'static> {
    match e {
        Expr::Id => Traversal::Identity,
        Expr::KindIs(k) => {
            let k = *k;
            filter(move |v| v.kind == k)
        }
        Expr::Out(ls) => out(ls.clone()),
        Expr::In(ls) => in_(ls.clone()),
        Expr::Repeat(t) => repeat(to_traversal(t)),
        Expr::RepeatEx(t) => repeat_exclusive(to_traversal(t)),
        Expr::Compose(ts) => compose(ts.iter().map(to_traversal)),
    }
}

/// Straight from the set definitions, with no indexes and no worklist.
pub fn reference(s: &Sample, e: &Expr, input: &BTreeSet<usize>) -> BTreeSet<usize> {
    match e {
        Expr::Id => input.clone(),
        Expr::KindIs(k) => input.iter().copied().filter(|v| s.kinds[*v] == *k).collect(),
        Expr::Out(ls) => {
            s.edges.iter().filter(|(t, l, _)| input.contains(t) && ls.contains(l)).map(|(_, _, h)| *h).collect()
        }
        Expr::In(ls) => {
            s.edges.iter().filter(|(_, l, h)| input.contains(h) && ls.contains(l)).map(|(t, _, _)| *t).collect()
        }
        Expr::Repeat(t) => {
            let mut acc = input.clone();
            loop {
                let step: BTreeSet<usize> = acc.union(&reference(s, t, &acc)).copied().collect();
                if step == acc {
                    return acc;
                }
                acc = step;
            }
        }
        Expr::RepeatEx(t) => reference(s, &Expr::Repeat(t.clone()), input).difference(input).copied().collect(),
        Expr::Compose(ts) => ts.iter().rev().fold(input.clone(), |cur, t| reference(s, t, &cur)),
    }
}

pub fn monotone(e: &Expr) -> bool {
    match e {
        Expr::RepeatEx(_) => false,
        Expr::Repeat(t) => monotone(t),
        Expr::Compose(ts) => ts.iter().all(monotone),
        _ => true,
    }
}

pub fn random_subset(rng: &mut StdRng, n: usize) -> VertexSet {
    (0..n).filter(|_| rng.gen_bool(0.4)).collect()
}

/// Checks every combinator against the reference on `count` random graphs,
/// along with the fixpoint laws of `repeat` and `repeat_exclusive`.
pub fn check_random_graphs(seed: u64, count: usize) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for round in 0..count {
        let s = random_graph(&mut rng);
        let n = s.kinds.len();
        let e = random_expr(&mut rng, 3);
        let input = random_subset(&mut rng, n);
        let got = to_traversal(&e).eval(&s.graph, &input).map_err(|err| err.to_string())?;
        let want = reference(&s, &e, &input);
        if got != want {
            return Err(format!("round {round}: {e:?} from {input:?} on {:?}: {got:?} != {want:?}", s.edges));
        }

        let r = repeat(to_traversal(&e));
        let once = r.eval(&s.graph, &input).map_err(|err| err.to_string())?;
        let twice = r.eval(&s.graph, &once).map_err(|err| err.to_string())?;
        if !input.is_subset(&once) || twice != once {
            return Err(format!("round {round}: repeat of {e:?} is not an idempotent superset"));
        }
        let ex = repeat_exclusive(to_traversal(&e)).eval(&s.graph, &input).map_err(|err| err.to_string())?;
        if !ex.is_disjoint(&input) {
            return Err(format!("round {round}: repeat_exclusive of {e:?} overlaps its input"));
        }
    }
    Ok(())
}
