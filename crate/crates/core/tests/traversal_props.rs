//! Traversal combinators checked against a naive reference evaluator on
//! small random labeled graphs.

mod common;

use common::algebra::*;
use epg_core::graph::Label;
use epg_core::traversal::{compose, filter, in_, out, repeat, repeat_exclusive, tcon, VertexSet};
use rand::rngs::StdRng;
use rand::SeedableRng;

const GRAPHS: usize = 10_000;

#[test]
fn reference_suite_on_ten_thousand_graphs() {
    check_random_graphs(0x5eed_0000, GRAPHS).unwrap_or_else(|e| panic!("{e}"));
}

#[test]
fn combinators_match_reference_on_random_graphs() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    for round in 0..GRAPHS {
        let s = random_graph(&mut rng);
        let n = s.kinds.len();
        let e = random_expr(&mut rng, 3);
        let t = to_traversal(&e);
        let input = random_subset(&mut rng, n);
        let got = t.eval(&s.graph, &input).unwrap();
        assert_eq!(got, reference(&s, &e, &input), "round {round}: {e:?} on {:?} from {input:?}", s.edges);
        // evaluating again on the same graph gives the same set
        assert_eq!(t.eval(&s.graph, &input).unwrap(), got);
    }
}

#[test]
fn repeat_is_superset_monotone_and_idempotent() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    for _ in 0..GRAPHS {
        let s = random_graph(&mut rng);
        let step = random_expr(&mut rng, 2);
        let r = repeat(to_traversal(&step));
        let input = random_subset(&mut rng, s.kinds.len());
        let once = r.eval(&s.graph, &input).unwrap();
        assert!(input.is_subset(&once));
        assert_eq!(r.eval(&s.graph, &once).unwrap(), once, "{step:?}");

        // growing the input can only grow the result when the step is monotone
        if monotone(&step) {
            let bigger: VertexSet = input.union(&random_subset(&mut rng, s.kinds.len())).copied().collect();
            assert!(once.is_subset(&r.eval(&s.graph, &bigger).unwrap()));
        }
    }
}

#[test]
fn repeat_exclusive_is_disjoint_from_its_input() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    for _ in 0..GRAPHS {
        let s = random_graph(&mut rng);
        let step = to_traversal(&random_expr(&mut rng, 2));
        let input = random_subset(&mut rng, s.kinds.len());
        let ex = repeat_exclusive(step.clone()).eval(&s.graph, &input).unwrap();
        let full = repeat(step).eval(&s.graph, &input).unwrap();
        assert!(ex.is_disjoint(&input));
        assert_eq!(ex, full.difference(&input).copied().collect());
    }
}

#[test]
fn out_and_in_are_dual() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    for _ in 0..GRAPHS {
        let s = random_graph(&mut rng);
        let ls = random_labels(&mut rng);
        let n = s.kinds.len();
        for u in 0..n {
            let fwd = out(ls.clone()).eval_one(&s.graph, u).unwrap();
            for v in 0..n {
                let back = in_(ls.clone()).eval_one(&s.graph, v).unwrap();
                assert_eq!(fwd.contains(&v), back.contains(&u));
            }
        }
    }
}

#[test]
fn small_algebraic_identities() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for _ in 0..1_000 {
        let s = random_graph(&mut rng);
        let e = random_expr(&mut rng, 2);
        let input = random_subset(&mut rng, s.kinds.len());
        let plain = to_traversal(&e).eval(&s.graph, &input).unwrap();
        let with_true = compose([filter(|_| true), to_traversal(&e)]).eval(&s.graph, &input).unwrap();
        assert_eq!(plain, with_true);
        assert!(to_traversal(&e).eval(&s.graph, &VertexSet::new()).unwrap().is_empty());
    }
}

#[test]
fn tcon_is_repeat_over_invocations() {
    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    for _ in 0..1_000 {
        let s = random_graph(&mut rng);
        let input = random_subset(&mut rng, s.kinds.len());
        let a = tcon().eval(&s.graph, &input).unwrap();
        let b = repeat(out(Label::sigma_t())).eval(&s.graph, &input).unwrap();
        assert_eq!(a, b);
    }
}
