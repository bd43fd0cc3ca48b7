//! Set-to-set traversals over a property graph.
//!
//! A [`Traversal`] maps a set of vertices to another set. Traversals compose
//! right to left, so `compose([a, b])` applies `b` first.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::graph::{Label, PropertyGraph, UnknownLabel, Vertex, VertexId};

pub type VertexSet = BTreeSet<VertexId>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("predicate failed on vertex {vertex}: {message}")]
pub struct PredicateError {
    pub vertex: VertexId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraversalError {
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(VertexId),
}

type PredFn<'a> = dyn Fn(&Vertex) -> Result<bool, PredicateError> + Send + Sync + 'a;

/// A composable vertex-set transformer.
#[derive(Clone)]
pub enum Traversal<'a> {
    Identity,
    Filter(Arc<PredFn<'a>>),
    Out(Vec<Label>),
    In(Vec<Label>),
    Repeat(Box<Traversal<'a>>),
    RepeatExclusive(Box<Traversal<'a>>),
    /// Applied last to first.
    Compose(Vec<Traversal<'a>>),
}

impl fmt::Debug for Traversal<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn labels(ls: &[Label]) -> String {
            ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        }
        match self {
            Traversal::Identity => f.write_str("id"),
            Traversal::Filter(_) => f.write_str("filter"),
            Traversal::Out(ls) => write!(f, "out[{}]", labels(ls)),
            Traversal::In(ls) => write!(f, "in[{}]", labels(ls)),
            Traversal::Repeat(t) => write!(f, "TR[{t:?}]"),
            Traversal::RepeatExclusive(t) => write!(f, "TRex[{t:?}]"),
            Traversal::Compose(ts) => {
                let parts: Vec<String> = ts.iter().map(|t| format!("{t:?}")).collect();
                f.write_str(&parts.join(" . "))
            }
        }
    }
}

/// Keeps the vertices satisfying `pred`.
pub fn filter<'a>(pred: impl Fn(&Vertex) -> bool + Send + Sync + 'a) -> Traversal<'a> {
    Traversal::Filter(Arc::new(move |v| Ok(pred(v))))
}

/// Like [`filter`], for predicates that can fail.
pub fn try_filter<'a>(pred: impl Fn(&Vertex) -> Result<bool, PredicateError> + Send + Sync + 'a) -> Traversal<'a> {
    Traversal::Filter(Arc::new(pred))
}

pub fn out<'a>(labels: impl IntoIterator<Item = Label>) -> Traversal<'a> {
    Traversal::Out(labels.into_iter().collect())
}

pub fn in_<'a>(labels: impl IntoIterator<Item = Label>) -> Traversal<'a> {
    Traversal::In(labels.into_iter().collect())
}

pub fn repeat(t: Traversal<'_>) -> Traversal<'_> {
    Traversal::Repeat(Box::new(t))
}

pub fn repeat_exclusive(t: Traversal<'_>) -> Traversal<'_> {
    Traversal::RepeatExclusive(Box::new(t))
}

/// All descendant invocations, including the start set.
pub fn tcon<'a>() -> Traversal<'a> {
    repeat(out(Label::sigma_t()))
}

pub fn compose<'a>(ts: impl IntoIterator<Item = Traversal<'a>>) -> Traversal<'a> {
    Traversal::Compose(ts.into_iter().collect())
}

/// Resolves label names. Besides single labels, `T`, `CT`, `C` and `D`
/// stand for the invocation, transformed-invocation, control-flow and
/// dependence families.
pub fn parse_labels(names: &[&str]) -> Result<Vec<Label>, UnknownLabel> {
    let mut out = Vec::new();
    for n in names {
        match *n {
            "T" => out.extend(Label::sigma_t()),
            "CT" => out.extend(Label::sigma_ct()),
            "C" => out.extend(Label::SIGMA_C),
            "D" => out.extend(Label::SIGMA_D),
            other => out.push(other.parse()?),
        }
    }
    Ok(out)
}

pub fn out_named<'a>(names: &[&str]) -> Result<Traversal<'a>, UnknownLabel> {
    parse_labels(names).map(Traversal::Out)
}

pub fn in_named<'a>(names: &[&str]) -> Result<Traversal<'a>, UnknownLabel> {
    parse_labels(names).map(Traversal::In)
}

impl<'a> Traversal<'a> {
    /// `self ∘ inner`: runs `inner` first.
    pub fn after(self, inner: Traversal<'a>) -> Traversal<'a> {
        compose([self, inner])
    }

    pub fn eval(&self, graph: &PropertyGraph, input: &VertexSet) -> Result<VertexSet, TraversalError> {
        if let Some(v) = input.iter().find(|v| !graph.contains_vertex(**v)) {
            return Err(TraversalError::UnknownVertex(*v));
        }
        self.run(graph, input)
    }

    /// Convenience for a single start vertex.
    pub fn eval_one(&self, graph: &PropertyGraph, v: VertexId) -> Result<VertexSet, TraversalError> {
        self.eval(graph, &VertexSet::from([v]))
    }

    fn run(&self, graph: &PropertyGraph, input: &VertexSet) -> Result<VertexSet, TraversalError> {
        match self {
            Traversal::Identity => Ok(input.clone()),
            Traversal::Filter(pred) => {
                let mut out = VertexSet::new();
                for v in input {
                    if pred(graph.vertex(*v))? {
                        out.insert(*v);
                    }
                }
                Ok(out)
            }
            Traversal::Out(labels) => Ok(input
                .iter()
                .flat_map(|v| labels.iter().flat_map(move |l| graph.out_edges(*v, *l).map(|e| e.head)))
                .collect()),
            Traversal::In(labels) => Ok(input
                .iter()
                .flat_map(|v| labels.iter().flat_map(move |l| graph.in_edges(*v, *l).map(|e| e.tail)))
                .collect()),
            Traversal::Repeat(t) => {
                let mut acc = input.clone();
                let mut frontier = input.clone();
                while !frontier.is_empty() {
                    let next = t.run(graph, &frontier)?;
                    frontier = next.into_iter().filter(|v| !acc.contains(v)).collect();
                    acc.extend(frontier.iter().copied());
                }
                Ok(acc)
            }
            Traversal::RepeatExclusive(t) => {
                let all = Traversal::Repeat(t.clone()).run(graph, input)?;
                Ok(all.difference(input).copied().collect())
            }
            Traversal::Compose(ts) => {
                let mut cur = input.clone();
                for t in ts.iter().rev() {
                    if cur.is_empty() && !matches!(t, Traversal::Identity) {
                        break;
                    }
                    cur = t.run(graph, &cur)?;
                }
                Ok(cur)
            }
        }
    }
}
