use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use rayon::prelude::*;

use super::score::ScoreContext;
use crate::dynamics::no_action_forecast;
use crate::error::Result;
use crate::model::{candidate_edges, Edge, EdgeAdditionSet, ModelParams, NetworkState, NodeId};

/// Which single-edge gain drives [`heuristic_select`].
#[derive(Clone, Copy, Debug)]
pub enum Scorer<'a> {
    Myopic,
    Lookahead,
    /// Linearized gain from a gradient matrix indexed `[sink, source]`.
    Linearized(&'a Array2<f64>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    pub edges: EdgeAdditionSet,
    /// Selected edges with their scores, in selection order.
    pub scored: Vec<(Edge, f64)>,
    pub candidates: usize,
    pub setup_ops: usize,
    pub evaluations: usize,
}

#[derive(Debug, PartialEq)]
struct Ranked {
    score: f64,
    edge: Edge,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // max-heap order: higher score first, then lower (source, sink)
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps at most `cap` strictly positive entries, best first.
pub fn top_k(scored: Vec<(Edge, f64)>, cap: usize) -> Vec<(Edge, f64)> {
    let mut heap: BinaryHeap<Ranked> = scored
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(edge, score)| Ranked { score, edge })
        .collect();
    let mut out = Vec::with_capacity(cap.min(heap.len()));
    while out.len() < cap {
        match heap.pop() {
            Some(r) => out.push((r.edge, r.score)),
            None => break,
        }
    }
    out
}

struct NodePick {
    picks: Vec<(Edge, f64)>,
    candidates: usize,
    setup_ops: usize,
    evaluations: usize,
}

fn select_for_node(
    state: &NetworkState,
    v: NodeId,
    params: &ModelParams,
    scorer: Scorer<'_>,
    forecast: Option<&[f64]>,
) -> Result<NodePick> {
    let cands = candidate_edges(state, v)?;
    let cap = state.in_degree(v);
    if cands.is_empty() || cap == 0 {
        return Ok(NodePick {
            picks: Vec::new(),
            candidates: cands.len(),
            setup_ops: 0,
            evaluations: 0,
        });
    }
    let ctx = match scorer {
        Scorer::Myopic => ScoreContext::myopic(state, v, params)?,
        Scorer::Lookahead => {
            ScoreContext::lookahead(state, v, params, forecast.expect("forecast computed"))?
        }
        Scorer::Linearized(g) => ScoreContext::linearized(state, v, g)?,
    };
    let scored = cands
        .iter()
        .map(|&e| ctx.score(state, e).map(|s| (e, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NodePick {
        picks: top_k(scored, cap),
        candidates: cands.len(),
        setup_ops: ctx.setup_ops(),
        evaluations: ctx.evaluations(),
    })
}

/// Scores every candidate edge into every target and keeps, per target, up to
/// its in-degree of the highest strictly positive scores.
pub fn heuristic_select(
    state: &NetworkState,
    params: &ModelParams,
    scorer: Scorer<'_>,
) -> Result<Selection> {
    let forecast = match scorer {
        Scorer::Lookahead => Some(no_action_forecast(state, params)),
        _ => None,
    };
    let per_node: Vec<NodePick> = state
        .targets()
        .par_iter()
        .map(|&v| select_for_node(state, v, params, scorer, forecast.as_deref()))
        .collect::<Result<_>>()?;
    let mut sel = Selection::default();
    for pick in per_node {
        sel.candidates += pick.candidates;
        sel.setup_ops += pick.setup_ops;
        sel.evaluations += pick.evaluations;
        for (e, s) in pick.picks {
            sel.edges.insert(e);
            sel.scored.push((e, s));
        }
    }
    Ok(sel)
}
