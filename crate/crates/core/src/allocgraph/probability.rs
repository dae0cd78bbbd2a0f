//! Edge and graph probabilities: the trace-based estimates and an exact
//! enumeration of the generation tree for small instances.

use super::context::AllocContext;
use super::generate::{validate_distribution, AllocationPolicy, GenerationTrace, Generator, Query};
use super::graph::AllocationGraph;
use super::power::PowerUpdateConfig;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};

/// Σ_j f_node(b | G_j) · Π_{i ≤ j} f_add(G_i) over the steps recorded on channel m.
pub fn edge_probability(trace: &GenerationTrace, m: usize, b: usize) -> f64 {
    let Some(ch) = trace.channels.get(m) else { return 0.0 };
    let mut reach = 1.0;
    let mut total = 0.0;
    for step in &ch.steps {
        reach *= step.add_prob;
        if let Some(dist) = &step.node_dist {
            total += dist.get(b).copied().unwrap_or(0.0) * reach;
        }
    }
    total
}

/// Π over edges of the edge probabilities. Treats edges as independent, so
/// it is an approximation of the true probability of generating `graph`.
pub fn graph_probability(trace: &GenerationTrace, graph: &AllocationGraph) -> f64 {
    graph.edges.iter().map(|&(m, b)| edge_probability(trace, m, b)).product()
}

pub type EdgeSet = BTreeSet<(usize, usize)>;

/// One leaf of the generation tree.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// Edges chosen by the generator, before zero-power pruning.
    pub chosen: EdgeSet,
    pub prob: f64,
    pub graph: AllocationGraph,
}

/// Walk every branch of the generation tree with nonzero probability.
pub fn enumerate_outcomes(ctx: &AllocContext, policy: &dyn AllocationPolicy, cfg: &PowerUpdateConfig, max_leaves: usize) -> Result<Vec<Outcome>> {
    let mut leaves = Vec::new();
    let mut stack = vec![(Generator::new(ctx, *cfg), 1.0f64, EdgeSet::new())];
    while let Some((mut gen, prob, chosen)) = stack.pop() {
        match gen.query() {
            None => {
                if leaves.len() >= max_leaves {
                    return Err(Error::domain(format!("generation tree has more than {max_leaves} leaves")));
                }
                leaves.push(Outcome { chosen, prob, graph: gen.graph });
            }
            Some(Query::AddEdge { forced: true, .. }) => {
                gen.answer_add(true, 1.0, true);
                stack.push((gen, prob, chosen));
            }
            Some(Query::AddEdge { forced: false, .. }) => {
                let p = policy.add_edge_probability(&gen.input())?;
                if p < 1.0 {
                    let mut no = gen.clone();
                    no.answer_add(false, p, false);
                    stack.push((no, prob * (1.0 - p), chosen.clone()));
                }
                if p > 0.0 {
                    gen.answer_add(true, p, false);
                    stack.push((gen, prob * p, chosen));
                }
            }
            Some(Query::ChooseNode { m }) => {
                let input = gen.input();
                let dist = policy.node_distribution(&input)?;
                validate_distribution(&dist, &input.admissible)?;
                for (b, &pb) in dist.iter().enumerate() {
                    if pb > 0.0 {
                        let mut next = gen.clone();
                        next.answer_node(b, dist.clone())?;
                        let mut c = chosen.clone();
                        c.insert((m, b));
                        stack.push((next, prob * pb, c));
                    }
                }
            }
        }
    }
    Ok(leaves)
}

/// Exact Pr((m, b) chosen) from an enumeration.
pub fn exact_edge_marginals(outcomes: &[Outcome]) -> BTreeMap<(usize, usize), f64> {
    let mut out = BTreeMap::new();
    for o in outcomes {
        for &e in &o.chosen {
            *out.entry(e).or_insert(0.0) += o.prob;
        }
    }
    out
}

/// Exact distribution over chosen edge sets.
pub fn exact_graph_distribution(outcomes: &[Outcome]) -> BTreeMap<EdgeSet, f64> {
    let mut out = BTreeMap::new();
    for o in outcomes {
        *out.entry(o.chosen.clone()).or_insert(0.0) += o.prob;
    }
    out
}

/// Slots a beam's terminal would still wait after this slot if the
/// current rate persisted: τ + ⌈Q / (R·ΔT)⌉, capped at `horizon`.
pub fn latency_proxy(graph: &AllocationGraph, ctx: &AllocContext, horizon: f64) -> f64 {
    let active: Vec<usize> = (0..ctx.num_beams).filter(|&b| ctx.beams[b].is_active()).collect();
    if active.is_empty() {
        return 0.0;
    }
    let total: f64 = active
        .iter()
        .map(|&b| {
            let s = &ctx.beams[b];
            let r = graph.beam_rate(ctx, b) * ctx.slot_s;
            let drain = if r > 0.0 { (s.q_bits / r).ceil() } else { horizon };
            (s.tau + drain).min(horizon)
        })
        .sum();
    total / active.len() as f64
}
