//! Reference allocators: every beam on every channel with an even split,
//! and one channel per beam carrying the whole beam budget.

use crate::allocgraph::context::AllocContext;
use crate::allocgraph::graph::AllocationGraph;
use crate::allocgraph::power::project_epfd;

/// Result of a baseline allocation.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub graph: AllocationGraph,
    /// EPFD projection lowered at least one edge.
    pub projected: bool,
}

fn finish(mut g: AllocationGraph, ctx: &AllocContext) -> BaselineOutcome {
    let before = g.power.clone();
    project_epfd(&mut g, ctx);
    let projected = g.power != before;
    g.prune();
    g.propagate_messages(ctx);
    BaselineOutcome { graph: g, projected }
}

/// All M channels on every active beam at P_b / M each, clipped to the
/// per-channel EIRP cap. Ignores the channel-aggregation limit.
pub fn full_reuse_allocation(ctx: &AllocContext) -> BaselineOutcome {
    let mut g = AllocationGraph::init(ctx);
    g.relaxed_n = ctx.max_channels < ctx.num_channels;
    let nm = ctx.num_channels;
    for m in 0..nm {
        for b in 0..ctx.num_beams {
            if ctx.beams[b].is_active() {
                g.add_edge(m, b);
                g.set_p(b, m, (ctx.beams[b].budget_w / nm as f64).min(ctx.eirp_cap_w));
            }
        }
    }
    finish(g, ctx)
}

/// Interference a beam's terminal would see on channel m: the previous-slot
/// inter-satellite estimate plus own beams already placed on m.
pub fn estimated_interference(g: &AllocationGraph, ctx: &AllocContext, m: usize, b: usize) -> f64 {
    ctx.o(m, b) + g.intra(ctx, m, b)
}

/// Beams in index order each take the channel with the least estimated
/// interference (ties to the lowest channel) and put their whole budget,
/// clipped to the EIRP cap, on it.
pub fn single_channel_allocation(ctx: &AllocContext) -> BaselineOutcome {
    let mut g = AllocationGraph::init(ctx);
    for b in 0..ctx.num_beams {
        if !ctx.beams[b].is_active() {
            continue;
        }
        let mut best = (0, f64::INFINITY);
        for m in 0..ctx.num_channels {
            let i = estimated_interference(&g, ctx, m, b);
            if i < best.1 {
                best = (m, i);
            }
        }
        g.add_edge(best.0, b);
        g.set_p(b, best.0, ctx.beams[b].budget_w.min(ctx.eirp_cap_w));
    }
    finish(g, ctx)
}
