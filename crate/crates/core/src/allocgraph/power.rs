//! Per-beam water-filling with interference treated as noise, EPFD
//! projection, and the propagate/update loop.

use super::context::AllocContext;
use super::graph::AllocationGraph;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerUpdateConfig {
    pub max_rounds: usize,
    /// Stop when no edge power moves by more than this fraction of the largest power.
    pub tol_rel: f64,
}

impl Default for PowerUpdateConfig {
    fn default() -> Self {
        Self { max_rounds: 10, tol_rel: 1e-6 }
    }
}

/// Maximise Σ log(1 + p_i / n_i) subject to Σ p_i ≤ budget and
/// 0 ≤ p_i ≤ cap_i. `n_i` is noise-plus-interference over gain.
pub fn water_fill(n: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let k = n.len();
    if k == 0 || budget <= 0.0 {
        return vec![0.0; k];
    }
    let cap_sum: f64 = caps.iter().map(|c| c.max(0.0)).sum();
    if cap_sum <= budget {
        return caps.iter().map(|c| c.max(0.0)).collect();
    }
    // S(μ) = Σ clamp(μ − n_i, 0, cap_i) is piecewise linear; walk its breakpoints.
    let mut bps: Vec<f64> = Vec::with_capacity(2 * k);
    for i in 0..k {
        if caps[i] > 0.0 && n[i].is_finite() {
            bps.push(n[i]);
            bps.push(n[i] + caps[i]);
        }
    }
    if bps.is_empty() {
        return vec![0.0; k];
    }
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let fill = |mu: f64| -> f64 { (0..k).map(|i| (mu - n[i]).clamp(0.0, caps[i].max(0.0))).sum() };
    let mut lo = bps[0];
    let mut mu = lo;
    for &hi in &bps[1..] {
        let s_hi = fill(hi);
        if s_hi >= budget {
            let s_lo = fill(lo);
            let slope = (s_hi - s_lo) / (hi - lo);
            mu = if slope > 0.0 { lo + (budget - s_lo) / slope } else { hi };
            break;
        }
        lo = hi;
        mu = hi;
    }
    let mut p: Vec<f64> = (0..k).map(|i| (mu - n[i]).clamp(0.0, caps[i].max(0.0))).collect();
    // Remove rounding overshoot so the budget holds exactly.
    let total: f64 = p.iter().sum();
    if total > budget {
        let f = budget / total;
        p.iter_mut().for_each(|x| *x *= f);
    }
    p
}

/// Noise-plus-interference over serving gain for each channel of beam `b`.
pub fn effective_noise(g: &AllocationGraph, ctx: &AllocContext, b: usize, channels: &[usize]) -> Vec<f64> {
    channels
        .iter()
        .map(|&m| {
            let gain = ctx.g(m, b, b);
            if gain > 0.0 {
                (ctx.noise_w + g.intra(ctx, m, b) + ctx.o(m, b)) / gain
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Lower the most recently added edges until every protected terminal is
/// within its limit; the lowered values become permanent caps.
pub fn project_epfd(g: &mut AllocationGraph, ctx: &AllocContext) {
    let nb = g.num_beams;
    for r in &ctx.protected {
        let mut total: f64 = g.edges.iter().map(|&(m, b)| r.coeff[m * nb + b] * g.p(b, m)).sum();
        if total <= r.limit_w_m2 {
            continue;
        }
        for i in (0..g.edges.len()).rev() {
            let (m, b) = g.edges[i];
            let c = r.coeff[m * nb + b];
            let p = g.p(b, m);
            if c <= 0.0 || p <= 0.0 {
                continue;
            }
            let excess = total - r.limit_w_m2;
            let new_p = (p - excess / c).max(0.0);
            total -= c * (p - new_p);
            g.set_p(b, m, new_p);
            let idx = b * g.num_channels + m;
            g.cap[idx] = g.cap[idx].min(new_p);
            if total <= r.limit_w_m2 {
                break;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateReport {
    pub rounds: usize,
    pub converged: bool,
}

/// Water-fill a single beam against the current messages.
pub fn water_fill_beam(g: &AllocationGraph, ctx: &AllocContext, b: usize) -> Vec<(usize, f64)> {
    let chans = g.channels_of(b);
    let n = effective_noise(g, ctx, b, &chans);
    let caps: Vec<f64> = chans.iter().map(|&m| g.cap[b * g.num_channels + m]).collect();
    let p = water_fill(&n, &caps, ctx.beams[b].budget_w);
    chans.into_iter().zip(p).collect()
}

/// Alternate message propagation and per-beam water-filling, projecting onto
/// the EPFD constraints after every round; finally drop zero-power edges.
pub fn update_power(g: &mut AllocationGraph, ctx: &AllocContext, cfg: &PowerUpdateConfig) -> UpdateReport {
    let mut report = UpdateReport::default();
    for round in 0..cfg.max_rounds.max(1) {
        report.rounds = round + 1;
        g.propagate_messages(ctx);
        let mut updates = Vec::new();
        for b in 0..g.num_beams {
            if g.degree(b) > 0 {
                updates.extend(water_fill_beam(g, ctx, b).into_iter().map(|(m, p)| (b, m, p)));
            }
        }
        let before = g.power.clone();
        for (b, m, p) in updates {
            g.set_p(b, m, p);
        }
        project_epfd(g, ctx);
        let scale = g.power.iter().cloned().fold(0.0, f64::max);
        let moved = g.power.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved <= cfg.tol_rel * scale {
            report.converged = true;
            break;
        }
    }
    g.prune();
    g.propagate_messages(ctx);
    report
}
