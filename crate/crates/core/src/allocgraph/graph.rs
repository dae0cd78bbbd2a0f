//! Bipartite beam/channel graph with per-edge powers and message vectors.

use super::context::AllocContext;
use crate::geom::Vec3;
use crate::interference::PowerAllocation;
use crate::units::{linear_to_db, EARTH_RADIUS_M};
use serde::{Deserialize, Serialize};

/// Messages carried on edge (m, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMessage {
    /// Channel → beam: atmospheric and free-space loss of the serving link, dB.
    pub xi_db: f64,
    pub path_loss_db: f64,
    /// Beam → channel: terminal position, edge power and link antenna gains.
    pub ut_position: Vec3,
    pub power_w: f64,
    pub gt_dbi: f64,
    pub gr_dbi: f64,
    /// Channel → beam after aggregation: intra- and inter-satellite CCI, W.
    pub intra_w: f64,
    pub inter_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationGraph {
    pub num_beams: usize,
    pub num_channels: usize,
    pub max_channels: usize,
    /// Edges (m, b) in insertion order.
    pub edges: Vec<(usize, usize)>,
    /// `[b * M + m]`, watts.
    pub power: Vec<f64>,
    /// Per-edge power ceiling: EIRP cap, lowered permanently by EPFD projection.
    pub cap: Vec<f64>,
    /// `[m * B + b]`, present for edges only.
    pub messages: Vec<Option<EdgeMessage>>,
    /// Set when a strategy deliberately ignores the channel-aggregation limit.
    pub relaxed_n: bool,
}

impl AllocationGraph {
    /// B beam nodes and M channel nodes with no edges.
    pub fn init(ctx: &AllocContext) -> Self {
        let (nb, nm) = (ctx.num_beams, ctx.num_channels);
        Self {
            num_beams: nb,
            num_channels: nm,
            max_channels: ctx.max_channels,
            edges: Vec::new(),
            power: vec![0.0; nb * nm],
            cap: vec![ctx.eirp_cap_w; nb * nm],
            messages: vec![None; nb * nm],
            relaxed_n: false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.num_beams + self.num_channels
    }

    #[inline]
    pub fn p(&self, b: usize, m: usize) -> f64 {
        self.power[b * self.num_channels + m]
    }

    #[inline]
    pub fn set_p(&mut self, b: usize, m: usize, v: f64) {
        self.power[b * self.num_channels + m] = v;
    }

    pub fn has_edge(&self, m: usize, b: usize) -> bool {
        self.edges.contains(&(m, b))
    }

    pub fn channels_of(&self, b: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().filter(|e| e.1 == b).map(|e| e.0).collect();
        v.sort_unstable();
        v
    }

    pub fn beams_on(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == m).map(|e| e.1)
    }

    pub fn degree(&self, b: usize) -> usize {
        self.edges.iter().filter(|e| e.1 == b).count()
    }

    /// Add an edge with zero power; the caller runs the power update.
    pub fn add_edge(&mut self, m: usize, b: usize) {
        if !self.edges.contains(&(m, b)) {
            self.edges.push((m, b));
        }
    }

    /// Drop edges that ended with zero power.
    pub fn prune(&mut self) {
        let nm = self.num_channels;
        let nb = self.num_beams;
        let power = &self.power;
        let messages = &mut self.messages;
        self.edges.retain(|&(m, b)| {
            let keep = power[b * nm + m] > 0.0;
            if !keep {
                messages[m * nb + b] = None;
            }
            keep
        });
    }

    /// Σ_{b′≠b, (m,b′)∈E} p(b′,m)·H(m, b′→b).
    pub fn intra(&self, ctx: &AllocContext, m: usize, b: usize) -> f64 {
        self.beams_on(m).filter(|&bp| bp != b).map(|bp| self.p(bp, m) * ctx.g(m, bp, b)).sum()
    }

    pub fn sinr(&self, ctx: &AllocContext, m: usize, b: usize) -> f64 {
        let p = self.p(b, m);
        if p <= 0.0 {
            return 0.0;
        }
        p * ctx.g(m, b, b) / (ctx.noise_w + self.intra(ctx, m, b) + ctx.o(m, b))
    }

    pub fn beam_rate(&self, ctx: &AllocContext, b: usize) -> f64 {
        self.channels_of(b).into_iter().map(|m| ctx.bandwidth_hz * (1.0 + self.sinr(ctx, m, b)).log2()).sum()
    }

    pub fn sum_rate(&self, ctx: &AllocContext) -> f64 {
        (0..self.num_beams).map(|b| self.beam_rate(ctx, b)).sum()
    }

    /// Recompute every edge's messages from the current powers.
    pub fn propagate_messages(&mut self, ctx: &AllocContext) {
        let nb = self.num_beams;
        for i in 0..self.edges.len() {
            let (m, b) = self.edges[i];
            let msg = EdgeMessage {
                xi_db: ctx.xi_db[m * nb + b],
                path_loss_db: ctx.path_loss_db[m * nb + b],
                ut_position: ctx.beams[b].position,
                power_w: self.p(b, m),
                gt_dbi: ctx.gt_dbi[b],
                gr_dbi: ctx.gr_dbi[b],
                intra_w: self.intra(ctx, m, b),
                inter_w: ctx.o(m, b),
            };
            self.messages[m * nb + b] = Some(msg);
        }
    }

    pub fn message(&self, m: usize, b: usize) -> Option<&EdgeMessage> {
        self.messages[m * self.num_beams + b].as_ref()
    }

    /// EPFD of the current powers at each protected terminal, W/m².
    pub fn epfd(&self, ctx: &AllocContext) -> Vec<f64> {
        ctx.protected
            .iter()
            .map(|r| self.edges.iter().map(|&(m, b)| r.coeff[m * self.num_beams + b] * self.p(b, m)).sum())
            .collect()
    }

    pub fn to_allocation(&self, ctx: &AllocContext) -> PowerAllocation {
        let mut a = ctx.zero_allocation();
        for &(m, b) in &self.edges {
            a.p[b][m] = self.p(b, m);
        }
        a
    }
}

/// Beam node feature n_b: terminal position (Earth radii), budget (dBW/100),
/// backlog (per 100 Mbit) and waiting clock (per 100 slots).
pub fn beam_features(ctx: &AllocContext, b: usize) -> [f64; 6] {
    let s = &ctx.beams[b];
    let p = s.position / EARTH_RADIUS_M;
    [p.x, p.y, p.z, db_scaled(s.budget_w), s.q_bits / 1e8, s.tau / 100.0]
}

/// Channel node feature n_m: positions of protected terminals listening on m.
pub fn channel_features(ctx: &AllocContext, m: usize) -> Vec<Vec3> {
    let nb = ctx.num_beams;
    ctx.protected.iter().filter(|r| (0..nb).any(|b| r.coeff[m * nb + b] > 0.0)).map(|r| r.position).collect()
}

/// Power in dBW scaled by 1/100, with zero mapped to a floor.
pub fn db_scaled(w: f64) -> f64 {
    if w > 0.0 {
        linear_to_db(w).max(-300.0) / 100.0
    } else {
        -3.0
    }
}
