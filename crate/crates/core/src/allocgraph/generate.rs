//! Sequential edge generation: for each channel, repeatedly decide whether
//! to add another edge and, if so, which beam receives the channel.
//!
//! [`Generator`] is a state machine so the same stepping logic drives
//! sampling, greedy decoding and exhaustive enumeration.

use super::context::AllocContext;
use super::graph::{db_scaled, AllocationGraph};
use super::power::{effective_noise, update_power, water_fill, PowerUpdateConfig};
use crate::error::{Error, Result};
use crate::units::{linear_to_db, EARTH_RADIUS_M};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const CHANNEL_DIM: usize = 5;
pub const EDGE_DIM: usize = 14;
pub const CAND_DIM: usize = 13;
/// Index of the compressed marginal-gain entry in a candidate feature vector.
pub const CAND_GAIN: usize = 10;
pub const CAND_FEASIBLE: usize = 11;
/// Net marginal gain over the beam's own gain, clamped to [-1, 1]; 0 when
/// the beam gains nothing.
pub const CAND_EFFICIENCY: usize = 12;

/// What a policy sees when asked about channel `channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub channel: usize,
    /// Protected-terminal count, EPFD headroom, mean inter-satellite CCI,
    /// occupancy, and a constant 1.
    pub channel_feat: [f64; CHANNEL_DIM],
    /// Message vectors of the edges already on this channel.
    pub edges: Vec<[f64; EDGE_DIM]>,
    /// One feature vector per beam; masked entries are still present.
    pub candidates: Vec<[f64; CAND_DIM]>,
    pub admissible: Vec<bool>,
    /// Marginal sum-rate gain of adding (channel, b), bit/s.
    pub gains_bps: Vec<f64>,
    /// Beam `b`'s own rate change from the same addition, ignoring victims.
    #[serde(default)]
    pub own_gains_bps: Vec<f64>,
}

impl PolicyInput {
    pub fn check_finite(&self) -> Result<()> {
        let ok = self.channel_feat.iter().all(|x| x.is_finite())
            && self.edges.iter().flatten().all(|x| x.is_finite())
            && self.candidates.iter().flatten().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("policy input for channel {}", self.channel)))
        }
    }

    pub fn admissible_count(&self) -> usize {
        self.admissible.iter().filter(|&&a| a).count()
    }
}

/// The two decision functions of the generator.
pub trait AllocationPolicy: Sync {
    /// Probability of adding another edge on the input's channel.
    fn add_edge_probability(&self, input: &PolicyInput) -> Result<f64>;
    /// Distribution over beams; zero on every inadmissible beam.
    fn node_distribution(&self, input: &PolicyInput) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Sample,
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Add-edge probability reported at this step (1 when forced).
    pub add_prob: f64,
    pub forced: bool,
    pub added: bool,
    pub node_dist: Option<Vec<f64>>,
    pub chosen: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelTrace {
    pub channel: usize,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub channels: Vec<ChannelTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    AddEdge { m: usize, forced: bool },
    ChooseNode { m: usize },
}

#[derive(Debug, Clone)]
pub struct Generator<'c> {
    ctx: &'c AllocContext,
    cfg: PowerUpdateConfig,
    pub graph: AllocationGraph,
    m: usize,
    /// `[m * B + b]`: beam already offered channel m.
    tried: Vec<bool>,
    queried_on_channel: bool,
    awaiting_node: bool,
    pub trace: GenerationTrace,
}

impl<'c> Generator<'c> {
    pub fn new(ctx: &'c AllocContext, cfg: PowerUpdateConfig) -> Self {
        Self {
            ctx,
            cfg,
            graph: AllocationGraph::init(ctx),
            m: 0,
            tried: vec![false; ctx.num_beams * ctx.num_channels],
            queried_on_channel: false,
            awaiting_node: false,
            trace: GenerationTrace { channels: (0..ctx.num_channels).map(|m| ChannelTrace { channel: m, steps: Vec::new() }).collect() },
        }
    }

    pub fn context(&self) -> &AllocContext {
        self.ctx
    }

    pub fn admissible(&self, m: usize) -> Vec<bool> {
        let nb = self.ctx.num_beams;
        (0..nb)
            .map(|b| self.ctx.beams[b].is_active() && !self.tried[m * nb + b] && self.graph.degree(b) < self.ctx.max_channels)
            .collect()
    }

    fn next_channel(&mut self) {
        self.m += 1;
        self.queried_on_channel = false;
        self.awaiting_node = false;
    }

    /// The next decision needed, or `None` when every channel is done.
    pub fn query(&mut self) -> Option<Query> {
        loop {
            if self.m >= self.ctx.num_channels {
                return None;
            }
            if self.awaiting_node {
                return Some(Query::ChooseNode { m: self.m });
            }
            if !self.admissible(self.m).iter().any(|&a| a) {
                self.next_channel();
                continue;
            }
            return Some(Query::AddEdge { m: self.m, forced: !self.queried_on_channel });
        }
    }

    pub fn answer_add(&mut self, add: bool, prob: f64, forced: bool) {
        self.trace.channels[self.m].steps.push(TraceStep { add_prob: prob, forced, added: add, node_dist: None, chosen: None });
        self.queried_on_channel = true;
        if add {
            self.awaiting_node = true;
        } else {
            self.next_channel();
        }
    }

    pub fn answer_node(&mut self, b: usize, dist: Vec<f64>) -> Result<()> {
        let m = self.m;
        if !self.awaiting_node || !self.admissible(m).get(b).copied().unwrap_or(false) {
            return Err(Error::domain(format!("beam {b} is not admissible on channel {m}")));
        }
        if let Some(step) = self.trace.channels[m].steps.last_mut() {
            step.node_dist = Some(dist);
            step.chosen = Some(b);
        }
        self.tried[m * self.ctx.num_beams + b] = true;
        self.graph.add_edge(m, b);
        update_power(&mut self.graph, self.ctx, &self.cfg);
        self.awaiting_node = false;
        Ok(())
    }

    /// Features for the current channel.
    pub fn input(&self) -> PolicyInput {
        build_input(&self.graph, self.ctx, self.m, &self.admissible(self.m))
    }

    pub fn finish(self) -> (AllocationGraph, GenerationTrace) {
        (self.graph, self.trace)
    }
}

/// Sum-rate change from adding (m, b) and re-water-filling beam `b` with the
/// other beams' powers held fixed; includes the rate lost by co-channel
/// victims. Returns (net gain, beam `b`'s own gain, EPFD headroom
/// available); gains in bit/s.
pub fn marginal_gain(g: &AllocationGraph, ctx: &AllocContext, m: usize, b: usize, epfd_now: &[f64]) -> (f64, f64, bool) {
    let nb = ctx.num_beams;
    let mut chans = g.channels_of(b);
    if !chans.contains(&m) {
        chans.push(m);
    }
    let n = effective_noise(g, ctx, b, &chans);
    let mut caps: Vec<f64> = chans.iter().map(|&c| g.cap[b * ctx.num_channels + c]).collect();
    let k = chans.iter().position(|&c| c == m).unwrap();
    for (r, &now) in ctx.protected.iter().zip(epfd_now) {
        let c = r.coeff[m * nb + b];
        if c > 0.0 {
            let room = (r.limit_w_m2 - now + c * g.p(b, m)).max(0.0);
            caps[k] = caps[k].min(room / c);
        }
    }
    let feasible = caps[k] > 0.0;
    let new_p = water_fill(&n, &caps, ctx.beams[b].budget_w);
    let beta = ctx.bandwidth_hz;
    let mut own = 0.0;
    let mut gain = 0.0;
    for (i, &c) in chans.iter().enumerate() {
        let old = g.p(b, c);
        own += beta * ((1.0 + new_p[i] / n[i]).log2() - (1.0 + old / n[i]).log2());
        let dp = new_p[i] - old;
        if dp == 0.0 {
            continue;
        }
        for v in g.beams_on(c).filter(|&v| v != b) {
            let pv = g.p(v, c);
            if pv <= 0.0 {
                continue;
            }
            let s = pv * ctx.g(c, v, v);
            let base = ctx.noise_w + g.intra(ctx, c, v) + ctx.o(c, v);
            let after = (base + dp * ctx.g(c, b, v)).max(ctx.noise_w);
            gain += beta * ((1.0 + s / after).log2() - (1.0 + s / base).log2());
        }
    }
    (own + gain, own, feasible)
}

/// Signed log-like compression of a spectral-efficiency gain (bit/s/Hz).
pub fn gain_feature(per_hz: f64) -> f64 {
    (per_hz * 1e3).asinh() / 5.0
}

fn log_ratio(x: f64, noise: f64) -> f64 {
    (1.0 + x / noise).log10() / 3.0
}

pub fn build_input(g: &AllocationGraph, ctx: &AllocContext, m: usize, admissible: &[bool]) -> PolicyInput {
    let nb = ctx.num_beams;
    let noise = ctx.noise_w;
    let epfd_now = g.epfd(ctx);

    let listening: Vec<usize> = (0..ctx.protected.len()).filter(|&i| (0..nb).any(|b| ctx.protected[i].coeff[m * nb + b] > 0.0)).collect();
    let headroom = listening
        .iter()
        .map(|&i| {
            let r = &ctx.protected[i];
            if epfd_now[i] > 0.0 {
                linear_to_db(r.limit_w_m2 / epfd_now[i]).clamp(-100.0, 100.0) / 100.0
            } else {
                1.0
            }
        })
        .fold(1.0, f64::min);
    let active: Vec<usize> = (0..nb).filter(|&b| ctx.beams[b].is_active()).collect();
    let mean_o = if active.is_empty() { 0.0 } else { active.iter().map(|&b| log_ratio(ctx.o(m, b), noise)).sum::<f64>() / active.len() as f64 };
    let occupancy = if active.is_empty() { 0.0 } else { g.beams_on(m).count() as f64 / active.len() as f64 };
    let channel_feat = [listening.len() as f64 / 4.0, headroom, mean_o, occupancy, 1.0];

    let edges = g
        .beams_on(m)
        .map(|b| {
            let s = &ctx.beams[b];
            let pos = s.position / EARTH_RADIUS_M;
            let msg = g.message(m, b);
            let (gt, gr, xi, pl, intra, inter) = match msg {
                Some(x) => (x.gt_dbi, x.gr_dbi, x.xi_db, x.path_loss_db, x.intra_w, x.inter_w),
                None => (ctx.gt_dbi[b], ctx.gr_dbi[b], ctx.xi_db[m * nb + b], ctx.path_loss_db[m * nb + b], g.intra(ctx, m, b), ctx.o(m, b)),
            };
            [
                pos.x,
                pos.y,
                pos.z,
                db_scaled(g.p(b, m)),
                gt / 100.0,
                gr / 100.0,
                xi / 10.0,
                (pl - 160.0) / 20.0,
                log_ratio(intra, noise),
                log_ratio(inter, noise),
                s.q_bits / 1e8,
                s.tau / 100.0,
                db_scaled(s.budget_w),
                g.beam_rate(ctx, b) / ctx.bandwidth_hz / 10.0,
            ]
        })
        .collect();

    let mut candidates = Vec::with_capacity(nb);
    let mut gains_bps = Vec::with_capacity(nb);
    let mut own_gains_bps = Vec::with_capacity(nb);
    for b in 0..nb {
        let s = &ctx.beams[b];
        let pos = s.position / EARTH_RADIUS_M;
        let (gain, own, feasible) = if admissible[b] { marginal_gain(g, ctx, m, b, &epfd_now) } else { (0.0, 0.0, false) };
        gains_bps.push(gain);
        own_gains_bps.push(own);
        candidates.push([
            pos.x,
            pos.y,
            pos.z,
            db_scaled(s.budget_w),
            s.q_bits / 1e8,
            s.tau / 100.0,
            g.degree(b) as f64 / ctx.max_channels as f64,
            log_ratio(ctx.o(m, b), noise),
            log_ratio(g.intra(ctx, m, b), noise),
            log_ratio(s.budget_w * ctx.g(m, b, b), noise),
            gain_feature(gain / ctx.bandwidth_hz),
            if feasible { 1.0 } else { 0.0 },
            if own > 0.0 { (gain / own).clamp(-1.0, 1.0) } else { 0.0 },
        ]);
    }
    PolicyInput { channel: m, channel_feat, edges, candidates, admissible: admissible.to_vec(), gains_bps, own_gains_bps }
}

/// One policy decision and the input it was made on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Add { input: PolicyInput, added: bool },
    Node { input: PolicyInput, chosen: usize },
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub graph: AllocationGraph,
    pub trace: GenerationTrace,
    pub decisions: Vec<Decision>,
}

/// Check a node distribution against its mask.
pub fn validate_distribution(dist: &[f64], admissible: &[bool]) -> Result<()> {
    if dist.len() != admissible.len() {
        return Err(Error::domain("node distribution has the wrong length"));
    }
    let mut sum = 0.0;
    for (p, &a) in dist.iter().zip(admissible) {
        if !p.is_finite() || *p < 0.0 || (!a && *p != 0.0) {
            return Err(Error::NonFinite("node distribution is negative, non-finite or leaks onto a masked beam".into()));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("node distribution sums to {sum}")));
    }
    Ok(())
}

pub fn choose_node<R: Rng + ?Sized>(dist: &[f64], admissible: &[bool], mode: DecodeMode, rng: &mut R) -> usize {
    match mode {
        DecodeMode::Greedy => {
            let mut best = None;
            for (b, (&p, &a)) in dist.iter().zip(admissible).enumerate() {
                if a && best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((b, p));
                }
            }
            best.map(|x| x.0).unwrap_or(0)
        }
        DecodeMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut last = 0;
            for (b, (&p, &a)) in dist.iter().zip(admissible).enumerate() {
                if !a {
                    continue;
                }
                last = b;
                acc += p;
                if u < acc {
                    return b;
                }
            }
            last
        }
    }
}

/// Build the beam/channel graph for one satellite and slot.
pub fn generate_allocation<R: Rng + ?Sized>(
    ctx: &AllocContext,
    policy: &dyn AllocationPolicy,
    mode: DecodeMode,
    rng: &mut R,
    cfg: &PowerUpdateConfig,
    record: bool,
) -> Result<Generated> {
    let mut gen = Generator::new(ctx, *cfg);
    let mut decisions = Vec::new();
    while let Some(q) = gen.query() {
        match q {
            Query::AddEdge { forced: true, .. } => gen.answer_add(true, 1.0, true),
            Query::AddEdge { forced: false, .. } => {
                let input = gen.input();
                input.check_finite()?;
                let p = policy.add_edge_probability(&input)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::NonFinite(format!("add-edge probability {p}")));
                }
                let added = match mode {
                    DecodeMode::Greedy => p > 0.5,
                    DecodeMode::Sample => rng.gen::<f64>() < p,
                };
                if record {
                    decisions.push(Decision::Add { input, added });
                }
                gen.answer_add(added, p, false);
            }
            Query::ChooseNode { .. } => {
                let input = gen.input();
                input.check_finite()?;
                let dist = policy.node_distribution(&input)?;
                validate_distribution(&dist, &input.admissible)?;
                let b = choose_node(&dist, &input.admissible, mode, rng);
                gen.answer_node(b, dist)?;
                if record {
                    decisions.push(Decision::Node { input, chosen: b });
                }
            }
        }
    }
    let (graph, trace) = gen.finish();
    Ok(Generated { graph, trace, decisions })
}
