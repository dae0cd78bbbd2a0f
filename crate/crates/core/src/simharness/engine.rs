//! Slot-by-slot simulation: stage-1 beam assignment, channel/power
//! allocation per satellite, rate evaluation, queue service and metrics.

use super::config::{PolicyKind, ScenarioConfig, Strategy};
use super::world::{rng_for, stream, World};
use crate::allocgraph::context::{AllocContext, SlotInputs};
use crate::allocgraph::generate::{generate_allocation, AllocationPolicy, DecodeMode, Decision, GenerationTrace, PolicyInput};
use crate::allocgraph::graph::AllocationGraph;
use crate::allocgraph::probability::{edge_probability, latency_proxy};
use crate::baselines::{full_reuse_allocation, single_channel_allocation};
use crate::error::Result;
use crate::geom::{SatelliteState, Vec3};
use crate::ids::{SatId, UtId};
use crate::interference::{downlink_rate, epfd_check, Emission, EmissionBoard, EpfdCheck, InterCciMode, RadioContext, Terminal};
use crate::policy::{HeuristicPolicy, NeuralPolicy, PolicyParams};
use crate::rf::{mix, FadingField};
use crate::scheduler::{point_beams, select_serving_uts, split_beam_power, weighted_kmeans, BeamAssignment, UtCandidate};
use crate::traffic::{CompletionRecord, QueueState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;

/// Relative slack on budget and cap checks.
const CHECK_TOL: f64 = 1e-9;

/// Edge-selection policy used by the proposed strategy.
#[derive(Debug, Clone)]
pub enum PolicyHandle {
    Heuristic(HeuristicPolicy),
    Neural(NeuralPolicy),
}

impl PolicyHandle {
    /// Policy described by the config. A neural policy without a parameter
    /// file starts from a fixed, seed-independent initialization.
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(match cfg.policy.kind {
            PolicyKind::Heuristic => PolicyHandle::Heuristic(HeuristicPolicy { threshold_bps: cfg.policy.threshold_bps, min_efficiency: cfg.policy.min_efficiency }),
            PolicyKind::Neural => {
                let params = match &cfg.policy.params_path {
                    Some(p) => PolicyParams::load(p)?,
                    None => PolicyParams::init(&cfg.policy.init, &mut rng_for(0, &[stream::POLICY_INIT])),
                };
                PolicyHandle::Neural(NeuralPolicy::new(params))
            }
        })
    }
}

impl AllocationPolicy for PolicyHandle {
    fn add_edge_probability(&self, input: &PolicyInput) -> Result<f64> {
        match self {
            PolicyHandle::Heuristic(p) => p.add_edge_probability(input),
            PolicyHandle::Neural(p) => p.add_edge_probability(input),
        }
    }

    fn node_distribution(&self, input: &PolicyInput) -> Result<Vec<f64>> {
        match self {
            PolicyHandle::Heuristic(p) => p.node_distribution(input),
            PolicyHandle::Neural(p) => p.node_distribution(input),
        }
    }
}

/// Per-run summary; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub strategy: Strategy,
    pub seed: u64,
    pub num_slots: u64,
    pub slot_s: f64,
    pub measured_sats: usize,
    pub measured_uts: usize,
    pub served_bits: f64,
    pub throughput_per_sat_bps: f64,
    pub throughput_per_ut_bps: f64,
    /// Over every busy period of a measured terminal: completed ones, expired
    /// ones at their expiry slot, and ones still open at the end (censored).
    pub mean_latency_slots: f64,
    pub mean_latency_s: f64,
    pub p95_latency_slots: f64,
    /// Completed busy periods only.
    pub mean_completed_latency_slots: f64,
    pub completed_periods: usize,
    pub expired_periods: usize,
    pub open_periods: usize,
    pub expiry_rate: f64,
    pub arrived_bits: f64,
    pub dropped_bits: f64,
    pub expired_bits: f64,
    pub residual_bits: f64,
    pub conservation_error: f64,
    pub mean_proxy_latency_slots: f64,
    pub mean_edges_per_active_beam: f64,
    pub violations_power: usize,
    pub violations_nonneg: usize,
    pub violations_epfd: usize,
    pub violations_channels: usize,
    pub violations_beam: usize,
    pub violations_eirp: usize,
    pub min_epfd_margin_db: f64,
    pub epfd_checks: usize,
    pub projection_events: usize,
    pub relaxed_n: bool,
    pub handovers: usize,
}

impl Metrics {
    /// Numeric metric by column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let v = serde_json::to_value(self).ok()?;
        match v.get(name)? {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::Bool(b) => Some(*b as u8 as f64),
            serde_json::Value::Null => Some(f64::INFINITY),
            _ => None,
        }
    }

    pub fn total_violations(&self) -> usize {
        self.violations_power + self.violations_nonneg + self.violations_epfd + self.violations_channels + self.violations_beam + self.violations_eirp
    }
}

/// Per-satellite record in the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatTrace {
    pub sat: SatId,
    pub position: Vec3,
    pub directions: Vec<Vec3>,
    /// `power[b][m]` in watts.
    pub power: Vec<Vec<f64>>,
    pub serving: Vec<Option<UtId>>,
    pub budgets: Vec<f64>,
    pub rates_bps: Vec<f64>,
    /// `(channel, beam, probability)` for each selected edge.
    pub edge_probabilities: Vec<(usize, usize, f64)>,
    pub epfd: Vec<EpfdRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpfdRecord {
    pub user: usize,
    pub epfd_w_m2: f64,
    pub margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub slot: u64,
    pub satellites: Vec<SatTrace>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Override the configured decode mode of the proposed strategy.
    pub decode: Option<DecodeMode>,
    /// Keep policy decisions of measured satellites (for training).
    pub record_decisions: bool,
    /// Keep per-slot traces.
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub completions: Vec<CompletionRecord>,
    pub decisions: Vec<Decision>,
    pub trace: Vec<SlotTrace>,
}

struct SatPlan {
    sat: SatelliteState,
    assignment: BeamAssignment,
    budgets: Vec<f64>,
    ctx: AllocContext,
    graph: AllocationGraph,
    projected: bool,
    trace: Option<GenerationTrace>,
    decisions: Vec<Decision>,
    emission: Emission,
    epfd: Vec<(usize, EpfdCheck)>,
}

#[derive(Default)]
struct Tally {
    violations_power: usize,
    violations_nonneg: usize,
    violations_epfd: usize,
    violations_channels: usize,
    violations_beam: usize,
    violations_eirp: usize,
    min_margin: f64,
    epfd_checks: usize,
    projections: usize,
    relaxed_n: bool,
    proxy_sum: f64,
    proxy_n: usize,
    edges: usize,
    active_beams: usize,
}

/// Run one scenario with the policy described by its config.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let policy = PolicyHandle::from_config(cfg)?;
    run_episode(cfg, &policy, &RunOptions::default())
}

pub fn run_episode(cfg: &ScenarioConfig, policy: &dyn AllocationPolicy, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let mut world = World::build(cfg)?;
    let mut queues = QueueState::new(&world.initial_owner);
    let mut board = EmissionBoard::default();
    let plan = cfg.rf.plan;
    let antennas = cfg.rf.antennas;
    let total_budget = cfg.rf.limits.total_budget(&plan, antennas.tx.g_max_dbi) * cfg.power_scale;
    let decode = opts.decode.unwrap_or(cfg.policy.decode);
    let measured: BTreeSet<UtId> = world.measured_uts.iter().copied().collect();
    let measured_sat_set: Option<BTreeSet<SatId>> = world.measured_sats.as_ref().map(|v| v.iter().copied().collect());
    let mut serving_sats: BTreeSet<SatId> = BTreeSet::new();

    let mut tally = Tally { min_margin: f64::INFINITY, ..Default::default() };
    let mut completions = Vec::new();
    let mut decisions = Vec::new();
    let mut traces = Vec::new();
    let mut served_measured = 0.0;
    let mut handovers = 0;

    for t in 0..cfg.num_slots {
        world.advance(t, cfg.slot_s);
        if t > 0 {
            handovers += world.handover(&mut queues, cfg.traffic.buffer_capacity_bits, cfg.slot_s)?;
        }
        let mut arrivals = rng_for(cfg.seed, &[stream::TRAFFIC, t]);
        queues.enqueue_arrivals(t, &cfg.traffic, cfg.slot_s, &mut arrivals);

        let radio = RadioContext::new(antennas, plan, cfg.rf.noise_temperature_k, FadingField::new(cfg.rf.atmosphere, mix(&[cfg.seed, stream::FADING]), t));
        let active: Vec<SatId> = {
            let s: BTreeSet<SatId> = queues.queues.iter().filter(|q| q.q_bits > 0.0).map(|q| q.owner).collect();
            s.into_iter().collect()
        };

        let plans: Vec<SatPlan> = active
            .par_iter()
            .map(|&sid| {
                let record = opts.record_decisions && measured_sat_set.as_ref().map_or(true, |m| m.contains(&sid));
                plan_satellite(cfg, &world, &queues, &board, &radio, policy, decode, sid, t, total_budget, record)
            })
            .collect::<Result<_>>()?;

        for p in &plans {
            board.publish(p.emission.clone());
        }

        let mut slot_trace = Vec::new();
        for p in plans {
            let sid = p.sat.id;
            let counted = measured_sat_set.as_ref().map_or(true, |m| m.contains(&sid));
            check_constraints(&p, &mut tally, cfg);
            let neighbors = board.neighbors(&p.sat.neighbors, cfg.allocation.rate_inter_cci);
            let mut rates = vec![0.0; p.assignment.num_beams()];
            for (b, u) in p.assignment.active_beams() {
                let term = Terminal::pointed_at(u, world.uts[u.0].position, &p.sat.position);
                rates[b] = downlink_rate(&radio, &term, &p.emission, Some(b), &neighbors)?;
            }
            for (b, u) in p.assignment.active_beams() {
                let bits = queues.serve(u, rates[b], cfg.slot_s);
                if measured.contains(&u) {
                    served_measured += bits;
                }
            }
            if counted {
                serving_sats.insert(sid);
                tally.proxy_sum += latency_proxy(&p.graph, &p.ctx, cfg.traffic.ttl_slots as f64);
                tally.proxy_n += 1;
                for (b, _) in p.assignment.active_beams() {
                    tally.edges += p.graph.degree(b);
                    tally.active_beams += 1;
                }
            }
            if opts.trace {
                let edge_probabilities = match &p.trace {
                    Some(tr) => p.graph.edges.iter().map(|&(m, b)| (m, b, edge_probability(tr, m, b))).collect(),
                    None => p.graph.edges.iter().map(|&(m, b)| (m, b, 1.0)).collect(),
                };
                slot_trace.push(SatTrace {
                    sat: sid,
                    position: p.sat.position,
                    directions: p.emission.directions.clone(),
                    power: p.emission.alloc.p.clone(),
                    serving: p.assignment.serving.clone(),
                    budgets: p.budgets.clone(),
                    rates_bps: rates,
                    edge_probabilities,
                    epfd: p.epfd.iter().map(|(u, c)| EpfdRecord { user: *u, epfd_w_m2: c.epfd_w_m2, margin_db: c.margin_db }).collect(),
                });
            }
            decisions.extend(p.decisions);
        }
        if opts.trace {
            traces.push(SlotTrace { slot: t, satellites: slot_trace });
        }
        completions.extend(queues.advance_clocks_and_expire(t, cfg.traffic.ttl_slots));
        board.advance();
    }

    let n_sats = match &world.measured_sats {
        Some(v) => v.len(),
        None => serving_sats.len().max(1),
    };
    let metrics = summarize(cfg, &queues, &completions, &measured, served_measured, n_sats, tally, handovers);
    Ok(RunOutput { metrics, completions, decisions, trace: traces })
}

#[allow(clippy::too_many_arguments)]
fn plan_satellite(
    cfg: &ScenarioConfig,
    world: &World,
    queues: &QueueState,
    board: &EmissionBoard,
    radio: &RadioContext,
    policy: &dyn AllocationPolicy,
    decode: DecodeMode,
    sid: SatId,
    t: u64,
    total_budget: f64,
    record: bool,
) -> Result<SatPlan> {
    let mut sat = world.constellation.satellite(sid).cloned().ok_or_else(|| crate::Error::domain(format!("unknown satellite {sid}")))?;
    let nb = cfg.spot_beams();
    let candidates: Vec<UtCandidate> = queues
        .active_for(sid)
        .map(|q| UtCandidate { id: q.ut, position: world.uts[q.ut.0].position, tau: q.wait_slots as f64, q_bits: q.q_bits })
        .collect();
    let clusters = weighted_kmeans(&candidates, nb, &cfg.allocation.kmeans);
    let assignment = select_serving_uts(&candidates, &clusters, nb);
    let budgets = split_beam_power(total_budget, &assignment, |u| queues.residual(u));
    point_beams(&mut sat, &assignment, |u| world.uts[u.0].position);
    let protected = world.protected_in_view(&sat);
    let neighbors = board.neighbors(&sat.neighbors, InterCciMode::Estimated);

    let q_of = |u: UtId| queues.residual(u);
    let tau_of = |u: UtId| queues.queue(u).wait_slots as f64;
    let pos_of = |u: UtId| world.uts[u.0].position;
    let ctx = AllocContext::build(&SlotInputs {
        sat: &sat,
        assignment: &assignment,
        budgets: &budgets,
        q_bits: &q_of,
        tau: &tau_of,
        ut_position: &pos_of,
        radio,
        neighbors: &neighbors,
        protected: &protected,
        slot: t,
        limits: &cfg.rf.limits,
        max_channels: cfg.allocation.max_channels,
        slot_s: cfg.slot_s,
        total_budget_w: total_budget,
    })?;

    let (graph, projected, trace, decisions) = match cfg.strategy {
        Strategy::Proposed => {
            let mut rng = rng_for(cfg.seed, &[stream::POLICY, t, sid.0 as u64]);
            let g = generate_allocation(&ctx, policy, decode, &mut rng, &cfg.allocation.power_update, record)?;
            let projected = g.graph.cap.iter().any(|&c| c < ctx.eirp_cap_w * (1.0 - 1e-12));
            (g.graph, projected, Some(g.trace), g.decisions)
        }
        Strategy::FullReuse => {
            let o = full_reuse_allocation(&ctx);
            (o.graph, o.projected, None, Vec::new())
        }
        Strategy::SingleChannel => {
            let o = single_channel_allocation(&ctx);
            (o.graph, o.projected, None, Vec::new())
        }
    };
    let emission = Emission::new(&sat, graph.to_allocation(&ctx));
    let epfd = protected
        .iter()
        .map(|r| epfd_check(r, &emission, t, &cfg.rf.antennas, &cfg.rf.plan, cfg.rf.limits.epfd_reference_bandwidth_hz).map(|c| (r.id, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SatPlan { sat, assignment, budgets, ctx, graph, projected, trace, decisions, emission, epfd })
}

fn check_constraints(p: &SatPlan, tally: &mut Tally, cfg: &ScenarioConfig) {
    let alloc = &p.emission.alloc;
    if alloc.total() > p.ctx.total_budget_w * (1.0 + CHECK_TOL) {
        tally.violations_power += 1;
    }
    for b in 0..alloc.num_beams() {
        let row = &alloc.p[b];
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) || alloc.beam_total(b) > p.budgets[b] * (1.0 + CHECK_TOL) + 1e-15 {
            tally.violations_nonneg += 1;
        }
        if row.iter().any(|&x| x > p.ctx.eirp_cap_w * (1.0 + CHECK_TOL)) {
            tally.violations_eirp += 1;
        }
        if alloc.degree(b) > cfg.allocation.max_channels && !p.graph.relaxed_n {
            tally.violations_channels += 1;
        }
        if p.assignment.serving[b].is_none() && alloc.beam_total(b) > 0.0 {
            tally.violations_beam += 1;
        }
    }
    let mut seen = BTreeSet::new();
    for (_, u) in p.assignment.active_beams() {
        if !seen.insert(u) {
            tally.violations_beam += 1;
        }
    }
    for (_, c) in &p.epfd {
        tally.epfd_checks += 1;
        if !c.compliant {
            tally.violations_epfd += 1;
        }
        tally.min_margin = tally.min_margin.min(c.margin_db);
    }
    tally.projections += p.projected as usize;
    tally.relaxed_n |= p.graph.relaxed_n;
}

#[allow(clippy::too_many_arguments)]
fn summarize(cfg: &ScenarioConfig, queues: &QueueState, completions: &[CompletionRecord], measured: &BTreeSet<UtId>, served: f64, n_sats: usize, tally: Tally, handovers: usize) -> Metrics {
    let sim_time = cfg.num_slots as f64 * cfg.slot_s;
    let end = cfg.num_slots;
    let mut lat: Vec<f64> = Vec::new();
    let mut done: Vec<f64> = Vec::new();
    let mut expired = 0;
    for c in completions.iter().filter(|c| measured.contains(&c.ut)) {
        lat.push(c.latency_slots as f64);
        if c.expired {
            expired += 1;
        } else {
            done.push(c.latency_slots as f64);
        }
    }
    let mut open = 0;
    for q in queues.queues.iter().filter(|q| measured.contains(&q.ut)) {
        if let Some(t0) = q.arrival_slot {
            lat.push((end - t0) as f64);
            open += 1;
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean_latency = mean(&lat);
    let (mut arrived, mut dropped, mut expired_bits, mut residual) = (0.0, 0.0, 0.0, 0.0);
    for u in measured {
        let l = &queues.ledger[u.0];
        arrived += l.arrived;
        dropped += l.dropped;
        expired_bits += l.expired;
        residual += queues.residual(*u);
    }
    let periods = lat.len();
    Metrics {
        strategy: cfg.strategy,
        seed: cfg.seed,
        num_slots: cfg.num_slots,
        slot_s: cfg.slot_s,
        measured_sats: n_sats,
        measured_uts: measured.len(),
        served_bits: served,
        throughput_per_sat_bps: served / sim_time / n_sats as f64,
        throughput_per_ut_bps: if measured.is_empty() { 0.0 } else { served / sim_time / measured.len() as f64 },
        mean_latency_slots: mean_latency,
        mean_latency_s: mean_latency * cfg.slot_s,
        p95_latency_slots: percentile(&mut lat, 0.95),
        mean_completed_latency_slots: mean(&done),
        completed_periods: done.len(),
        expired_periods: expired,
        open_periods: open,
        expiry_rate: if periods == 0 { 0.0 } else { expired as f64 / periods as f64 },
        arrived_bits: arrived,
        dropped_bits: dropped,
        expired_bits,
        residual_bits: residual,
        conservation_error: queues.conservation_error(),
        mean_proxy_latency_slots: if tally.proxy_n == 0 { 0.0 } else { tally.proxy_sum / tally.proxy_n as f64 },
        mean_edges_per_active_beam: if tally.active_beams == 0 { 0.0 } else { tally.edges as f64 / tally.active_beams as f64 },
        violations_power: tally.violations_power,
        violations_nonneg: tally.violations_nonneg,
        violations_epfd: tally.violations_epfd,
        violations_channels: tally.violations_channels,
        violations_beam: tally.violations_beam,
        violations_eirp: tally.violations_eirp,
        min_epfd_margin_db: tally.min_margin,
        epfd_checks: tally.epfd_checks,
        projection_events: tally.projections,
        relaxed_n: tally.relaxed_n,
        handovers,
    }
}

/// Nearest-rank percentile; 0 for an empty sample.
pub fn percentile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Write traces as JSON lines after a header object.
pub fn write_trace_jsonl(out: &mut dyn Write, header: &serde_json::Value, slots: &[SlotTrace]) -> Result<()> {
    let io = |e| crate::Error::io("trace", e);
    serde_json::to_writer(&mut *out, &serde_json::json!({ "header": header }))?;
    out.write_all(b"\n").map_err(io)?;
    for s in slots {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}
