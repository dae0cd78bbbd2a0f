//! Parameter sweeps over seeds and strategies, tidy summaries, named
//! presets, and the simulator-backed training environment.

use super::config::{NeighborTopology, ProtectedLocation, ProtectedUserSpec, ScenarioConfig, Strategy, Topology};
use super::engine::{run_episode, Metrics, PolicyHandle, RunOptions};
use crate::allocgraph::generate::DecodeMode;
use crate::error::{Error, Result};
use crate::interference::Pointing;
use crate::policy::{Environment, Episode, NeuralPolicy};
use crate::rf::{AtmosphericModel, RxAntennaPattern};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Neighbors,
    Power,
    Beams,
    Uts,
    ArrivalRate,
    MaxChannels,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Neighbors => "neighbors",
            Axis::Power => "power",
            Axis::Beams => "beams",
            Axis::Uts => "uts",
            Axis::ArrivalRate => "arrival_rate",
            Axis::MaxChannels => "max_channels",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "neighbors" => Axis::Neighbors,
            "power" => Axis::Power,
            "beams" => Axis::Beams,
            "uts" => Axis::Uts,
            "arrival_rate" => Axis::ArrivalRate,
            "max_channels" => Axis::MaxChannels,
            _ => return Err(Error::config(format!("unknown sweep axis {s:?}"))),
        })
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("{what} must be a non-negative integer, got {v}")))
    }
}

/// Set the swept parameter on a config.
pub fn apply_axis(cfg: &mut ScenarioConfig, axis: Axis, v: f64) -> Result<()> {
    match axis {
        Axis::Neighbors => match &mut cfg.topology {
            Topology::Neighbors(n) => n.num_neighbors = count(v, "neighbors")?,
            Topology::Walker(_) => return Err(Error::config("the neighbors axis needs the neighbors topology")),
        },
        Axis::Power => cfg.power_scale = v,
        Axis::Beams => cfg.constellation.spot_beams = count(v, "beams")?,
        Axis::Uts => match &mut cfg.topology {
            Topology::Neighbors(n) => n.num_uts = count(v, "uts")?,
            Topology::Walker(w) => w.num_uts = count(v, "uts")?,
        },
        Axis::ArrivalRate => cfg.traffic.arrival_rate_pps = v,
        Axis::MaxChannels => cfg.allocation.max_channels = count(v, "max_channels")?,
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub base: ScenarioConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub axis_value: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Every (value, strategy, seed) combination, run in parallel and returned
/// in that nesting order. `policy` overrides the config's policy.
pub fn run_sweep(spec: &SweepSpec, policy: Option<&PolicyHandle>) -> Result<Vec<SweepRun>> {
    let mut jobs = Vec::new();
    for &v in &spec.values {
        for &s in &spec.strategies {
            for &seed in &spec.seeds {
                jobs.push((v, s, seed));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(v, s, seed)| {
            let mut cfg = spec.base.clone();
            apply_axis(&mut cfg, spec.axis, v)?;
            cfg.strategy = s;
            cfg.seed = seed;
            let owned;
            let p = match policy {
                Some(p) => p,
                None => {
                    owned = PolicyHandle::from_config(&cfg)?;
                    &owned
                }
            };
            let out = run_episode(&cfg, p, &RunOptions::default())?;
            Ok(SweepRun { axis_value: v, strategy: s, seed, metrics: out.metrics })
        })
        .collect()
}

/// One (value, strategy, metric) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub sweep: String,
    pub axis: Axis,
    pub axis_value: f64,
    pub strategy: Strategy,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub seeds: usize,
}

pub const SUMMARY_METRICS: &[&str] = &[
    "throughput_per_sat_bps",
    "throughput_per_ut_bps",
    "mean_latency_slots",
    "mean_latency_s",
    "p95_latency_slots",
    "expiry_rate",
    "mean_edges_per_active_beam",
    "violations_epfd",
    "min_epfd_margin_db",
];

/// Sample mean and standard error of the mean; the error is 0 for fewer
/// than two samples or a non-finite mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn summarize(spec: &SweepSpec, runs: &[SweepRun], metrics: &[&str]) -> Vec<TidyRow> {
    let mut out = Vec::new();
    for &v in &spec.values {
        for &s in &spec.strategies {
            let cell: Vec<&SweepRun> = runs.iter().filter(|r| r.axis_value == v && r.strategy == s).collect();
            for &m in metrics {
                let xs: Vec<f64> = cell.iter().filter_map(|r| r.metrics.get(m)).collect();
                let (mean, stderr) = mean_stderr(&xs);
                out.push(TidyRow { sweep: spec.name.clone(), axis: spec.axis, axis_value: v, strategy: s, metric: m.to_string(), mean, stderr, seeds: xs.len() });
            }
        }
    }
    out
}

/// Look up a summary cell.
pub fn cell(rows: &[TidyRow], value: f64, strategy: Strategy, metric: &str) -> Option<(f64, f64)> {
    rows.iter().find(|r| r.axis_value == value && r.strategy == strategy && r.metric == metric).map(|r| (r.mean, r.stderr))
}

/// Dense-neighbourhood operating point used by the presets: a power-limited
/// satellite whose terminals sit in a few hotspots shared with overlapping
/// neighbours.
pub fn regime_base(seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::with_seed(seed);
    c.num_slots = 20;
    c.slot_s = 0.01;
    c.constellation.spot_beams = 4;
    c.rf.atmosphere = AtmosphericModel::Deterministic { loss_db: 0.5 };
    c.rf.limits.total_budget_w = Some(0.04);
    c.traffic.arrival_rate_pps = 200.0;
    c.traffic.packet_bits = 1e6;
    c.traffic.buffer_capacity_bits = 20e6;
    c.traffic.ttl_slots = 50;
    c.allocation.max_channels = 2;
    c.topology = Topology::Neighbors(NeighborTopology {
        num_neighbors: 2,
        num_uts: 24,
        neighbor_uts: Some(24),
        hotspots: 1,
        hotspot_radius_deg: 0.05,
        hotspot_spread_frac: 0.3,
        offset_frac: [0.03, 0.3],
        ..Default::default()
    });
    c
}

/// Noise-limited variant of [`regime_base`] used for the power and beam sweeps.
pub fn low_power_base(seed: u64) -> ScenarioConfig {
    let mut c = regime_base(seed);
    c.rf.limits.total_budget_w = Some(0.008);
    c
}

/// Lighter-load variant of [`regime_base`] for latency sweeps, long enough
/// for queues to settle.
pub fn latency_base(seed: u64) -> ScenarioConfig {
    let mut c = regime_base(seed);
    c.num_slots = 50;
    c.traffic.arrival_rate_pps = 100.0;
    c
}

/// A zenith-pointing protected terminal near the focal sub-point,
/// listening on every channel.
pub fn protected_near_focal(num_channels: usize) -> ProtectedUserSpec {
    ProtectedUserSpec {
        id: 0,
        location: ProtectedLocation::RandomNearFocal { max_angle_frac: 0.2 },
        channels: vec![(0..num_channels).collect()],
        pointing: Pointing::Zenith,
        kappa_dbw_m2: -160.0,
        rx: RxAntennaPattern::default(),
    }
}

pub const PRESETS: &[&str] = &["fig3", "fig4", "fig5"];

/// Named sweep families; `seeds` seeds are used per cell.
/// `fig3`: neighbour count, without and with a protected terminal.
/// `fig4`: power scale and beam count. `fig5`: terminal count and arrival rate.
pub fn preset(name: &str, seeds: usize) -> Result<Vec<SweepSpec>> {
    let seeds: Vec<u64> = (1..=seeds as u64).collect();
    let base = regime_base(0);
    let mk = |name: &str, base: ScenarioConfig, axis: Axis, values: Vec<f64>| SweepSpec { name: name.to_string(), base, axis, values, strategies: Strategy::ALL.to_vec(), seeds: seeds.clone() };
    Ok(match name {
        "fig3" => {
            let mut protected = base.clone();
            protected.protected.users.push(protected_near_focal(protected.rf.plan.num_channels));
            vec![
                mk("fig3_neighbors", base, Axis::Neighbors, vec![2.0, 4.0, 6.0, 8.0]),
                mk("fig3_neighbors_protected", protected, Axis::Neighbors, vec![2.0, 4.0, 6.0, 8.0]),
            ]
        }
        "fig4" => {
            let low = low_power_base(0);
            let b = low.constellation.spot_beams as f64;
            vec![mk("fig4_power", low.clone(), Axis::Power, vec![1.0, 2.0]), mk("fig4_beams", low, Axis::Beams, vec![b, 2.0 * b])]
        }
        "fig5" => {
            let lat = latency_base(0);
            let r = lat.traffic.arrival_rate_pps;
            vec![mk("fig5_uts", lat.clone(), Axis::Uts, vec![12.0, 24.0, 48.0]), mk("fig5_arrival_rate", lat, Axis::ArrivalRate, vec![r / 2.0, r, 2.0 * r])]
        }
        _ => return Err(Error::config(format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))),
    })
}

/// Training episodes drawn from a scenario: each rollout reseeds the
/// scenario and returns the mean terminal latency of a sampled run.
#[derive(Debug, Clone)]
pub struct ScenarioEnv {
    pub base: ScenarioConfig,
}

impl Environment for ScenarioEnv {
    fn rollout(&self, policy: &NeuralPolicy, rng: &mut ChaCha8Rng) -> Result<Episode> {
        let mut cfg = self.base.clone();
        cfg.seed = rng.gen();
        cfg.strategy = Strategy::Proposed;
        let out = run_episode(&cfg, policy, &RunOptions { decode: Some(DecodeMode::Sample), record_decisions: true, trace: false })?;
        Ok(Episode { latency: out.metrics.mean_latency_slots, decisions: out.decisions })
    }
}
