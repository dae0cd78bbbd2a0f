//! Score-function training of the neural policy against episode latency.

use super::neural::{NeuralPolicy, PolicyParams};
use crate::allocgraph::context::{AllocContext, BeamSlot};
use crate::allocgraph::generate::{generate_allocation, DecodeMode, Decision};
use crate::allocgraph::power::PowerUpdateConfig;
use crate::error::Result;
use crate::geom::Vec3;
use crate::ids::UtId;
use crate::rf::mix;
use crate::units::EARTH_RADIUS_M;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct Episode {
    pub latency: f64,
    pub decisions: Vec<Decision>,
}

/// Source of randomized training episodes; must be deterministic given the RNG.
pub trait Environment: Sync {
    fn rollout(&self, policy: &NeuralPolicy, rng: &mut ChaCha8Rng) -> Result<Episode>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    /// Weight of the old value in the moving-average baseline.
    pub baseline_decay: f64,
    /// Rescale the gradient when its Euclidean norm exceeds this.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 200, learning_rate: 1e-3, episodes_per_update: 1, baseline_decay: 0.9, max_grad_norm: Some(10.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub mean_latency: f64,
    pub baseline: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final parameters, or the last finite ones when training diverged.
    pub params: PolicyParams,
    pub log: Vec<TrainLogRow>,
    pub diverged: Option<(usize, String)>,
}

pub fn train(env: &dyn Environment, init: PolicyParams, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let mut policy = NeuralPolicy::new(init);
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut baseline: Option<f64> = None;
    let k = cfg.episodes_per_update.max(1);
    for it in 0..cfg.iterations {
        let episodes: Vec<Episode> = (0..k)
            .into_par_iter()
            .map(|e| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, it as u64, e as u64]));
                env.rollout(&policy, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mean = episodes.iter().map(|e| e.latency).sum::<f64>() / k as f64;
        let b = baseline.unwrap_or(mean);
        let mut grad = vec![0.0; policy.params.num_params()];
        for ep in &episodes {
            let adv = ep.latency - b;
            if adv == 0.0 {
                continue;
            }
            for d in &ep.decisions {
                let (_, g) = policy.log_prob_grad(d);
                for (acc, x) in grad.iter_mut().zip(g) {
                    *acc += adv * x / k as f64;
                }
            }
        }
        let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        log.push(TrainLogRow { iteration: it, mean_latency: mean, baseline: b, grad_norm: norm });
        if !norm.is_finite() {
            return Ok(TrainOutcome { params: policy.params, log, diverged: Some((it, "non-finite gradient".into())) });
        }
        if let Some(cap) = cfg.max_grad_norm {
            if norm > cap {
                grad.iter_mut().for_each(|x| *x *= cap / norm);
            }
        }
        let mut theta = policy.params.flat();
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.learning_rate * g;
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Ok(TrainOutcome { params: policy.params, log, diverged: Some((it, "non-finite parameters after update".into())) });
        }
        policy.params.set_flat(&theta);
        baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * mean);
    }
    Ok(TrainOutcome { params: policy.params, log, diverged: None })
}

/// Two beams, one channel, one channel per beam: latency is `good` when the
/// first node choice is beam 0 and `bad` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    pub good: f64,
    pub bad: f64,
}

impl Default for BanditEnv {
    fn default() -> Self {
        Self { good: 1.0, bad: 10.0 }
    }
}

impl BanditEnv {
    pub fn context() -> AllocContext {
        let p0 = Vec3::new(1.0, 0.0, 0.0) * EARTH_RADIUS_M;
        let p1 = Vec3::new(0.995, 0.0998, 0.0).normalize() * EARTH_RADIUS_M;
        let beams = vec![
            BeamSlot { ut: Some(UtId(0)), position: p0, budget_w: 0.01, q_bits: 5e7, tau: 2.0 },
            BeamSlot { ut: Some(UtId(1)), position: p1, budget_w: 0.01, q_bits: 2e7, tau: 8.0 },
        ];
        AllocContext {
            num_beams: 2,
            num_channels: 1,
            max_channels: 1,
            beams,
            bandwidth_hz: 250e6,
            noise_w: 1e-12,
            slot_s: 1e-3,
            gain: vec![1e-9, 1e-12, 1e-12, 1e-9],
            inter: vec![0.0; 2],
            xi_db: vec![0.5; 2],
            path_loss_db: vec![169.0; 2],
            gt_dbi: vec![40.0; 2],
            gr_dbi: vec![35.0; 2],
            eirp_cap_w: 1.0,
            total_budget_w: 0.02,
            protected: Vec::new(),
        }
    }
}

impl Environment for BanditEnv {
    fn rollout(&self, policy: &NeuralPolicy, rng: &mut ChaCha8Rng) -> Result<Episode> {
        let ctx = Self::context();
        let out = generate_allocation(&ctx, policy, DecodeMode::Sample, rng, &PowerUpdateConfig::default(), true)?;
        let first = out.trace.channels[0].steps.first().and_then(|s| s.chosen);
        let latency = if first == Some(0) { self.good } else { self.bad };
        Ok(Episode { latency, decisions: out.decisions })
    }
}
