//! Decision functions for edge generation: the neural scorers, a heuristic
//! fallback, and the policy-gradient trainer.

pub mod heuristic;
pub mod neural;
pub mod train;

pub use heuristic::HeuristicPolicy;
pub use neural::{NeuralPolicy, PolicyInit, PolicyParams};
pub use train::{train, BanditEnv, Environment, Episode, TrainConfig, TrainLogRow, TrainOutcome};

use crate::allocgraph::generate::Decision;

/// Largest relative error between the analytic gradient of log π(decision)
/// and a central finite difference, measured as ‖g − ĝ‖∞ / max(‖ĝ‖∞, floor).
pub fn gradient_check(policy: &NeuralPolicy, decision: &Decision, eps: f64) -> f64 {
    let (_, analytic) = policy.log_prob_grad(decision);
    let theta = policy.params.flat();
    let mut probe = policy.clone();
    let mut numeric = vec![0.0; theta.len()];
    let mut work = theta.clone();
    for i in 0..theta.len() {
        work[i] = theta[i] + eps;
        probe.params.set_flat(&work);
        let up = probe.log_prob(decision);
        work[i] = theta[i] - eps;
        probe.params.set_flat(&work);
        let down = probe.log_prob(decision);
        work[i] = theta[i];
        numeric[i] = (up - down) / (2.0 * eps);
    }
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-8);
    let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    err / scale
}
