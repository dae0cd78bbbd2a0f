//! Latency-weighted clustering of backlogged terminals, one served terminal
//! per beam, and the split of the satellite budget across beams.

use crate::geom::{central_angle, SatelliteState, Vec3};
use crate::ids::UtId;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// A backlogged terminal competing for a beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtCandidate {
    pub id: UtId,
    /// Ground position (any radius; only the direction matters).
    pub position: Vec3,
    /// Waiting clock τ in slots.
    pub tau: f64,
    pub q_bits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once no centre moves more than this many radians.
    pub tol_rad: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iters: 50, tol_rad: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Unit centres, one per beam.
    pub centers: Vec<Vec3>,
    /// Cluster index of each candidate, in input order.
    pub membership: Vec<usize>,
    pub iterations: usize,
    /// Weighted cost Σ τ·(1 − cos d) after each assignment step.
    pub cost_history: Vec<f64>,
}

impl ClusterState {
    pub fn members(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.membership.iter().enumerate().filter(move |(_, &c)| c == k).map(|(i, _)| i)
    }
}

/// Ordering used for seeding and selection: higher τ, then higher Q, then lower id.
pub fn priority_cmp(a: &UtCandidate, b: &UtCandidate) -> Ordering {
    b.tau
        .partial_cmp(&a.tau)
        .unwrap_or(Ordering::Equal)
        .then(b.q_bits.partial_cmp(&a.q_bits).unwrap_or(Ordering::Equal))
        .then(a.id.cmp(&b.id))
}

fn nearest(p: &Vec3, centers: &[Vec3]) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = p.dot(c);
        if d > best_dot {
            best_dot = d;
            best = k;
        }
    }
    best
}

pub fn clustering_cost(uts: &[UtCandidate], centers: &[Vec3], membership: &[usize]) -> f64 {
    uts.iter().zip(membership).map(|(u, &k)| u.tau * (1.0 - u.position.normalize().dot(&centers[k]))).sum()
}

/// Weighted spherical K-means with `num_beams` clusters seeded at the
/// highest-priority terminals.
pub fn weighted_kmeans(uts: &[UtCandidate], num_beams: usize, cfg: &KMeansConfig) -> ClusterState {
    if uts.is_empty() || num_beams == 0 {
        return ClusterState { centers: Vec::new(), membership: Vec::new(), iterations: 0, cost_history: Vec::new() };
    }
    let units: Vec<Vec3> = uts.iter().map(|u| u.position.normalize()).collect();
    let mut order: Vec<usize> = (0..uts.len()).collect();
    order.sort_by(|&a, &b| priority_cmp(&uts[a], &uts[b]));
    let k = num_beams.min(uts.len());
    let mut centers: Vec<Vec3> = order[..k].iter().map(|&i| units[i]).collect();

    let mut membership = vec![0usize; uts.len()];
    let mut cost_history = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iters.max(1) {
        iterations += 1;
        for (i, p) in units.iter().enumerate() {
            membership[i] = nearest(p, &centers);
        }
        cost_history.push(clustering_cost(uts, &centers, &membership));

        let mut moved: f64 = 0.0;
        for (c, center) in centers.iter_mut().enumerate() {
            let mut acc = Vec3::zeros();
            let mut plain = Vec3::zeros();
            let mut weight = 0.0;
            for (i, _) in membership.iter().enumerate().filter(|(_, &m)| m == c) {
                acc += units[i] * uts[i].tau;
                plain += units[i];
                weight += uts[i].tau;
            }
            let sum = if weight > 0.0 { acc } else { plain };
            if sum.norm() > 1e-12 {
                let next = sum.normalize();
                moved = moved.max(central_angle(center, &next));
                *center = next;
            }
        }
        if moved <= cfg.tol_rad {
            break;
        }
    }
    // Centres may have moved after the last assignment; keep membership consistent.
    for (i, p) in units.iter().enumerate() {
        membership[i] = nearest(p, &centers);
    }
    centers.resize(num_beams, centers[0]);
    ClusterState { centers, membership, iterations, cost_history }
}

/// Which terminal each spot beam serves this slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamAssignment {
    pub serving: Vec<Option<UtId>>,
}

impl BeamAssignment {
    pub fn idle(num_beams: usize) -> Self {
        Self { serving: vec![None; num_beams] }
    }

    pub fn num_beams(&self) -> usize {
        self.serving.len()
    }

    pub fn beam_of(&self, ut: UtId) -> Option<usize> {
        self.serving.iter().position(|s| *s == Some(ut))
    }

    pub fn active_beams(&self) -> impl Iterator<Item = (usize, UtId)> + '_ {
        self.serving.iter().enumerate().filter_map(|(b, s)| s.map(|u| (b, u)))
    }
}

/// Highest-priority member of each cluster; empty clusters leave the beam idle.
pub fn select_serving_uts(uts: &[UtCandidate], clusters: &ClusterState, num_beams: usize) -> BeamAssignment {
    let mut serving = vec![None; num_beams];
    for (b, slot) in serving.iter_mut().enumerate().take(clusters.centers.len()) {
        *slot = clusters.members(b).min_by(|&i, &j| priority_cmp(&uts[i], &uts[j])).map(|i| uts[i].id);
    }
    BeamAssignment { serving }
}

/// P_{s,b} = P_s · Q_{u(b)} / Σ Q over served terminals.
pub fn split_beam_power(total_w: f64, assignment: &BeamAssignment, q_of: impl Fn(UtId) -> f64) -> Vec<f64> {
    let qs: Vec<f64> = assignment.serving.iter().map(|s| s.map_or(0.0, |u| q_of(u).max(0.0))).collect();
    let sum: f64 = qs.iter().sum();
    if sum <= 0.0 {
        return vec![0.0; qs.len()];
    }
    qs.iter().map(|q| total_w * q / sum).collect()
}

/// Aim each serving beam at its terminal; idle beams return to nadir.
pub fn point_beams(sat: &mut SatelliteState, assignment: &BeamAssignment, position_of: impl Fn(UtId) -> Vec3) {
    let nadir = sat.nadir();
    let pos = sat.position;
    for (b, beam) in sat.beams.iter_mut().skip(1).enumerate() {
        beam.direction = match assignment.serving.get(b).copied().flatten() {
            Some(u) => (position_of(u) - pos).normalize(),
            None => nadir,
        };
    }
}
