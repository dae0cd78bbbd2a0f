//! Training-free policy: keep adding while the best admissible marginal gain
//! beats a threshold, and give the channel to the beam with the largest gain.
//! A co-channel edge is declined when its victims would absorb most of the
//! newcomer's own gain; such beams do better on a later, emptier channel.

use crate::allocgraph::generate::{AllocationPolicy, PolicyInput, CAND_FEASIBLE};
use crate::error::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicPolicy {
    /// Minimum marginal sum-rate gain, bit/s, for adding another edge.
    pub threshold_bps: f64,
    /// Smallest accepted ratio of net gain to the beam's own gain.
    pub min_efficiency: f64,
}

impl Default for HeuristicPolicy {
    fn default() -> Self {
        Self { threshold_bps: 0.0, min_efficiency: 0.5 }
    }
}

impl HeuristicPolicy {
    /// Best admissible beam: EPFD-feasible beams first, then largest gain,
    /// then lowest index.
    pub fn best_beam(input: &PolicyInput) -> Option<usize> {
        let mut best: Option<(usize, bool, f64)> = None;
        for b in 0..input.candidates.len() {
            if !input.admissible[b] {
                continue;
            }
            let feas = input.candidates[b][CAND_FEASIBLE] > 0.5;
            let gain = input.gains_bps[b];
            let better = match best {
                None => true,
                Some((_, bf, bg)) => (feas && !bf) || (feas == bf && gain > bg),
            };
            if better {
                best = Some((b, feas, gain));
            }
        }
        best.map(|x| x.0)
    }

    fn efficient(&self, input: &PolicyInput, b: usize) -> bool {
        match input.own_gains_bps.get(b) {
            Some(&own) if own > 0.0 => input.gains_bps[b] >= self.min_efficiency * own,
            _ => true,
        }
    }
}

impl AllocationPolicy for HeuristicPolicy {
    fn add_edge_probability(&self, input: &PolicyInput) -> Result<f64> {
        Ok(match Self::best_beam(input) {
            Some(b) if input.candidates[b][CAND_FEASIBLE] > 0.5 && input.gains_bps[b] > self.threshold_bps && self.efficient(input, b) => 1.0,
            _ => 0.0,
        })
    }

    fn node_distribution(&self, input: &PolicyInput) -> Result<Vec<f64>> {
        let mut d = vec![0.0; input.candidates.len()];
        if let Some(b) = Self::best_beam(input) {
            d[b] = 1.0;
        }
        Ok(d)
    }
}
