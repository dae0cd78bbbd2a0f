//! Satellites, terminals and protected users of a run.

use super::config::{NeighborTopology, ProtectedLocation, ScenarioConfig, Topology, WalkerTopology};
use crate::error::{Error, Result};
use crate::geom::{
    associate_satellite, build_walker_delta, elevation_angle, point_at, propagate, sample_in_cap, ConstellationState, GroundPosition, SatelliteState, Vec3, WalkerPhasing,
};
use crate::ids::{SatId, UtId};
use crate::interference::ProtectedUser;
use crate::rf::mix;
use crate::traffic::QueueState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Independent random streams derived from the run seed.
pub mod stream {
    pub const NEIGHBOR_PLACEMENT: u64 = 1;
    pub const HOTSPOTS: u64 = 2;
    pub const TERMINALS: u64 = 3;
    pub const PROTECTED: u64 = 4;
    pub const TRAFFIC: u64 = 5;
    pub const FADING: u64 = 6;
    pub const POLICY: u64 = 7;
    pub const POLICY_INIT: u64 = 8;
}

pub fn rng_for(seed: u64, words: &[u64]) -> ChaCha8Rng {
    let mut all = vec![seed];
    all.extend_from_slice(words);
    ChaCha8Rng::seed_from_u64(mix(&all))
}

#[derive(Debug, Clone)]
pub struct World {
    /// Snapshot for the current slot.
    pub constellation: ConstellationState,
    base: ConstellationState,
    moving: bool,
    pub uts: Vec<GroundPosition>,
    pub initial_owner: Vec<SatId>,
    /// Satellites and terminals whose service is reported; `None` means every
    /// satellite that owns a terminal.
    pub measured_sats: Option<Vec<SatId>>,
    pub measured_uts: Vec<UtId>,
    pub protected: Vec<ProtectedUser>,
}

impl World {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        match &cfg.topology {
            Topology::Neighbors(n) => neighbor_scenario(cfg, n),
            Topology::Walker(w) => walker_scenario(cfg, w),
        }
    }

    /// Move satellites to slot `t`.
    pub fn advance(&mut self, t: u64, slot_s: f64) {
        if self.moving {
            self.constellation = propagate(&self.base, t, slot_s);
        }
    }

    /// Hand terminals whose serving satellite dropped below the minimum
    /// elevation to a new satellite. Returns the number of handovers.
    pub fn handover(&self, queues: &mut QueueState, capacity_bits: f64, slot_s: f64) -> Result<usize> {
        let min_el = self.constellation.config.min_elevation_deg;
        let mut n = 0;
        for i in 0..self.uts.len() {
            let owner = queues.queues[i].owner;
            let sat = self.constellation.satellite(owner).ok_or_else(|| Error::domain(format!("unknown satellite {owner}")))?;
            if elevation_angle(&self.uts[i], &sat.position)? >= min_el {
                continue;
            }
            let to = associate_satellite(&self.uts[i], &self.constellation, slot_s)?;
            queues.handover_transfer(UtId(i), to, capacity_bits);
            n += 1;
        }
        Ok(n)
    }

    /// Protected users above the minimum elevation of `sat`.
    pub fn protected_in_view(&self, sat: &SatelliteState) -> Vec<ProtectedUser> {
        let min_el = self.constellation.config.min_elevation_deg;
        self.protected.iter().filter(|r| elevation_angle(&r.position, &sat.position).map(|e| e >= min_el).unwrap_or(false)).cloned().collect()
    }
}

fn sample_visible<R: Rng>(center: &Vec3, half_angle: f64, sat: &Vec3, min_el: f64, rng: &mut R) -> Result<GroundPosition> {
    let r = crate::units::EARTH_RADIUS_M;
    for _ in 0..1000 {
        let g = GroundPosition { position: sample_in_cap(center, half_angle, r, rng) };
        if elevation_angle(&g, sat)? >= min_el {
            return Ok(g);
        }
    }
    Err(Error::config("could not place a terminal inside the serving footprint; check hotspot settings"))
}

fn protected_users(cfg: &ScenarioConfig, focal: &Vec3, lambda: f64) -> Result<Vec<ProtectedUser>> {
    let mut rng = rng_for(cfg.seed, &[stream::PROTECTED]);
    let r = cfg.constellation.earth_radius_m;
    cfg.protected_specs()?
        .into_iter()
        .map(|s| {
            let position = match s.location {
                ProtectedLocation::Fixed { lat_deg, lon_deg } => GroundPosition::from_lat_lon_deg(lat_deg, lon_deg, r),
                ProtectedLocation::RandomNearFocal { max_angle_frac } => GroundPosition { position: sample_in_cap(focal, max_angle_frac * lambda, r, &mut rng) },
            };
            let mut u = ProtectedUser::new(s.id, position, Default::default(), s.rx, s.pointing, s.kappa_dbw_m2);
            u.channel_schedule = s.channels.clone();
            Ok(u)
        })
        .collect()
}

pub fn neighbor_scenario(cfg: &ScenarioConfig, n: &NeighborTopology) -> Result<World> {
    let cc = &cfg.constellation;
    let re = cc.earth_radius_m;
    let radius = cc.orbit_radius_m();
    let lambda = cc.footprint_half_angle_rad();
    let beams = cc.spot_beams;
    let c0 = GroundPosition::from_lat_lon_deg(n.center_lat_deg, n.center_lon_deg, re).position;

    let mut sats = vec![SatelliteState::stationary(SatId(0), c0.normalize() * radius, beams)];
    let mut place = rng_for(cfg.seed, &[stream::NEIGHBOR_PLACEMENT]);
    for k in 0..n.num_neighbors {
        let frac = place.gen_range(n.offset_frac[0]..=n.offset_frac[1]);
        let az = place.gen_range(0.0..TAU);
        sats.push(SatelliteState::stationary(SatId(k + 1), point_at(&c0, frac * lambda, az, radius), beams));
    }

    let mut hs = rng_for(cfg.seed, &[stream::HOTSPOTS]);
    let centers: Vec<Vec3> = (0..n.hotspots).map(|_| sample_in_cap(&c0, n.hotspot_spread_frac * lambda, re, &mut hs)).collect();
    let spot = n.hotspot_radius_deg.to_radians();
    let min_el = cc.min_elevation_deg;

    let mut uts = Vec::new();
    let mut owner = Vec::new();
    for (k, sat) in sats.iter().enumerate() {
        let count = if k == 0 { n.num_uts } else { n.neighbor_uts.unwrap_or(n.num_uts) };
        let mut rng = rng_for(cfg.seed, &[stream::TERMINALS, k as u64]);
        let sub = sat.position.normalize() * re;
        for i in 0..count {
            let g = if centers.is_empty() { sample_visible(&sub, lambda, &sat.position, min_el, &mut rng)? } else { sample_visible(&centers[i % centers.len()], spot, &sat.position, min_el, &mut rng)? };
            uts.push(g);
            owner.push(sat.id);
        }
    }
    let measured_uts = (0..n.num_uts).map(UtId).collect();
    let mut constellation = ConstellationState { config: cc.clone(), satellites: sats, slot: 0 };
    constellation.refresh_neighbors();
    let protected = protected_users(cfg, &c0, lambda)?;
    Ok(World { base: constellation.clone(), constellation, moving: false, uts, initial_owner: owner, measured_sats: Some(vec![SatId(0)]), measured_uts, protected })
}

pub fn walker_scenario(cfg: &ScenarioConfig, w: &WalkerTopology) -> Result<World> {
    let cc = &cfg.constellation;
    let base = build_walker_delta(cc, WalkerPhasing(w.phasing))?;
    let center = GroundPosition::from_lat_lon_deg(w.region_lat_deg, w.region_lon_deg, cc.earth_radius_m).position;
    let mut rng = rng_for(cfg.seed, &[stream::TERMINALS, 0]);
    let uts: Vec<GroundPosition> = (0..w.num_uts).map(|_| GroundPosition { position: sample_in_cap(&center, w.region_radius_deg.to_radians(), cc.earth_radius_m, &mut rng) }).collect();
    let owner = uts.iter().map(|u| associate_satellite(u, &base, cfg.slot_s)).collect::<Result<Vec<_>>>()?;
    let protected = protected_users(cfg, &center, cc.footprint_half_angle_rad())?;
    Ok(World {
        constellation: base.clone(),
        base,
        moving: true,
        measured_uts: (0..uts.len()).map(UtId).collect(),
        uts,
        initial_owner: owner,
        measured_sats: None,
        protected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::central_angle;

    fn cfg(neighbors: usize, hotspots: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::with_seed(3);
        c.topology = Topology::Neighbors(NeighborTopology { num_neighbors: neighbors, num_uts: 30, hotspots, ..Default::default() });
        c
    }

    #[test]
    fn neighbor_builder_sets_exact_neighbour_count() {
        for l in [0, 2, 8] {
            let w = World::build(&cfg(l, 0)).unwrap();
            assert_eq!(w.constellation.satellites.len(), l + 1);
            assert_eq!(w.constellation.satellites[0].neighbors.len(), l);
        }
    }

    #[test]
    fn larger_neighbour_sets_extend_smaller_ones() {
        let a = World::build(&cfg(2, 3)).unwrap();
        let b = World::build(&cfg(6, 3)).unwrap();
        for k in 0..3 {
            assert_eq!(a.constellation.satellites[k].position, b.constellation.satellites[k].position);
        }
        assert_eq!(a.uts[..60], b.uts[..60]);
    }

    #[test]
    fn terminals_are_inside_their_owner_footprint() {
        let c = cfg(4, 4);
        let w = World::build(&c).unwrap();
        let lambda = c.constellation.footprint_half_angle_rad();
        for (u, s) in w.uts.iter().zip(&w.initial_owner) {
            let sat = w.constellation.satellite(*s).unwrap();
            assert!(central_angle(&u.position, &sat.position) <= lambda + 1e-9);
        }
    }

    #[test]
    fn walker_terminals_have_an_owner() {
        let mut c = ScenarioConfig::with_seed(1);
        c.topology = Topology::Walker(WalkerTopology { num_uts: 20, ..Default::default() });
        let w = World::build(&c).unwrap();
        assert_eq!(w.initial_owner.len(), 20);
        for (u, s) in w.uts.iter().zip(&w.initial_owner) {
            let sat = w.constellation.satellite(*s).unwrap();
            assert!(elevation_angle(u, &sat.position).unwrap() >= 25.0);
        }
    }
}
