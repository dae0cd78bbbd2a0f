//! Constellation construction, circular-orbit propagation and link geometry.
//!
//! Positions live in an Earth-centred inertial frame with the Earth treated as
//! an ideal sphere. Earth rotation is neglected: a ground point keeps its
//! inertial coordinates for the whole run, and a satellite's footprint is the
//! spherical cap where its elevation is at least the minimum elevation angle.

use crate::error::{Error, Result};
use crate::ids::SatId;
use crate::units::{EARTH_MU, EARTH_RADIUS_M};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationConfig {
    pub num_satellites: usize,
    pub num_planes: usize,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    /// Minimum elevation angle bounding each footprint.
    pub min_elevation_deg: f64,
    pub earth_radius_m: f64,
    /// Steerable data beams per satellite (the wide control beam is extra).
    pub spot_beams: usize,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self {
            num_satellites: 240,
            num_planes: 15,
            altitude_m: 550e3,
            inclination_deg: 48.0,
            min_elevation_deg: 25.0,
            earth_radius_m: EARTH_RADIUS_M,
            spot_beams: 16,
        }
    }
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_planes == 0 || self.num_satellites == 0 {
            return Err(Error::config("constellation needs at least one plane and one satellite"));
        }
        if self.num_satellites % self.num_planes != 0 {
            return Err(Error::config(format!(
                "num_satellites ({}) is not divisible by num_planes ({})",
                self.num_satellites, self.num_planes
            )));
        }
        if !(self.altitude_m > 0.0) || !self.altitude_m.is_finite() {
            return Err(Error::config("altitude_m must be positive"));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            return Err(Error::config("min_elevation_deg must lie in (0, 90)"));
        }
        if !(self.earth_radius_m > 0.0) {
            return Err(Error::config("earth_radius_m must be positive"));
        }
        if !self.inclination_deg.is_finite() {
            return Err(Error::config("inclination_deg must be finite"));
        }
        Ok(())
    }

    pub fn orbit_radius_m(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }

    pub fn orbital_period_s(&self) -> f64 {
        TAU * (self.orbit_radius_m().powi(3) / EARTH_MU).sqrt()
    }

    /// Earth-central half-angle of the footprint cap.
    pub fn footprint_half_angle_rad(&self) -> f64 {
        footprint_half_angle_rad(self.orbit_radius_m(), self.earth_radius_m, self.min_elevation_deg)
    }
}

/// Central angle between the sub-satellite point and the footprint edge:
/// `acos(R cos θ / r) − θ`.
pub fn footprint_half_angle_rad(orbit_radius_m: f64, earth_radius_m: f64, min_elevation_deg: f64) -> f64 {
    let theta = min_elevation_deg.to_radians();
    (earth_radius_m / orbit_radius_m * theta.cos()).acos() - theta
}

/// Walker phasing factor F: plane `p` is offset in argument of latitude by
/// `2π F p / T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WalkerPhasing(pub usize);

impl Default for WalkerPhasing {
    fn default() -> Self {
        WalkerPhasing(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularOrbit {
    pub raan_rad: f64,
    pub inclination_rad: f64,
    /// Argument of latitude at slot 0.
    pub arg_latitude0_rad: f64,
    pub radius_m: f64,
}

impl CircularOrbit {
    pub fn mean_motion_rad_s(&self) -> f64 {
        (EARTH_MU / self.radius_m.powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion_rad_s()
    }

    /// Orthonormal in-plane basis: `p̂` toward the ascending node, `q̂` 90°
    /// ahead along the direction of motion.
    fn basis(&self) -> (Vec3, Vec3) {
        let (so, co) = self.raan_rad.sin_cos();
        let (si, ci) = self.inclination_rad.sin_cos();
        (Vec3::new(co, so, 0.0), Vec3::new(-so * ci, co * ci, si))
    }

    pub fn arg_latitude_at(&self, time_s: f64) -> f64 {
        self.arg_latitude0_rad + self.mean_motion_rad_s() * time_s
    }

    pub fn position_at(&self, time_s: f64) -> Vec3 {
        let (p, q) = self.basis();
        let (su, cu) = self.arg_latitude_at(time_s).sin_cos();
        (p * cu + q * su) * self.radius_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamKind {
    /// Fixed nadir beam for control signalling; carries no data.
    Wide,
    Spot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamState {
    pub beam_id: usize,
    /// Unit boresight vector.
    pub direction: Vec3,
    pub kind: BeamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub id: SatId,
    pub position: Vec3,
    /// Wide beam first, then the spot beams in index order.
    pub beams: Vec<BeamState>,
    /// Satellites whose footprints overlap this one (L_s).
    pub neighbors: BTreeSet<SatId>,
    /// `None` for satellites pinned in place by a localized scenario.
    pub orbit: Option<CircularOrbit>,
}

impl SatelliteState {
    /// Satellite at a fixed position with nadir-pointing beams.
    pub fn stationary(id: SatId, position: Vec3, spot_beams: usize) -> Self {
        Self {
            id,
            position,
            beams: nadir_beams(&position, spot_beams),
            neighbors: BTreeSet::new(),
            orbit: None,
        }
    }

    pub fn nadir(&self) -> Vec3 {
        -self.position.normalize()
    }

    pub fn spot_beams(&self) -> impl Iterator<Item = &BeamState> {
        self.beams.iter().filter(|b| b.kind == BeamKind::Spot)
    }
}

fn nadir_beams(position: &Vec3, spot_beams: usize) -> Vec<BeamState> {
    let nadir = -position.normalize();
    let mut beams = Vec::with_capacity(spot_beams + 1);
    beams.push(BeamState { beam_id: 0, direction: nadir, kind: BeamKind::Wide });
    beams.extend((0..spot_beams).map(|b| BeamState {
        beam_id: b + 1,
        direction: nadir,
        kind: BeamKind::Spot,
    }));
    beams
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationState {
    pub config: ConstellationConfig,
    pub satellites: Vec<SatelliteState>,
    /// Slot index of the current snapshot.
    pub slot: u64,
}

impl ConstellationState {
    pub fn satellite(&self, id: SatId) -> Option<&SatelliteState> {
        self.satellites.get(id.0).filter(|s| s.id == id)
    }

    /// Footprint half-angle for a satellite at the given orbit radius.
    pub fn footprint_half_angle_for(&self, position: &Vec3) -> f64 {
        footprint_half_angle_rad(position.norm(), self.config.earth_radius_m, self.config.min_elevation_deg)
    }

    /// Recompute every satellite's overlapping-footprint neighbour set.
    pub fn refresh_neighbors(&mut self) {
        let caps: Vec<(Vec3, f64)> = self
            .satellites
            .iter()
            .map(|s| (s.position.normalize(), self.footprint_half_angle_for(&s.position)))
            .collect();
        for (i, sat) in self.satellites.iter_mut().enumerate() {
            sat.neighbors = caps
                .iter()
                .enumerate()
                .filter(|&(j, (c, l))| j != i && caps_overlap(&caps[i].0, caps[i].1, c, *l))
                .map(|(j, _)| SatId(j))
                .collect();
        }
    }
}

fn caps_overlap(a: &Vec3, la: f64, b: &Vec3, lb: f64) -> bool {
    central_angle(a, b) < la + lb
}

/// A ground point on the spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPosition {
    pub position: Vec3,
}

impl GroundPosition {
    pub fn from_lat_lon_deg(lat_deg: f64, lon_deg: f64, earth_radius_m: f64) -> Self {
        let (sl, cl) = lat_deg.to_radians().sin_cos();
        let (so, co) = lon_deg.to_radians().sin_cos();
        Self { position: Vec3::new(cl * co, cl * so, sl) * earth_radius_m }
    }

    pub fn from_unit(unit: Vec3, earth_radius_m: f64) -> Self {
        Self { position: unit.normalize() * earth_radius_m }
    }

    pub fn unit(&self) -> Vec3 {
        self.position.normalize()
    }

    pub fn latitude_deg(&self) -> f64 {
        let u = self.unit();
        u.z.clamp(-1.0, 1.0).asin().to_degrees()
    }

    pub fn longitude_deg(&self) -> f64 {
        self.position.y.atan2(self.position.x).to_degrees()
    }
}

/// Geometry of one satellite→terminal link as seen by a particular beam and
/// a particular receive antenna orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub distance_m: f64,
    pub elevation_deg: f64,
    /// Off-axis angle at the satellite between the beam boresight and the link.
    pub tx_off_axis_deg: f64,
    /// Off-axis angle at the terminal between its boresight and the link.
    pub rx_off_axis_deg: f64,
}

impl LinkGeometry {
    pub fn new(ut: &Vec3, sat: &Vec3, beam_direction: &Vec3, rx_boresight: &Vec3) -> Result<Self> {
        let distance_m = (ut - sat).norm();
        if !(distance_m > 0.0) {
            return Err(Error::domain("terminal and satellite coincide"));
        }
        Ok(Self {
            distance_m,
            elevation_deg: elevation_between(ut, sat)?,
            tx_off_axis_deg: off_axis_angle_deg(sat, beam_direction, ut)?,
            rx_off_axis_deg: off_axis_angle_deg(ut, rx_boresight, sat)?,
        })
    }

    /// Serving link with beam and terminal perfectly aligned (φ = ψ = 0).
    pub fn aligned(ut: &Vec3, sat: &Vec3) -> Result<Self> {
        let distance_m = (ut - sat).norm();
        if !(distance_m > 0.0) {
            return Err(Error::domain("terminal and satellite coincide"));
        }
        Ok(Self {
            distance_m,
            elevation_deg: elevation_between(ut, sat)?,
            tx_off_axis_deg: 0.0,
            rx_off_axis_deg: 0.0,
        })
    }
}

/// Evenly phased Walker Delta constellation at slot 0.
pub fn build_walker_delta(cfg: &ConstellationConfig, phasing: WalkerPhasing) -> Result<ConstellationState> {
    cfg.validate()?;
    let per_plane = cfg.num_satellites / cfg.num_planes;
    let total = cfg.num_satellites as f64;
    let mut satellites = Vec::with_capacity(cfg.num_satellites);
    for plane in 0..cfg.num_planes {
        let raan = TAU * plane as f64 / cfg.num_planes as f64;
        for k in 0..per_plane {
            let arg = TAU * k as f64 / per_plane as f64 + TAU * (phasing.0 * plane) as f64 / total;
            let orbit = CircularOrbit {
                raan_rad: raan,
                inclination_rad: cfg.inclination_deg.to_radians(),
                arg_latitude0_rad: arg.rem_euclid(TAU),
                radius_m: cfg.orbit_radius_m(),
            };
            let position = orbit.position_at(0.0);
            let id = SatId(satellites.len());
            satellites.push(SatelliteState {
                id,
                position,
                beams: nadir_beams(&position, cfg.spot_beams),
                neighbors: BTreeSet::new(),
                orbit: Some(orbit),
            });
        }
    }
    let mut state = ConstellationState { config: cfg.clone(), satellites, slot: 0 };
    state.refresh_neighbors();
    Ok(state)
}

/// Snapshot of the constellation at slot `t` (positions are constant within
/// a slot). Stationary satellites are left untouched.
pub fn propagate(state: &ConstellationState, t: u64, slot_s: f64) -> ConstellationState {
    let mut next = state.clone();
    let time_s = t as f64 * slot_s;
    for sat in &mut next.satellites {
        if let Some(orbit) = &sat.orbit {
            sat.position = orbit.position_at(time_s);
            let nadir = -sat.position.normalize();
            for beam in &mut sat.beams {
                if beam.kind == BeamKind::Wide {
                    beam.direction = nadir;
                }
            }
        }
    }
    next.slot = t;
    next.refresh_neighbors();
    next
}

/// Angle between two position vectors as seen from the Earth centre.
pub fn central_angle(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form stays accurate for tiny and near-antipodal angles.
    a.cross(b).norm().atan2(a.dot(b))
}

fn elevation_between(ut: &Vec3, sat: &Vec3) -> Result<f64> {
    let los = sat - ut;
    let (nu, nl) = (ut.norm(), los.norm());
    if nu == 0.0 || nl == 0.0 {
        return Err(Error::domain("elevation undefined for coincident points"));
    }
    let cos = (ut.dot(&los) / (nu * nl)).clamp(-1.0, 1.0);
    Ok(90.0 - cos.acos().to_degrees())
}

/// Elevation of satellite position `sat` seen from `u`, in degrees.
pub fn elevation_angle(u: &GroundPosition, sat: &Vec3) -> Result<f64> {
    elevation_between(&u.position, sat)
}

/// Angle at `from` between `boresight` and the ray toward `to`, in degrees.
pub fn off_axis_angle_deg(from: &Vec3, boresight: &Vec3, to: &Vec3) -> Result<f64> {
    let ray = to - from;
    let (nr, nb) = (ray.norm(), boresight.norm());
    if nr == 0.0 || nb == 0.0 {
        return Err(Error::domain("off-axis angle of a zero-length link"));
    }
    Ok(ray.cross(boresight).norm().atan2(ray.dot(boresight)).to_degrees())
}

pub fn visible_satellites(u: &GroundPosition, constellation: &ConstellationState, min_elevation_deg: f64) -> BTreeSet<SatId> {
    constellation
        .satellites
        .iter()
        .filter(|s| elevation_angle(u, &s.position).map(|e| e >= min_elevation_deg).unwrap_or(false))
        .map(|s| s.id)
        .collect()
}

/// Whole future slots during which `sat` stays at or above the minimum
/// elevation for `u`. Stationary satellites report `u64::MAX`; satellites not
/// currently visible report 0.
pub fn remaining_service_slots(u: &GroundPosition, sat: &SatelliteState, min_elevation_deg: f64, earth_radius_m: f64, now_s: f64, slot_s: f64) -> u64 {
    let lambda = footprint_half_angle_rad(sat.position.norm(), earth_radius_m, min_elevation_deg);
    let Some(orbit) = &sat.orbit else {
        let inside = central_angle(&u.position, &sat.position) <= lambda;
        return if inside { u64::MAX } else { 0 };
    };
    let (p, q) = orbit.basis();
    let uh = u.unit();
    let (a, b) = (uh.dot(&p), uh.dot(&q));
    let amp = a.hypot(b);
    let cos_lambda = lambda.cos();
    if amp < cos_lambda {
        return 0;
    }
    // û·ŝ(t) = amp·cos(arg − δ): visible while |arg − δ| ≤ γ.
    let delta = b.atan2(a);
    let phase = (orbit.arg_latitude_at(now_s) - delta + PI).rem_euclid(TAU) - PI;
    let gamma = (cos_lambda / amp).clamp(-1.0, 1.0).acos();
    if phase.abs() > gamma {
        return 0;
    }
    let remaining_s = (gamma - phase) / orbit.mean_motion_rad_s();
    (remaining_s / slot_s).floor() as u64
}

/// Pick the serving satellite: longest remaining service among visible
/// satellites, then highest elevation, then lowest id.
pub fn associate_satellite(u: &GroundPosition, constellation: &ConstellationState, slot_s: f64) -> Result<SatId> {
    let cfg = &constellation.config;
    let now_s = constellation.slot as f64 * slot_s;
    let mut best: Option<(u64, f64, SatId)> = None;
    for sat in &constellation.satellites {
        let elevation = elevation_angle(u, &sat.position)?;
        if elevation < cfg.min_elevation_deg {
            continue;
        }
        let service = remaining_service_slots(u, sat, cfg.min_elevation_deg, cfg.earth_radius_m, now_s, slot_s);
        let better = match best {
            None => true,
            Some((bs, be, _)) => service > bs || (service == bs && elevation > be),
        };
        if better {
            best = Some((service, elevation, sat.id));
        }
    }
    best.map(|(_, _, id)| id).ok_or_else(|| {
        Error::CoverageGap(format!("lat {:.3}°, lon {:.3}°", u.latitude_deg(), u.longitude_deg()))
    })
}

/// Satellites other than `s` whose footprint caps intersect the footprint of `s`.
pub fn overlapping_neighbors(s: SatId, constellation: &ConstellationState) -> BTreeSet<SatId> {
    let Some(sat) = constellation.satellite(s) else {
        return BTreeSet::new();
    };
    let la = constellation.footprint_half_angle_for(&sat.position);
    constellation
        .satellites
        .iter()
        .filter(|o| o.id != s)
        .filter(|o| caps_overlap(&sat.position, la, &o.position, constellation.footprint_half_angle_for(&o.position)))
        .map(|o| o.id)
        .collect()
}

/// Point drawn uniformly (by area) from the spherical cap of half-angle
/// `half_angle_rad` around `center`.
pub fn sample_in_cap<R: Rng + ?Sized>(center: &Vec3, half_angle_rad: f64, radius_m: f64, rng: &mut R) -> Vec3 {
    let c = center.normalize();
    let cos_min = half_angle_rad.cos();
    let cos_t: f64 = rng.gen_range(cos_min..=1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let az: f64 = rng.gen_range(0.0..TAU);
    let (e1, e2) = orthonormal_pair(&c);
    (c * cos_t + (e1 * az.cos() + e2 * az.sin()) * sin_t) * radius_m
}

/// Point at central angle `angle_rad` from `center` in azimuth `az_rad`.
pub fn point_at(center: &Vec3, angle_rad: f64, az_rad: f64, radius_m: f64) -> Vec3 {
    let c = center.normalize();
    let (e1, e2) = orthonormal_pair(&c);
    (c * angle_rad.cos() + (e1 * az_rad.cos() + e2 * az_rad.sin()) * angle_rad.sin()) * radius_m
}

fn orthonormal_pair(c: &Vec3) -> (Vec3, Vec3) {
    let helper = if c.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = c.cross(&helper).normalize();
    let e2 = c.cross(&e1);
    (e1, e2)
}
