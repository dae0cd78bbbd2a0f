//! SINR with intra- and inter-satellite co-channel interference, downlink
//! rate, and EPFD toward protected terminals.
//!
//! Spot-beam indices are 0-based and exclude the wide control beam; spot beam
//! `b` corresponds to `SatelliteState::beams[b + 1]`.

use crate::error::{Error, Result};
use crate::geom::{off_axis_angle_deg, GroundPosition, LinkGeometry, SatelliteState, Vec3};
use crate::ids::{SatId, UtId};
use crate::rf::{channel_gain, AntennaPair, ChannelPlan, FadingField, RxAntennaPattern};
use crate::units::{db_to_linear, linear_to_db, thermal_noise_w};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

/// Transmit powers of one satellite for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// `p[b][m]` in watts.
    pub p: Vec<Vec<f64>>,
    pub beam_budget: Vec<f64>,
    pub total_budget: f64,
}

impl PowerAllocation {
    pub fn zeros(num_beams: usize, num_channels: usize, total_budget: f64) -> Self {
        Self { p: vec![vec![0.0; num_channels]; num_beams], beam_budget: vec![0.0; num_beams], total_budget }
    }

    pub fn num_beams(&self) -> usize {
        self.p.len()
    }

    pub fn num_channels(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn power(&self, b: usize, m: usize) -> f64 {
        self.p[b][m]
    }

    pub fn beam_total(&self, b: usize) -> f64 {
        self.p[b].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    pub fn channels_of(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.p[b].iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(m, _)| m)
    }

    pub fn degree(&self, b: usize) -> usize {
        self.channels_of(b).count()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p.iter().map(|row| row.iter().map(|x| x * factor).collect()).collect(),
            beam_budget: self.beam_budget.iter().map(|x| x * factor).collect(),
            total_budget: self.total_budget * factor,
        }
    }

    /// Check non-negativity, beam and satellite budgets and the per-beam
    /// channel limit `max_channels` (None disables the limit).
    pub fn validate(&self, max_channels: Option<usize>) -> Result<()> {
        if self.beam_budget.len() != self.p.len() {
            return Err(Error::domain("beam budget length differs from beam count"));
        }
        let m = self.num_channels();
        for (b, row) in self.p.iter().enumerate() {
            if row.len() != m {
                return Err(Error::domain(format!("beam {b} has a ragged channel row")));
            }
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::domain(format!("beam {b} has a negative or non-finite power")));
            }
            if self.beam_total(b) > self.beam_budget[b] + 1e-9 {
                return Err(Error::domain(format!("beam {b} exceeds its budget")));
            }
            if let Some(n) = max_channels {
                if self.degree(b) > n {
                    return Err(Error::domain(format!("beam {b} aggregates more than {n} channels")));
                }
            }
        }
        if self.beam_budget.iter().sum::<f64>() > self.total_budget + 1e-9 {
            return Err(Error::domain("beam budgets exceed the satellite budget"));
        }
        Ok(())
    }
}

/// What one satellite radiates in a slot: its position, spot-beam
/// boresights and powers. This is the snapshot neighbours exchange over ISLs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub sat: SatId,
    pub position: Vec3,
    /// Unit boresight of each spot beam.
    pub directions: Vec<Vec3>,
    pub alloc: PowerAllocation,
}

impl Emission {
    pub fn new(sat: &SatelliteState, alloc: PowerAllocation) -> Self {
        let directions: Vec<Vec3> = sat.spot_beams().map(|b| b.direction).collect();
        assert_eq!(directions.len(), alloc.num_beams(), "allocation and spot beam count differ");
        Self { sat: sat.id, position: sat.position, directions, alloc }
    }
}

/// Receiving user terminal; its antenna points at the serving satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub id: UtId,
    pub position: Vec3,
    pub boresight: Vec3,
}

impl Terminal {
    pub fn pointed_at(id: UtId, position: Vec3, serving_sat: &Vec3) -> Self {
        Self { id, position, boresight: (serving_sat - position).normalize() }
    }
}

/// Radio parameters shared by every link in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioContext {
    pub antennas: AntennaPair,
    pub plan: ChannelPlan,
    pub noise_w: f64,
    pub fading: FadingField,
}

impl RadioContext {
    pub fn new(antennas: AntennaPair, plan: ChannelPlan, noise_temperature_k: f64, fading: FadingField) -> Self {
        let noise_w = thermal_noise_w(noise_temperature_k, plan.channel_bandwidth_hz);
        Self { antennas, plan, noise_w, fading }
    }

    /// Linear gain H from spot beam `b` of `tx` to the terminal on channel `m`.
    pub fn gain(&self, t: &Terminal, tx: &Emission, b: usize, m: usize) -> Result<f64> {
        let link = LinkGeometry::new(&t.position, &tx.position, &tx.directions[b], &t.boresight)?;
        let xi = self.fading.xi(t.id, tx.sat, m);
        channel_gain(&link, &self.antennas, self.plan.carrier_hz(m), xi)
    }

    /// Gains on every channel of one transmitter/terminal pair, sharing the
    /// geometry. Returns the link geometry for reuse in messages.
    pub fn gains_all_channels(&self, t: &Terminal, sat: SatId, sat_pos: &Vec3, beam_dir: &Vec3, out: &mut [f64]) -> Result<LinkGeometry> {
        let link = LinkGeometry::new(&t.position, sat_pos, beam_dir, &t.boresight)?;
        let g = db_to_linear(self.antennas.tx.gain_dbi(link.tx_off_axis_deg)? + self.antennas.rx.gain_dbi(link.rx_off_axis_deg)?);
        for (m, o) in out.iter_mut().enumerate() {
            let xi = self.fading.xi(t.id, sat, m);
            *o = g / (xi * crate::rf::fspl_linear(link.distance_m, self.plan.carrier_hz(m)));
        }
        Ok(link)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrBreakdown {
    pub signal_w: f64,
    pub noise_w: f64,
    pub intra_cci_w: f64,
    pub inter_cci_w: f64,
    pub sinr: f64,
}

impl SinrBreakdown {
    pub fn interference_w(&self) -> f64 {
        self.intra_cci_w + self.inter_cci_w
    }
}

/// Σ_{b′≠b} P_{s,b′,m}·H_{u,s,b′,m}.
pub fn intra_cci(ctx: &RadioContext, t: &Terminal, own: &Emission, b: usize, m: usize) -> Result<f64> {
    let mut sum = 0.0;
    for bp in 0..own.alloc.num_beams() {
        let p = own.alloc.power(bp, m);
        if bp != b && p > 0.0 {
            sum += p * ctx.gain(t, own, bp, m)?;
        }
    }
    Ok(sum)
}

/// Σ_{s′} Σ_{b′} P_{s′,b′,m}·H_{u,s′,b′,m} over the given neighbour snapshots.
pub fn inter_cci(ctx: &RadioContext, t: &Terminal, neighbors: &[&Emission], m: usize) -> Result<f64> {
    let mut sum = 0.0;
    for e in neighbors {
        for bp in 0..e.alloc.num_beams() {
            let p = e.alloc.power(bp, m);
            if p > 0.0 {
                sum += p * ctx.gain(t, e, bp, m)?;
            }
        }
    }
    Ok(sum)
}

pub fn sinr(ctx: &RadioContext, t: &Terminal, own: &Emission, b: usize, m: usize, neighbors: &[&Emission]) -> Result<SinrBreakdown> {
    if !(ctx.noise_w > 0.0) {
        return Err(Error::config("noise power must be positive"));
    }
    let p = own.alloc.power(b, m);
    let signal_w = if p > 0.0 { p * ctx.gain(t, own, b, m)? } else { 0.0 };
    let intra_cci_w = intra_cci(ctx, t, own, b, m)?;
    let inter_cci_w = inter_cci(ctx, t, neighbors, m)?;
    Ok(SinrBreakdown {
        signal_w,
        noise_w: ctx.noise_w,
        intra_cci_w,
        inter_cci_w,
        sinr: signal_w / (ctx.noise_w + intra_cci_w + inter_cci_w),
    })
}

/// Shannon rate β·log2(1+Γ) of one channel.
pub fn channel_rate_bps(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Aggregate rate of a terminal served by spot beam `serving` of `own`.
pub fn downlink_rate(ctx: &RadioContext, t: &Terminal, own: &Emission, serving: Option<usize>, neighbors: &[&Emission]) -> Result<f64> {
    let Some(b) = serving else { return Ok(0.0) };
    let mut rate = 0.0;
    for m in 0..own.alloc.num_channels() {
        if own.alloc.power(b, m) > 0.0 {
            rate += channel_rate_bps(ctx.plan.channel_bandwidth_hz, sinr(ctx, t, own, b, m, neighbors)?.sinr);
        }
    }
    Ok(rate)
}

/// How inter-satellite interference is known when a satellite allocates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterCciMode {
    /// Neighbour allocations from the previous slot (one-slot ISL delay).
    #[default]
    Estimated,
    /// Neighbour allocations of the current slot (oracle).
    SameSlot,
}

/// Emission snapshots of the previous and current slot, keyed by satellite.
#[derive(Debug, Clone, Default)]
pub struct EmissionBoard {
    pub previous: BTreeMap<SatId, Emission>,
    pub current: BTreeMap<SatId, Emission>,
}

impl EmissionBoard {
    /// Move the current slot's snapshots to `previous`.
    pub fn advance(&mut self) {
        self.previous = std::mem::take(&mut self.current);
    }

    pub fn publish(&mut self, e: Emission) {
        self.current.insert(e.sat, e);
    }

    pub fn neighbors<'a>(&'a self, ids: &BTreeSet<SatId>, mode: InterCciMode) -> Vec<&'a Emission> {
        let src = match mode {
            InterCciMode::Estimated => &self.previous,
            InterCciMode::SameSlot => &self.current,
        };
        ids.iter().filter_map(|id| src.get(id)).collect()
    }
}

/// Where a protected terminal's antenna points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pointing {
    #[default]
    Zenith,
    AzEl { azimuth_deg: f64, elevation_deg: f64 },
}

/// Incumbent terminal that must be shielded from excessive EPFD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedUser {
    pub id: usize,
    pub position: GroundPosition,
    /// Active channel sets, cycled by slot; a single entry is a static schedule.
    pub channel_schedule: Vec<BTreeSet<usize>>,
    pub rx: RxAntennaPattern,
    /// Unit boresight vector.
    pub boresight: Vec3,
    pub kappa_dbw_m2: f64,
}

impl ProtectedUser {
    pub fn new(id: usize, position: GroundPosition, channels: BTreeSet<usize>, rx: RxAntennaPattern, pointing: Pointing, kappa_dbw_m2: f64) -> Self {
        let boresight = pointing_vector(&position.position, pointing);
        Self { id, position, channel_schedule: vec![channels], rx, boresight, kappa_dbw_m2 }
    }

    pub fn is_active(&self, m: usize, slot: u64) -> bool {
        if self.channel_schedule.is_empty() {
            return false;
        }
        self.channel_schedule[(slot % self.channel_schedule.len() as u64) as usize].contains(&m)
    }

    pub fn validate(&self, num_channels: usize) -> Result<()> {
        if self.channel_schedule.iter().flatten().any(|&m| m >= num_channels) {
            return Err(Error::config(format!("protected user {} lists a channel outside 0..{num_channels}", self.id)));
        }
        if !self.kappa_dbw_m2.is_finite() {
            return Err(Error::config(format!("protected user {} has a non-finite threshold", self.id)));
        }
        self.rx.validate()
    }
}

/// Local east-north-up pointing converted to an ECI unit vector.
pub fn pointing_vector(position: &Vec3, pointing: Pointing) -> Vec3 {
    let up = position.normalize();
    match pointing {
        Pointing::Zenith => up,
        Pointing::AzEl { azimuth_deg, elevation_deg } => {
            let z = Vec3::z();
            let east = {
                let e = z.cross(&up);
                if e.norm() < 1e-12 { Vec3::x() } else { e.normalize() }
            };
            let north = up.cross(&east);
            let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
            (up * el.sin() + (north * az.cos() + east * az.sin()) * el.cos()).normalize()
        }
    }
}

/// EPFD per watt of beam `b` toward `r`, ignoring the channel schedule:
/// G_T / (4π d²) · G_R(ψ) / G_R,max, linear.
pub fn epfd_per_watt(r: &ProtectedUser, tx: &Emission, b: usize, antennas: &AntennaPair) -> Result<f64> {
    let pos = &r.position.position;
    let d2 = (pos - tx.position).norm_squared();
    if !(d2 > 0.0) {
        return Err(Error::domain("protected user coincides with satellite"));
    }
    let phi = off_axis_angle_deg(&tx.position, &tx.directions[b], pos)?;
    let psi = off_axis_angle_deg(pos, &r.boresight, &tx.position)?;
    let gt = db_to_linear(antennas.tx.gain_dbi(phi)?);
    let discrimination = db_to_linear(r.rx.gain_dbi(psi)? - r.rx.g_max_dbi);
    Ok(gt / (4.0 * PI * d2) * discrimination)
}

/// EPFD (W/m²) of beam `b` on channel `m` at `r` in slot `slot`.
pub fn epfd_contribution(r: &ProtectedUser, tx: &Emission, b: usize, m: usize, slot: u64, antennas: &AntennaPair) -> Result<f64> {
    let p = tx.alloc.power(b, m);
    if !r.is_active(m, slot) || p == 0.0 {
        return Ok(0.0);
    }
    Ok(p * epfd_per_watt(r, tx, b, antennas)?)
}

/// Scale applied to per-channel flux to express it in the threshold's
/// reference bandwidth (flat PSD within a channel).
pub fn reference_bandwidth_factor(channel_bandwidth_hz: f64, reference_bandwidth_hz: f64) -> f64 {
    (reference_bandwidth_hz / channel_bandwidth_hz).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpfdCheck {
    /// Aggregate EPFD in the reference bandwidth, W/m².
    pub epfd_w_m2: f64,
    /// κ − EPFD in dB; `+∞` when nothing reaches the terminal.
    pub margin_db: f64,
    pub compliant: bool,
}

impl EpfdCheck {
    pub fn from_total(epfd_w_m2: f64, kappa_dbw_m2: f64) -> Self {
        let kappa = db_to_linear(kappa_dbw_m2);
        let margin_db = if epfd_w_m2 > 0.0 { kappa_dbw_m2 - linear_to_db(epfd_w_m2) } else { f64::INFINITY };
        Self { epfd_w_m2, margin_db, compliant: epfd_w_m2 <= kappa * (1.0 + 1e-9) }
    }
}

/// Sum of the satellite's EPFD at `r` over all beams and channels, compared with κ.
pub fn epfd_check(r: &ProtectedUser, tx: &Emission, slot: u64, antennas: &AntennaPair, plan: &ChannelPlan, reference_bandwidth_hz: f64) -> Result<EpfdCheck> {
    let mut total = 0.0;
    for b in 0..tx.alloc.num_beams() {
        for m in 0..tx.alloc.num_channels() {
            total += epfd_contribution(r, tx, b, m, slot, antennas)?;
        }
    }
    total *= reference_bandwidth_factor(plan.channel_bandwidth_hz, reference_bandwidth_hz);
    Ok(EpfdCheck::from_total(total, r.kappa_dbw_m2))
}

/// Transmit-power limits derived from the EIRP density cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerLimits {
    pub eirp_density_dbw_per_mhz: f64,
    /// Satellite budget P_s; `None` means one EIRP-capped channel's worth per channel.
    pub total_budget_w: Option<f64>,
    pub epfd_reference_bandwidth_hz: f64,
}

impl Default for PowerLimits {
    fn default() -> Self {
        Self { eirp_density_dbw_per_mhz: 15.0, total_budget_w: None, epfd_reference_bandwidth_hz: 100e6 }
    }
}

impl PowerLimits {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.total_budget_w {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("total_budget_w must be positive"));
            }
        }
        if !(self.epfd_reference_bandwidth_hz > 0.0) {
            return Err(Error::config("epfd_reference_bandwidth_hz must be positive"));
        }
        if !self.eirp_density_dbw_per_mhz.is_finite() {
            return Err(Error::config("eirp_density_dbw_per_mhz must be finite"));
        }
        Ok(())
    }

    /// Largest power on one (beam, channel) keeping boresight EIRP under the cap.
    pub fn per_channel_cap_w(&self, plan: &ChannelPlan, g_tx_max_dbi: f64) -> f64 {
        db_to_linear(self.eirp_density_dbw_per_mhz + linear_to_db(plan.channel_bandwidth_hz / 1e6) - g_tx_max_dbi)
    }

    pub fn total_budget(&self, plan: &ChannelPlan, g_tx_max_dbi: f64) -> f64 {
        self.total_budget_w.unwrap_or_else(|| self.per_channel_cap_w(plan, g_tx_max_dbi) * plan.num_channels as f64)
    }
}
