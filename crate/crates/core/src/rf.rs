//! Antenna masks, free-space path loss, atmospheric attenuation and the
//! composite channel gain of a spot-beam link.
//!
//! Gains are specified in dB at the edges; everything returned by
//! [`channel_gain`] is a linear power ratio.

use crate::error::{Error, Result};
use crate::geom::LinkGeometry;
use crate::ids::{SatId, UtId};
use crate::units::{db_to_linear, linear_to_db, SPEED_OF_LIGHT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Satellite transmit mask: flat mainlobe, quadratic roll-off to 1.5·φʰ,
/// 25·log10 sidelobe decay to φᵐᵃˣ, far-sidelobe floor beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxAntennaPattern {
    pub g_max_dbi: f64,
    /// One half of the 3 dB beamwidth.
    pub half_beamwidth_deg: f64,
    pub sidelobe_edge_deg: f64,
    pub far_sidelobe_dbi: f64,
}

impl Default for TxAntennaPattern {
    fn default() -> Self {
        Self { g_max_dbi: 40.0, half_beamwidth_deg: 1.0, sidelobe_edge_deg: 20.0, far_sidelobe_dbi: 5.0 }
    }
}

impl TxAntennaPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_beamwidth_deg > 0.0) {
            return Err(Error::config("tx half_beamwidth_deg must be positive"));
        }
        if !(self.sidelobe_edge_deg > 1.5 * self.half_beamwidth_deg) {
            return Err(Error::config("tx sidelobe_edge_deg must exceed 1.5 x half_beamwidth_deg"));
        }
        finite(&[self.g_max_dbi, self.far_sidelobe_dbi], "tx pattern")
    }

    pub fn gain_dbi(&self, phi_deg: f64) -> Result<f64> {
        tx_gain_dbi(self, phi_deg)
    }
}

/// Terminal receive mask: flat mainlobe up to ψᵉ, 25·log10 decay to ψᵐᵃˣ,
/// far-sidelobe floor beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxAntennaPattern {
    pub g_max_dbi: f64,
    /// Angle separating main and side lobes.
    pub main_side_sep_deg: f64,
    pub sidelobe_edge_deg: f64,
    pub far_sidelobe_dbi: f64,
}

impl Default for RxAntennaPattern {
    fn default() -> Self {
        Self { g_max_dbi: 35.0, main_side_sep_deg: 1.0, sidelobe_edge_deg: 40.0, far_sidelobe_dbi: -5.0 }
    }
}

impl RxAntennaPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.main_side_sep_deg > 0.0) {
            return Err(Error::config("rx main_side_sep_deg must be positive"));
        }
        if !(self.sidelobe_edge_deg > self.main_side_sep_deg) {
            return Err(Error::config("rx sidelobe_edge_deg must exceed main_side_sep_deg"));
        }
        finite(&[self.g_max_dbi, self.far_sidelobe_dbi], "rx pattern")
    }

    pub fn gain_dbi(&self, psi_deg: f64) -> Result<f64> {
        rx_gain_dbi(self, psi_deg)
    }
}

fn finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(format!("{what} contains a non-finite value")))
    }
}

pub fn tx_gain_dbi(p: &TxAntennaPattern, phi_deg: f64) -> Result<f64> {
    if !(phi_deg >= 0.0) {
        return Err(Error::domain(format!("tx off-axis angle {phi_deg} is negative or NaN")));
    }
    let h = p.half_beamwidth_deg;
    let g = if phi_deg <= h {
        p.g_max_dbi
    } else if phi_deg <= 1.5 * h {
        p.g_max_dbi - 3.0 * (phi_deg / h).powi(2)
    } else if phi_deg <= p.sidelobe_edge_deg {
        let shoulder = p.g_max_dbi - 3.0 * 1.5f64.powi(2);
        shoulder - 25.0 * (2.0 * phi_deg / (3.0 * h)).log10()
    } else {
        p.far_sidelobe_dbi
    };
    Ok(g)
}

pub fn rx_gain_dbi(p: &RxAntennaPattern, psi_deg: f64) -> Result<f64> {
    if !(psi_deg >= 0.0) {
        return Err(Error::domain(format!("rx off-axis angle {psi_deg} is negative or NaN")));
    }
    let e = p.main_side_sep_deg;
    let g = if psi_deg <= e {
        p.g_max_dbi
    } else if psi_deg <= p.sidelobe_edge_deg {
        p.g_max_dbi - 25.0 * (psi_deg / e).log10()
    } else {
        p.far_sidelobe_dbi
    };
    Ok(g)
}

/// Free-space path loss (4πdf/c)² as a linear ratio.
pub fn fspl_linear(distance_m: f64, freq_hz: f64) -> f64 {
    (4.0 * PI * distance_m * freq_hz / SPEED_OF_LIGHT).powi(2)
}

pub fn fspl_db(distance_m: f64, freq_hz: f64) -> f64 {
    20.0 * (4.0 * PI * distance_m * freq_hz / SPEED_OF_LIGHT).log10()
}

/// Atmospheric attenuation ξ. The double log-normal mode draws a log-normal
/// attenuation (in dB) whose log-median is itself perturbed by a slower
/// log-normal stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AtmosphericModel {
    Deterministic { loss_db: f64 },
    DoubleLogNormal { median_db: f64, sigma_slow: f64, sigma_fast: f64 },
}

impl Default for AtmosphericModel {
    fn default() -> Self {
        AtmosphericModel::Deterministic { loss_db: 0.5 }
    }
}

impl AtmosphericModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AtmosphericModel::Deterministic { loss_db } if loss_db >= 0.0 && loss_db.is_finite() => Ok(()),
            AtmosphericModel::Deterministic { .. } => Err(Error::config("atmospheric loss_db must be finite and >= 0")),
            AtmosphericModel::DoubleLogNormal { median_db, sigma_slow, sigma_fast } => {
                if median_db > 0.0 && sigma_slow >= 0.0 && sigma_fast >= 0.0 && median_db.is_finite() && sigma_slow.is_finite() && sigma_fast.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("double log-normal needs median_db > 0 and non-negative sigmas"))
                }
            }
        }
    }

    /// Expected attenuation in dB.
    pub fn mean_db(&self) -> f64 {
        match *self {
            AtmosphericModel::Deterministic { loss_db } => loss_db,
            AtmosphericModel::DoubleLogNormal { median_db, sigma_slow, sigma_fast } => {
                median_db * (0.5 * (sigma_slow * sigma_slow + sigma_fast * sigma_fast)).exp()
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, AtmosphericModel::Deterministic { .. })
    }

    /// Slow stage: a perturbed median (dB) shared by the links of one terminal.
    pub fn sample_median_db<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AtmosphericModel::Deterministic { loss_db } => loss_db,
            AtmosphericModel::DoubleLogNormal { median_db, sigma_slow, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                median_db * (sigma_slow * z).exp()
            }
        }
    }

    /// Fast stage given a slow-stage median.
    pub fn sample_db_given_median<R: Rng + ?Sized>(&self, median_db: f64, rng: &mut R) -> f64 {
        match *self {
            AtmosphericModel::Deterministic { loss_db } => loss_db,
            AtmosphericModel::DoubleLogNormal { sigma_fast, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                median_db * (sigma_fast * z).exp()
            }
        }
    }

    pub fn sample_db<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let median = self.sample_median_db(rng);
        self.sample_db_given_median(median, rng)
    }
}

/// Draw ξ as a linear loss factor (always ≥ 1).
pub fn sample_atmospheric_loss<R: Rng + ?Sized>(model: &AtmosphericModel, rng: &mut R) -> f64 {
    db_to_linear(model.sample_db(rng).max(0.0))
}

/// Per-slot attenuation field. Sampled values depend only on
/// `(seed, slot, terminal, satellite, channel)`, so lookups are order-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingField {
    pub model: AtmosphericModel,
    pub seed: u64,
    pub slot: u64,
}

impl FadingField {
    pub fn new(model: AtmosphericModel, seed: u64, slot: u64) -> Self {
        Self { model, seed, slot }
    }

    pub fn xi(&self, ut: UtId, sat: SatId, channel: usize) -> f64 {
        match self.model {
            AtmosphericModel::Deterministic { loss_db } => db_to_linear(loss_db),
            AtmosphericModel::DoubleLogNormal { .. } => {
                let mut slow = ChaCha8Rng::seed_from_u64(mix(&[self.seed, self.slot, ut.0 as u64, u64::MAX]));
                let median = self.model.sample_median_db(&mut slow);
                let mut fast = ChaCha8Rng::seed_from_u64(mix(&[self.seed, self.slot, ut.0 as u64, sat.0 as u64, channel as u64]));
                db_to_linear(self.model.sample_db_given_median(median, &mut fast).max(0.0))
            }
        }
    }
}

/// SplitMix64-style combination of several words into one seed.
pub(crate) fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// M channels of width β centred on the downlink carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelPlan {
    pub num_channels: usize,
    pub channel_bandwidth_hz: f64,
    pub center_frequency_hz: f64,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self { num_channels: 8, channel_bandwidth_hz: 250e6, center_frequency_hz: 12e9 }
    }
}

impl ChannelPlan {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels == 0 {
            return Err(Error::config("channel plan needs at least one channel"));
        }
        if !(self.channel_bandwidth_hz > 0.0) || !(self.center_frequency_hz > 0.0) {
            return Err(Error::config("channel bandwidth and centre frequency must be positive"));
        }
        let lowest = self.carrier_hz(0);
        if !(lowest - 0.5 * self.channel_bandwidth_hz > 0.0) {
            return Err(Error::config("channel plan extends below 0 Hz"));
        }
        Ok(())
    }

    /// Carrier of channel `m` (0-based).
    pub fn carrier_hz(&self, m: usize) -> f64 {
        let offset = m as f64 - (self.num_channels as f64 - 1.0) / 2.0;
        self.center_frequency_hz + offset * self.channel_bandwidth_hz
    }

    pub fn carrier_frequencies(&self) -> Vec<f64> {
        (0..self.num_channels).map(|m| self.carrier_hz(m)).collect()
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.num_channels as f64 * self.channel_bandwidth_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaPair {
    pub tx: TxAntennaPattern,
    pub rx: RxAntennaPattern,
}

/// Linear channel gain H = Gᵀ(φ)·Gᴿ(ψ) / (ξ·L).
pub fn channel_gain(link: &LinkGeometry, antennas: &AntennaPair, freq_hz: f64, xi: f64) -> Result<f64> {
    if !(link.distance_m > 0.0) {
        return Err(Error::domain("channel gain over a zero-length link"));
    }
    let gt = db_to_linear(antennas.tx.gain_dbi(link.tx_off_axis_deg)?);
    let gr = db_to_linear(antennas.rx.gain_dbi(link.rx_off_axis_deg)?);
    Ok(gt * gr / (xi * fspl_linear(link.distance_m, freq_hz)))
}

pub fn channel_gain_db(link: &LinkGeometry, antennas: &AntennaPair, freq_hz: f64, xi: f64) -> Result<f64> {
    channel_gain(link, antennas, freq_hz, xi).map(linear_to_db)
}
