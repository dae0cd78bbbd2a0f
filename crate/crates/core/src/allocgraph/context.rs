//! Per-slot, per-satellite tables consumed by the allocator: own-satellite
//! gains between every beam and every served terminal, inter-satellite
//! interference estimates, EPFD coefficients and power caps.

use crate::error::{Error, Result};
use crate::geom::{SatelliteState, Vec3};
use crate::ids::UtId;
use crate::interference::{epfd_per_watt, reference_bandwidth_factor, Emission, PowerAllocation, PowerLimits, ProtectedUser, RadioContext, Terminal};
use crate::scheduler::BeamAssignment;
use crate::units::{db_to_linear, linear_to_db};
use serde::{Deserialize, Serialize};

/// Stage-1 outcome for one spot beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSlot {
    pub ut: Option<UtId>,
    /// Served terminal position, or the sub-satellite point for idle beams.
    pub position: Vec3,
    pub budget_w: f64,
    pub q_bits: f64,
    pub tau: f64,
}

impl BeamSlot {
    pub fn is_active(&self) -> bool {
        self.ut.is_some() && self.budget_w > 0.0
    }
}

/// Linear EPFD constraint Σ coeff·p ≤ limit for one protected terminal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpfdTerm {
    pub user_id: usize,
    pub position: Vec3,
    /// `[m * B + b]`, W/m² per W in the reference bandwidth; zero where the
    /// terminal is not listening.
    pub coeff: Vec<f64>,
    pub limit_w_m2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocContext {
    pub num_beams: usize,
    pub num_channels: usize,
    pub max_channels: usize,
    pub beams: Vec<BeamSlot>,
    pub bandwidth_hz: f64,
    pub noise_w: f64,
    pub slot_s: f64,
    /// `[(m * B + src) * B + dst]`: gain from beam `src` to the terminal of beam `dst`.
    pub gain: Vec<f64>,
    /// `[m * B + b]`: inter-satellite interference at the terminal of beam `b`.
    pub inter: Vec<f64>,
    /// `[m * B + b]`: atmospheric loss and free-space loss on the serving link, dB.
    pub xi_db: Vec<f64>,
    pub path_loss_db: Vec<f64>,
    /// Serving-link antenna gains per beam, dBi.
    pub gt_dbi: Vec<f64>,
    pub gr_dbi: Vec<f64>,
    pub eirp_cap_w: f64,
    pub total_budget_w: f64,
    pub protected: Vec<EpfdTerm>,
}

impl AllocContext {
    #[inline]
    pub fn g(&self, m: usize, src: usize, dst: usize) -> f64 {
        self.gain[(m * self.num_beams + src) * self.num_beams + dst]
    }

    #[inline]
    pub fn o(&self, m: usize, b: usize) -> f64 {
        self.inter[m * self.num_beams + b]
    }

    pub fn admissible_beam_count(&self) -> usize {
        self.beams.iter().filter(|b| b.is_active()).count()
    }

    /// Empty allocation shaped like this context.
    pub fn zero_allocation(&self) -> PowerAllocation {
        let mut a = PowerAllocation::zeros(self.num_beams, self.num_channels, self.total_budget_w);
        a.beam_budget = self.beams.iter().map(|b| b.budget_w).collect();
        a
    }

    pub fn validate(&self) -> Result<()> {
        let (b, m) = (self.num_beams, self.num_channels);
        if self.beams.len() != b || self.gain.len() != m * b * b || self.inter.len() != m * b {
            return Err(Error::domain("allocation context tables have inconsistent sizes"));
        }
        if self.max_channels == 0 {
            return Err(Error::config("max_channels must be at least 1"));
        }
        if !(self.noise_w > 0.0) {
            return Err(Error::config("noise power must be positive"));
        }
        let budgets: f64 = self.beams.iter().map(|x| x.budget_w).sum();
        if budgets > self.total_budget_w * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::domain("beam budgets exceed the satellite budget"));
        }
        let finite = self.gain.iter().chain(&self.inter).all(|x| x.is_finite() && *x >= 0.0);
        if !finite {
            return Err(Error::NonFinite("gain or interference table".into()));
        }
        Ok(())
    }
}

/// Everything needed to build an [`AllocContext`] for one satellite.
pub struct SlotInputs<'a> {
    /// Satellite with spot beams already aimed by stage 1.
    pub sat: &'a SatelliteState,
    pub assignment: &'a BeamAssignment,
    pub budgets: &'a [f64],
    pub q_bits: &'a dyn Fn(UtId) -> f64,
    pub tau: &'a dyn Fn(UtId) -> f64,
    pub ut_position: &'a dyn Fn(UtId) -> Vec3,
    pub radio: &'a RadioContext,
    /// Neighbour snapshots used for the inter-satellite estimate.
    pub neighbors: &'a [&'a Emission],
    /// Protected terminals inside the footprint.
    pub protected: &'a [ProtectedUser],
    pub slot: u64,
    pub limits: &'a PowerLimits,
    pub max_channels: usize,
    pub slot_s: f64,
    pub total_budget_w: f64,
}

impl AllocContext {
    pub fn build(inp: &SlotInputs<'_>) -> Result<Self> {
        let sat = inp.sat;
        let nb = inp.assignment.num_beams();
        let nm = inp.radio.plan.num_channels;
        let spot_dirs: Vec<Vec3> = sat.spot_beams().map(|b| b.direction).collect();
        if spot_dirs.len() != nb || inp.budgets.len() != nb {
            return Err(Error::domain("assignment, budgets and spot beams disagree in size"));
        }
        let sub_point = sat.position.normalize() * crate::units::EARTH_RADIUS_M;
        let beams: Vec<BeamSlot> = (0..nb)
            .map(|b| match inp.assignment.serving[b] {
                Some(u) => BeamSlot { ut: Some(u), position: (inp.ut_position)(u), budget_w: inp.budgets[b], q_bits: (inp.q_bits)(u), tau: (inp.tau)(u) },
                None => BeamSlot { ut: None, position: sub_point, budget_w: 0.0, q_bits: 0.0, tau: 0.0 },
            })
            .collect();

        let mut gain = vec![0.0; nm * nb * nb];
        let mut inter = vec![0.0; nm * nb];
        let mut xi_db = vec![0.0; nm * nb];
        let mut path_loss_db = vec![0.0; nm * nb];
        let mut gt_dbi = vec![0.0; nb];
        let mut gr_dbi = vec![0.0; nb];
        let mut buf = vec![0.0; nm];
        for dst in 0..nb {
            let Some(u) = beams[dst].ut else { continue };
            let term = Terminal::pointed_at(u, beams[dst].position, &sat.position);
            for (src, dir) in spot_dirs.iter().enumerate() {
                let link = inp.radio.gains_all_channels(&term, sat.id, &sat.position, dir, &mut buf)?;
                for m in 0..nm {
                    gain[(m * nb + src) * nb + dst] = buf[m];
                }
                if src == dst {
                    gt_dbi[dst] = inp.radio.antennas.tx.gain_dbi(link.tx_off_axis_deg)?;
                    gr_dbi[dst] = inp.radio.antennas.rx.gain_dbi(link.rx_off_axis_deg)?;
                    for m in 0..nm {
                        let fspl = crate::rf::fspl_db(link.distance_m, inp.radio.plan.carrier_hz(m));
                        path_loss_db[m * nb + dst] = fspl;
                        xi_db[m * nb + dst] = linear_to_db(inp.radio.fading.xi(u, sat.id, m));
                    }
                }
            }
            for e in inp.neighbors {
                for bp in 0..e.alloc.num_beams() {
                    if e.alloc.p[bp].iter().all(|&p| p <= 0.0) {
                        continue;
                    }
                    inp.radio.gains_all_channels(&term, e.sat, &e.position, &e.directions[bp], &mut buf)?;
                    for m in 0..nm {
                        inter[m * nb + dst] += e.alloc.p[bp][m] * buf[m];
                    }
                }
            }
        }

        let bwf = reference_bandwidth_factor(inp.radio.plan.channel_bandwidth_hz, inp.limits.epfd_reference_bandwidth_hz);
        let own = Emission { sat: sat.id, position: sat.position, directions: spot_dirs, alloc: PowerAllocation::zeros(nb, nm, 0.0) };
        let mut protected = Vec::with_capacity(inp.protected.len());
        for r in inp.protected {
            let mut coeff = vec![0.0; nm * nb];
            for b in 0..nb {
                let per_w = epfd_per_watt(r, &own, b, &inp.radio.antennas)? * bwf;
                for m in 0..nm {
                    if r.is_active(m, inp.slot) {
                        coeff[m * nb + b] = per_w;
                    }
                }
            }
            protected.push(EpfdTerm { user_id: r.id, position: r.position.position, coeff, limit_w_m2: db_to_linear(r.kappa_dbw_m2) * (1.0 - 1e-10) });
        }

        let ctx = Self {
            num_beams: nb,
            num_channels: nm,
            max_channels: inp.max_channels,
            beams,
            bandwidth_hz: inp.radio.plan.channel_bandwidth_hz,
            noise_w: inp.radio.noise_w,
            slot_s: inp.slot_s,
            gain,
            inter,
            xi_db,
            path_loss_db,
            gt_dbi,
            gr_dbi,
            eirp_cap_w: inp.limits.per_channel_cap_w(&inp.radio.plan, inp.radio.antennas.tx.g_max_dbi),
            total_budget_w: inp.total_budget_w,
            protected,
        };
        ctx.validate()?;
        Ok(ctx)
    }
}
