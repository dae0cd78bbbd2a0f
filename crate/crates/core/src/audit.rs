//! Offline EPFD audit of a recorded allocation trace. Flux is recomputed
//! term by term from satellite positions, beam boresights and powers in the
//! trace; nothing from the allocator's projection path is reused.

use crate::error::{Error, Result};
use crate::interference::ProtectedUser;
use crate::simharness::engine::SlotTrace;
use crate::simharness::output::ArtifactHeader;
use crate::simharness::{ScenarioConfig, World};
use crate::units::{db_to_linear, linear_to_db};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub slot: u64,
    pub sat: usize,
    pub user: usize,
    pub epfd_dbw_m2: f64,
    pub kappa_dbw_m2: f64,
    pub margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub protected_users: usize,
    pub slots: usize,
    /// (slot, satellite, protected user) combinations evaluated.
    pub checks: usize,
    /// Smallest κ − EPFD in dB; `None` when nothing was evaluated.
    pub min_margin_db: Option<f64>,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.protected_users == 0 {
            return "no protected users".to_string();
        }
        let margin = self.min_margin_db.map_or("n/a".to_string(), |m| if m.is_finite() { format!("{m:.3} dB") } else { "inf".to_string() });
        let mut s = format!("protected users {}, slots {}, checks {}, min margin {margin}, violations {}", self.protected_users, self.slots, self.checks, self.violations.len());
        for v in &self.violations {
            s.push_str(&format!("\nVIOLATION slot {} sat {} protected user {}: {:.3} dBW/m2 > {:.3} dBW/m2", v.slot, v.sat, v.user, v.epfd_dbw_m2, v.kappa_dbw_m2));
        }
        s
    }
}

#[derive(Deserialize)]
struct HeaderLine {
    header: HeaderBody,
}

#[derive(Deserialize)]
struct HeaderBody {
    config_sha256: String,
}

/// Parse a JSONL trace; the first line must be the header object.
pub fn parse_trace(text: &str) -> Result<(String, Vec<SlotTrace>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Schema("trace is empty".into()))?;
    let h: HeaderLine = serde_json::from_str(first).map_err(|e| Error::Schema(format!("trace line 1: expected header object: {e}")))?;
    let mut slots = Vec::new();
    for (i, l) in lines {
        let s: SlotTrace = serde_json::from_str(l).map_err(|e| Error::Schema(format!("trace line {}: {e}", i + 1)))?;
        slots.push(s);
    }
    Ok((h.header.config_sha256, slots))
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn arr(v: &crate::geom::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// EPFD at `r` from one satellite record, W/m² in the reference bandwidth.
fn flux(cfg: &ScenarioConfig, r: &ProtectedUser, sat_pos: [f64; 3], directions: &[crate::geom::Vec3], power: &[Vec<f64>], slot: u64) -> Result<f64> {
    let rx = arr(&r.position.position);
    let to_rx = sub(rx, sat_pos);
    let d2 = to_rx.iter().map(|x| x * x).sum::<f64>();
    let psi = angle_deg(arr(&r.boresight), sub(sat_pos, rx));
    let discrimination = db_to_linear(r.rx.gain_dbi(psi)? - r.rx.g_max_dbi);
    let bw = (cfg.rf.limits.epfd_reference_bandwidth_hz / cfg.rf.plan.channel_bandwidth_hz).min(1.0);
    let mut total = 0.0;
    for (b, row) in power.iter().enumerate() {
        let dir = directions.get(b).ok_or_else(|| Error::Schema(format!("slot {slot}: power row {b} has no beam direction")))?;
        let gt = db_to_linear(cfg.rf.antennas.tx.gain_dbi(angle_deg(arr(dir), to_rx))?);
        for (m, &p) in row.iter().enumerate() {
            if m >= cfg.rf.plan.num_channels {
                return Err(Error::Schema(format!("slot {slot}: power row has {} channels, config has {}", row.len(), cfg.rf.plan.num_channels)));
            }
            if p != 0.0 && r.is_active(m, slot) {
                total += p * gt * discrimination / (4.0 * std::f64::consts::PI * d2);
            }
        }
    }
    Ok(total * bw)
}

/// Recompute EPFD for every (slot, satellite, protected user) with the
/// user above the satellite's minimum elevation.
pub fn audit(cfg: &ScenarioConfig, trace_text: &str) -> Result<AuditReport> {
    let (hash, slots) = parse_trace(trace_text)?;
    let expect = ArtifactHeader::for_config(cfg).config_sha256;
    if hash != expect {
        return Err(Error::Schema(format!("trace was written for config {hash}, not {expect}")));
    }
    let world = World::build(cfg)?;
    let users = &world.protected;
    let mut report = AuditReport { protected_users: users.len(), slots: slots.len(), checks: 0, min_margin_db: None, violations: Vec::new() };
    let min_el = cfg.constellation.min_elevation_deg;
    for s in &slots {
        for sat in &s.satellites {
            let sp = arr(&sat.position);
            for r in users {
                let up = arr(&r.position.position);
                let elevation = 90.0 - angle_deg(up, sub(sp, up));
                if elevation < min_el {
                    continue;
                }
                let e = flux(cfg, r, sp, &sat.directions, &sat.power, s.slot)?;
                let margin = if e > 0.0 { r.kappa_dbw_m2 - linear_to_db(e) } else { f64::INFINITY };
                report.checks += 1;
                report.min_margin_db = Some(report.min_margin_db.map_or(margin, |m: f64| m.min(margin)));
                if e > db_to_linear(r.kappa_dbw_m2) * (1.0 + 1e-9) {
                    report.violations.push(AuditViolation { slot: s.slot, sat: sat.sat.0, user: r.id, epfd_dbw_m2: linear_to_db(e), kappa_dbw_m2: r.kappa_dbw_m2, margin_db: margin });
                }
            }
        }
    }
    Ok(report)
}
