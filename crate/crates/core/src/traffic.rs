//! Per-terminal downlink buffers: arrivals, FIFO service, waiting clocks,
//! TTL expiry and handover of residual data.

use crate::error::{Error, Result};
use crate::ids::{SatId, UtId};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficModel {
    /// Mean packet arrivals per second per terminal.
    pub arrival_rate_pps: f64,
    pub packet_bits: f64,
    pub buffer_capacity_bits: f64,
    pub ttl_slots: u64,
    /// Refill every buffer to capacity each slot (saturated demand).
    pub full_buffer: bool,
}

impl Default for TrafficModel {
    fn default() -> Self {
        Self { arrival_rate_pps: 100.0, packet_bits: 1e6, buffer_capacity_bits: 100e6, ttl_slots: 500, full_buffer: false }
    }
}

impl TrafficModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.buffer_capacity_bits > 0.0 && self.buffer_capacity_bits.is_finite()) {
            return Err(Error::config("buffer_capacity_bits must be positive"));
        }
        if !(self.arrival_rate_pps >= 0.0 && self.arrival_rate_pps.is_finite()) {
            return Err(Error::config("arrival_rate_pps must be finite and >= 0"));
        }
        if !(self.packet_bits > 0.0 && self.packet_bits.is_finite()) {
            return Err(Error::config("packet_bits must be positive"));
        }
        Ok(())
    }
}

/// Buffer of one terminal, held by the satellite that currently serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtQueue {
    pub ut: UtId,
    pub owner: SatId,
    pub q_bits: f64,
    /// Waiting clock τ in slots since the current busy period began.
    pub wait_slots: u64,
    /// Slot t⁰ of the first arrival of the current busy period.
    pub arrival_slot: Option<u64>,
    pub served_in_period: f64,
}

/// Cumulative bit accounting of one terminal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BitLedger {
    pub arrived: f64,
    pub served: f64,
    pub dropped: f64,
    pub expired: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub ut: UtId,
    pub sat: SatId,
    pub arrival_slot: u64,
    pub completion_slot: u64,
    pub latency_slots: u64,
    /// Bits delivered, or discarded when `expired`.
    pub bits: f64,
    pub expired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub queues: Vec<UtQueue>,
    pub ledger: Vec<BitLedger>,
}

impl QueueState {
    /// Empty buffers; `owners[i]` is the initial serving satellite of terminal i.
    pub fn new(owners: &[SatId]) -> Self {
        let queues = owners
            .iter()
            .enumerate()
            .map(|(i, &owner)| UtQueue { ut: UtId(i), owner, q_bits: 0.0, wait_slots: 0, arrival_slot: None, served_in_period: 0.0 })
            .collect();
        Self { queues, ledger: vec![BitLedger::default(); owners.len()] }
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn queue(&self, ut: UtId) -> &UtQueue {
        &self.queues[ut.0]
    }

    fn accept(&mut self, i: usize, bits: f64, t: u64, capacity: f64) {
        let q = &mut self.queues[i];
        let room = (capacity - q.q_bits).max(0.0);
        let accepted = bits.min(room);
        self.ledger[i].arrived += bits;
        self.ledger[i].dropped += bits - accepted;
        if accepted > 0.0 {
            if q.q_bits == 0.0 {
                q.arrival_slot = Some(t);
                q.wait_slots = 0;
                q.served_in_period = 0.0;
            }
            q.q_bits += accepted;
        }
    }

    /// Draw this slot's arrivals for every terminal, in id order.
    pub fn enqueue_arrivals<R: Rng + ?Sized>(&mut self, t: u64, model: &TrafficModel, slot_s: f64, rng: &mut R) {
        for i in 0..self.queues.len() {
            let bits = if model.full_buffer {
                (model.buffer_capacity_bits - self.queues[i].q_bits).max(0.0)
            } else {
                poisson_count(model.arrival_rate_pps * slot_s, rng) as f64 * model.packet_bits
            };
            if bits > 0.0 {
                self.accept(i, bits, t, model.buffer_capacity_bits);
            }
        }
    }

    /// Inject a known amount of data (tests and replay).
    pub fn push_bits(&mut self, ut: UtId, bits: f64, t: u64, capacity: f64) {
        self.accept(ut.0, bits, t, capacity);
    }

    /// Serve terminal `ut` at `rate_bps` for one slot; returns bits delivered.
    pub fn serve(&mut self, ut: UtId, rate_bps: f64, slot_s: f64) -> f64 {
        let q = &mut self.queues[ut.0];
        let (delta, rest) = transmit_step(q.q_bits, rate_bps, slot_s);
        q.q_bits = rest;
        q.served_in_period += delta;
        self.ledger[ut.0].served += delta;
        delta
    }

    /// End-of-slot bookkeeping: completions for buffers that emptied,
    /// clock advance for the rest, TTL expiry.
    pub fn advance_clocks_and_expire(&mut self, t: u64, ttl_slots: u64) -> Vec<CompletionRecord> {
        let mut out = Vec::new();
        for (q, ledger) in self.queues.iter_mut().zip(self.ledger.iter_mut()) {
            let Some(t0) = q.arrival_slot else { continue };
            if q.q_bits <= 0.0 {
                q.q_bits = 0.0;
                out.push(CompletionRecord {
                    ut: q.ut,
                    sat: q.owner,
                    arrival_slot: t0,
                    completion_slot: t,
                    latency_slots: t - t0,
                    bits: q.served_in_period,
                    expired: false,
                });
                q.arrival_slot = None;
                q.served_in_period = 0.0;
                continue;
            }
            q.wait_slots += 1;
            if q.wait_slots > ttl_slots {
                ledger.expired += q.q_bits;
                out.push(CompletionRecord {
                    ut: q.ut,
                    sat: q.owner,
                    arrival_slot: t0,
                    completion_slot: t,
                    latency_slots: t - t0,
                    bits: q.q_bits,
                    expired: true,
                });
                q.q_bits = 0.0;
                q.arrival_slot = None;
                q.wait_slots = 0;
                q.served_in_period = 0.0;
            }
        }
        out
    }

    /// Move a terminal's residual data and clock to another satellite.
    /// Returns the bits dropped for lack of room at the destination.
    pub fn handover_transfer(&mut self, ut: UtId, to: SatId, capacity: f64) -> f64 {
        let q = &mut self.queues[ut.0];
        q.owner = to;
        let overflow = (q.q_bits - capacity).max(0.0);
        if overflow > 0.0 {
            q.q_bits -= overflow;
            self.ledger[ut.0].dropped += overflow;
        }
        overflow
    }

    /// Terminals owned by `sat` with data waiting.
    pub fn active_for(&self, sat: SatId) -> impl Iterator<Item = &UtQueue> {
        self.queues.iter().filter(move |q| q.owner == sat && q.q_bits > 0.0)
    }

    pub fn residual(&self, ut: UtId) -> f64 {
        self.queues[ut.0].q_bits
    }

    /// Largest |arrived − served − residual − dropped − expired| relative to arrivals.
    pub fn conservation_error(&self) -> f64 {
        self.ledger
            .iter()
            .zip(&self.queues)
            .map(|(l, q)| {
                let gap = l.arrived - l.served - q.q_bits - l.dropped - l.expired;
                gap.abs() / l.arrived.max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// ΔQ = min(Q, R·ΔT) and the remaining backlog.
pub fn transmit_step(q_bits: f64, rate_bps: f64, slot_s: f64) -> (f64, f64) {
    let delta = q_bits.min((rate_bps * slot_s).max(0.0));
    (delta, q_bits - delta)
}

pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}
