use leosched::interference::InterCciMode;
use leosched::simharness::config::{NeighborTopology, ScenarioConfig, Strategy, Topology};
use leosched::simharness::output::csv_bytes;
use leosched::simharness::sweep::regime_base;
use leosched::simharness::{run_episode, simulate, ArtifactHeader, PolicyHandle, RunOptions, World};
use proptest::prelude::*;

fn small(seed: u64) -> ScenarioConfig {
    let mut c = regime_base(seed);
    c.num_slots = 8;
    c
}

#[test]
fn zero_arrivals_give_zero_throughput() {
    for s in Strategy::ALL {
        let mut c = small(3);
        c.strategy = s;
        c.traffic.arrival_rate_pps = 0.0;
        let m = simulate(&c).unwrap().metrics;
        assert_eq!(m.served_bits, 0.0);
        assert_eq!(m.throughput_per_sat_bps, 0.0);
        assert_eq!(m.arrived_bits, 0.0);
        assert_eq!(m.completed_periods + m.expired_periods + m.open_periods, 0);
    }
}

const BOLTZMANN: f64 = 1.380649e-23;
const LIGHT: f64 = 299_792_458.0;

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// One terminal, one satellite, no neighbours and an unbounded backlog: the
/// served volume equals Σ_slots Σ_m β·log2(1 + p·G/N)·Δt with G from the
/// peak antenna gains, free-space loss and the fixed atmospheric loss.
#[test]
fn single_link_matches_closed_form_capacity() {
    let mut c = ScenarioConfig::with_seed(9);
    c.num_slots = 10;
    c.constellation.spot_beams = 1;
    c.traffic.full_buffer = true;
    c.traffic.buffer_capacity_bits = 1e15;
    c.traffic.ttl_slots = 1000;
    c.topology = Topology::Neighbors(NeighborTopology { num_neighbors: 0, num_uts: 1, hotspots: 0, ..Default::default() });
    let policy = PolicyHandle::from_config(&c).unwrap();
    let out = run_episode(&c, &policy, &RunOptions { trace: true, ..Default::default() }).unwrap();
    let world = World::build(&c).unwrap();
    let ut = world.uts[0].position;
    let ut = [ut.x, ut.y, ut.z];

    let plan = c.rf.plan;
    let beta = plan.channel_bandwidth_hz;
    let noise = BOLTZMANN * c.rf.noise_temperature_k * beta;
    let loss_db = 0.5;
    let mut expected = 0.0;
    for slot in &out.trace {
        assert_eq!(slot.satellites.len(), 1);
        let s = &slot.satellites[0];
        let d = norm([s.position.x - ut[0], s.position.y - ut[1], s.position.z - ut[2]]);
        let mut rate = 0.0;
        for (m, &p) in s.power[0].iter().enumerate() {
            if p > 0.0 {
                let f = plan.center_frequency_hz + (m as f64 - 3.5) * beta;
                let fspl = (4.0 * std::f64::consts::PI * d * f / LIGHT).powi(2);
                let g = 10f64.powf((40.0 + 35.0 - loss_db) / 10.0) / fspl;
                rate += beta * (1.0 + p * g / noise).log2();
            }
        }
        assert!((s.rates_bps[0] - rate).abs() <= 1e-6 * rate, "slot {}: {} vs {rate}", slot.slot, s.rates_bps[0]);
        expected += rate * c.slot_s;
    }
    let got = out.metrics.served_bits;
    assert!(expected > 0.0);
    assert!((got - expected).abs() <= 1e-6 * expected, "{got} vs {expected}");
}

#[test]
fn rerun_gives_identical_metrics_csv() {
    for s in Strategy::ALL {
        let mut c = small(5);
        c.strategy = s;
        let h = ArtifactHeader::for_config(&c);
        let a = csv_bytes(&h, &[simulate(&c).unwrap().metrics]).unwrap();
        let b = csv_bytes(&h, &[simulate(&c).unwrap().metrics]).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn without_neighbours_snapshot_timing_is_irrelevant() {
    let mut c = small(2);
    if let Topology::Neighbors(n) = &mut c.topology {
        n.num_neighbors = 0;
    }
    let mut d = c.clone();
    c.allocation.rate_inter_cci = InterCciMode::SameSlot;
    d.allocation.rate_inter_cci = InterCciMode::Estimated;
    assert_eq!(simulate(&c).unwrap().metrics.served_bits, simulate(&d).unwrap().metrics.served_bits);
}

#[test]
fn neighbours_reduce_throughput() {
    let mut alone = small(4);
    if let Topology::Neighbors(n) = &mut alone.topology {
        n.num_neighbors = 0;
    }
    let crowded = small(4);
    let a = simulate(&alone).unwrap().metrics.served_bits;
    let b = simulate(&crowded).unwrap().metrics.served_bits;
    assert!(b < a, "{b} !< {a}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn runs_conserve_bits_and_respect_constraints(
        seed in 0u64..1000,
        strategy in prop::sample::select(Strategy::ALL.to_vec()),
        rate in 0.0f64..400.0,
        ttl in 1u64..20,
        cap in 1e6f64..3e7,
    ) {
        let mut c = small(seed);
        c.strategy = strategy;
        c.traffic.arrival_rate_pps = rate;
        c.traffic.ttl_slots = ttl;
        c.traffic.buffer_capacity_bits = cap;
        let m = simulate(&c).unwrap().metrics;
        prop_assert!(m.conservation_error <= 1e-6, "conservation error {}", m.conservation_error);
        let lhs = m.arrived_bits;
        let rhs = m.served_bits + m.residual_bits + m.dropped_bits + m.expired_bits;
        prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.max(1.0), "{} vs {}", lhs, rhs);
        prop_assert_eq!(m.total_violations(), 0);
        prop_assert!(m.mean_latency_slots >= 0.0 && m.mean_latency_slots <= c.num_slots as f64);
    }
}
