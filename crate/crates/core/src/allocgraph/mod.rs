//! Beam/channel allocation as a bipartite graph built one edge at a time.

pub mod context;
pub mod generate;
pub mod graph;
pub mod power;
pub mod probability;

pub use context::{AllocContext, BeamSlot, EpfdTerm, SlotInputs};
pub use generate::{generate_allocation, AllocationPolicy, DecodeMode, Decision, Generated, GenerationTrace, Generator, PolicyInput, Query};
pub use graph::{AllocationGraph, EdgeMessage};
pub use power::{update_power, water_fill, PowerUpdateConfig, UpdateReport};
pub use probability::{edge_probability, enumerate_outcomes, graph_probability, latency_proxy};
