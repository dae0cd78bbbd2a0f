//! Scenario configuration, the slot-level simulator, sweeps and artefacts.

pub mod config;
pub mod engine;
pub mod output;
pub mod sweep;
pub mod world;

pub use config::{ScenarioConfig, Strategy, Topology};
pub use engine::{run_episode, simulate, Metrics, PolicyHandle, RunOptions, RunOutput, SlotTrace};
pub use output::ArtifactHeader;
pub use sweep::{preset, run_sweep, summarize, Axis, ScenarioEnv, SweepSpec, TidyRow};
pub use world::World;
