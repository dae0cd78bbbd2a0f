//! Scenario configuration: one JSON document describes a run completely.

use crate::allocgraph::generate::DecodeMode;
use crate::allocgraph::power::PowerUpdateConfig;
use crate::error::{Error, Result};
use crate::geom::ConstellationConfig;
use crate::interference::{InterCciMode, Pointing, PowerLimits};
use crate::policy::neural::PolicyInit;
use crate::rf::{AntennaPair, AtmosphericModel, ChannelPlan, RxAntennaPattern};
use crate::scheduler::KMeansConfig;
use crate::traffic::TrafficModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Proposed,
    FullReuse,
    SingleChannel,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Proposed, Strategy::SingleChannel, Strategy::FullReuse];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::FullReuse => "full_reuse",
            Strategy::SingleChannel => "single_channel",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Strategy::Proposed),
            "full_reuse" => Ok(Strategy::FullReuse),
            "single_channel" => Ok(Strategy::SingleChannel),
            _ => Err(Error::config(format!("unknown strategy {s:?} (expected proposed, full_reuse or single_channel)"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfConfig {
    pub antennas: AntennaPair,
    pub plan: ChannelPlan,
    pub noise_temperature_k: f64,
    pub atmosphere: AtmosphericModel,
    pub limits: PowerLimits,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self { antennas: AntennaPair::default(), plan: ChannelPlan::default(), noise_temperature_k: 290.0, atmosphere: AtmosphericModel::default(), limits: PowerLimits::default() }
    }
}

/// One focal satellite plus `num_neighbors` stationary satellites whose
/// footprints overlap it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborTopology {
    pub num_neighbors: usize,
    pub center_lat_deg: f64,
    pub center_lon_deg: f64,
    /// Sub-point separation of each neighbour, as a fraction of the footprint
    /// half-angle, drawn uniformly from this range.
    pub offset_frac: [f64; 2],
    /// Terminals served by the focal satellite.
    pub num_uts: usize,
    /// Terminals per neighbour; defaults to `num_uts`.
    pub neighbor_uts: Option<usize>,
    /// Terminals cluster around this many hotspots; 0 drops them uniformly
    /// over the footprint.
    pub hotspots: usize,
    pub hotspot_radius_deg: f64,
    /// Hotspot centres lie within this fraction of the focal footprint.
    pub hotspot_spread_frac: f64,
}

impl Default for NeighborTopology {
    fn default() -> Self {
        Self {
            num_neighbors: 2,
            center_lat_deg: 0.0,
            center_lon_deg: 0.0,
            offset_frac: [0.1, 0.6],
            num_uts: 200,
            neighbor_uts: None,
            hotspots: 0,
            hotspot_radius_deg: 0.5,
            hotspot_spread_frac: 0.5,
        }
    }
}

/// Full Walker constellation with terminals dropped in a ground region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerTopology {
    pub phasing: usize,
    pub num_uts: usize,
    pub region_lat_deg: f64,
    pub region_lon_deg: f64,
    pub region_radius_deg: f64,
}

impl Default for WalkerTopology {
    fn default() -> Self {
        Self { phasing: 1, num_uts: 200, region_lat_deg: 0.0, region_lon_deg: 0.0, region_radius_deg: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    Neighbors(NeighborTopology),
    Walker(WalkerTopology),
}

impl Default for Topology {
    fn default() -> Self {
        Topology::Neighbors(NeighborTopology::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    /// Channel-aggregation limit N per beam.
    pub max_channels: usize,
    pub power_update: PowerUpdateConfig,
    pub kmeans: KMeansConfig,
    /// Which neighbour snapshots the rate evaluation sees.
    pub rate_inter_cci: InterCciMode,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self { max_channels: 2, power_update: PowerUpdateConfig::default(), kmeans: KMeansConfig::default(), rate_inter_cci: InterCciMode::SameSlot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Heuristic,
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Trained parameters; a neural policy without a file starts from `init`.
    pub params_path: Option<PathBuf>,
    pub decode: DecodeMode,
    pub threshold_bps: f64,
    /// Heuristic only: smallest net-to-own gain ratio for a co-channel edge.
    pub min_efficiency: f64,
    pub init: PolicyInit,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { kind: PolicyKind::Heuristic, params_path: None, decode: DecodeMode::Greedy, threshold_bps: 0.0, min_efficiency: 0.5, init: PolicyInit::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtectedLocation {
    Fixed { lat_deg: f64, lon_deg: f64 },
    /// Uniform within this fraction of the focal footprint half-angle.
    RandomNearFocal { max_angle_frac: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectedUserSpec {
    pub id: usize,
    pub location: ProtectedLocation,
    /// Channel sets cycled slot by slot; one entry means a fixed set.
    pub channels: Vec<BTreeSet<usize>>,
    #[serde(default)]
    pub pointing: Pointing,
    #[serde(default = "default_kappa")]
    pub kappa_dbw_m2: f64,
    #[serde(default)]
    pub rx: RxAntennaPattern,
}

fn default_kappa() -> f64 {
    -160.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtectedConfig {
    /// JSON file holding a list of protected-user entries.
    pub registry_path: Option<PathBuf>,
    pub users: Vec<ProtectedUserSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "default_num_slots")]
    pub num_slots: u64,
    #[serde(default = "default_slot_s")]
    pub slot_s: f64,
    #[serde(default)]
    pub strategy: Strategy,
    /// Multiplies the satellite power budget.
    #[serde(default = "default_power_scale")]
    pub power_scale: f64,
    #[serde(default)]
    pub constellation: ConstellationConfig,
    #[serde(default)]
    pub rf: RfConfig,
    #[serde(default)]
    pub traffic: TrafficModel,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub allocation: AllocationConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub protected: ProtectedConfig,
}

fn default_num_slots() -> u64 {
    100
}

fn default_slot_s() -> f64 {
    0.01
}

fn default_power_scale() -> f64 {
    1.0
}

impl ScenarioConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            num_slots: default_num_slots(),
            slot_s: default_slot_s(),
            strategy: Strategy::default(),
            power_scale: 1.0,
            constellation: ConstellationConfig::default(),
            rf: RfConfig::default(),
            traffic: TrafficModel::default(),
            topology: Topology::default(),
            allocation: AllocationConfig::default(),
            policy: PolicyConfig::default(),
            protected: ProtectedConfig::default(),
        }
    }

    /// Parse JSON text; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Schema(inner.to_string())
            } else {
                Error::Schema(format!("at `{path}`: {inner}"))
            }
        })
    }

    /// Load, resolve relative paths against the file's directory, and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.policy.params_path);
        fix(&mut self.protected.registry_path);
    }

    pub fn spot_beams(&self) -> usize {
        self.constellation.spot_beams
    }

    pub fn validate(&self) -> Result<()> {
        self.constellation.validate()?;
        self.rf.antennas.tx.validate()?;
        self.rf.antennas.rx.validate()?;
        self.rf.plan.validate()?;
        self.rf.atmosphere.validate()?;
        self.rf.limits.validate()?;
        self.traffic.validate()?;
        if !(self.rf.noise_temperature_k > 0.0 && self.rf.noise_temperature_k.is_finite()) {
            return Err(Error::config("rf.noise_temperature_k must be positive"));
        }
        if self.num_slots == 0 {
            return Err(Error::config("num_slots must be at least 1"));
        }
        if !(self.slot_s > 0.0 && self.slot_s.is_finite()) {
            return Err(Error::config("slot_s must be positive"));
        }
        if !(self.power_scale > 0.0 && self.power_scale.is_finite()) {
            return Err(Error::config("power_scale must be positive"));
        }
        if self.constellation.spot_beams == 0 {
            return Err(Error::config("constellation.spot_beams must be at least 1"));
        }
        if self.allocation.max_channels == 0 {
            return Err(Error::config("allocation.max_channels must be at least 1"));
        }
        if !(self.allocation.power_update.tol_rel >= 0.0) {
            return Err(Error::config("allocation.power_update.tol_rel must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.policy.min_efficiency) {
            return Err(Error::config("policy.min_efficiency must lie in [0, 1]"));
        }
        match &self.topology {
            Topology::Neighbors(n) => {
                let [lo, hi] = n.offset_frac;
                if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                    return Err(Error::config("topology.offset_frac must satisfy 0 <= min <= max"));
                }
                if n.hotspots > 0 && !(n.hotspot_radius_deg > 0.0) {
                    return Err(Error::config("topology.hotspot_radius_deg must be positive"));
                }
            }
            Topology::Walker(w) => {
                if !(w.region_radius_deg > 0.0) {
                    return Err(Error::config("topology.region_radius_deg must be positive"));
                }
            }
        }
        if let Some(p) = &self.policy.params_path {
            if !p.exists() {
                return Err(Error::config(format!("policy.params_path {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.protected.registry_path {
            if !p.exists() {
                return Err(Error::config(format!("protected.registry_path {} does not exist", p.display())));
            }
        }
        for u in &self.protected.users {
            validate_spec(u, self.rf.plan.num_channels)?;
        }
        Ok(())
    }

    /// Inline protected users plus those from the registry file.
    pub fn protected_specs(&self) -> Result<Vec<ProtectedUserSpec>> {
        let mut out = self.protected.users.clone();
        if let Some(p) = &self.protected.registry_path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let more: Vec<ProtectedUserSpec> = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema(format!("registry {} at `{}`: {}", p.display(), e.path(), e.inner())))?;
            for u in &more {
                validate_spec(u, self.rf.plan.num_channels)?;
            }
            out.extend(more);
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn validate_spec(u: &ProtectedUserSpec, num_channels: usize) -> Result<()> {
    if u.channels.iter().flatten().any(|&m| m >= num_channels) {
        return Err(Error::config(format!("protected user {} lists a channel outside 0..{num_channels}", u.id)));
    }
    if !u.kappa_dbw_m2.is_finite() {
        return Err(Error::config(format!("protected user {} has a non-finite threshold", u.id)));
    }
    u.rx.validate()
}
