pub mod allocgraph;
pub mod audit;
pub mod baselines;
pub mod error;
pub mod geom;
pub mod interference;
pub mod policy;
pub mod ids;
pub mod rf;
pub mod scheduler;
pub mod simharness;
pub mod traffic;
pub mod units;

pub use error::{Error, Result};
pub use ids::{SatId, UtId};
