//! Numerical laboratory for guided diffusion sampling on tractable targets.

pub mod error;
pub mod metrics;
pub mod models;
pub mod reward;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use models::{ClassPair, GmmComponent, IsotropicGmm, Model, PointCloud};
pub use reward::{RewardKind, RewardSpec, Reweighting, Sign};
pub use rng::{CounterRng, StreamKey};
pub use samplers::{GuidanceConfig, GuidanceMode, PairedBatch, Samples};
pub use schedule::Schedule;
