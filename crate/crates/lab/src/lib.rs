//! Experiment runner, verification suite and plotting for `guidelab-core`.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod probe;
pub mod swissroll;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentOutput, MetricsRow};
pub use verify::{run_verification_suite, Check, VerifyOptions, VerifyRow};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fast: bool,
    pub out: Option<std::path::PathBuf>,
    pub record_trajectories: bool,
    pub decouple_noise: bool,
}

impl Overrides {
    /// The effective config; this is what `config.snapshot` records.
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if self.fast {
            cfg.trials = (cfg.trials / 10).max(1);
        }
        if let Some(o) = &self.out {
            cfg.outputs = o.clone();
        }
        cfg.flags.record_trajectories |= self.record_trajectories;
        cfg.flags.decouple_noise |= self.decouple_noise;
        cfg
    }
}
