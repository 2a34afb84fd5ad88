use std::path::{Path, PathBuf};

use guidelab::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

/// A shipped config shrunk to run in well under a second.
#[allow(dead_code)]
pub fn tiny(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = shipped(name);
    cfg.trials = 64;
    cfg.schedule.n_steps = 200;
    cfg.outputs = out.to_path_buf();
    cfg
}
