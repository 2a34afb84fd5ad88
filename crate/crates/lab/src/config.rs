//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use guidelab_core::models::{ClassPair, GmmComponent, IsotropicGmm, Model};
use guidelab_core::reward::RewardSpec;
use guidelab_core::samplers::GuidanceMode;
use guidelab_core::schedule::{Schedule, DEFAULT_C0, DEFAULT_C1, DEFAULT_STEPS};
use serde::{Deserialize, Serialize};

use crate::swissroll::generate_swissroll;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl ComponentSpec {
    fn build(specs: &[ComponentSpec]) -> anyhow::Result<IsotropicGmm> {
        ensure!(!specs.is_empty(), "mixture needs at least one component");
        ensure!(
            specs.iter().all(|c| c.weight > 0.0 && c.weight.is_finite()),
            "component weights must be positive"
        );
        Ok(IsotropicGmm::new(
            specs
                .iter()
                .map(|c| GmmComponent::new(c.weight, c.mean.clone(), c.variance))
                .collect(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Gmm {
        components: Vec<ComponentSpec>,
    },
    SwissRoll {
        n_points: usize,
        seed: u64,
    },
    /// Target class `conditional` and the remaining classes `other`; the
    /// marginal is their prior-weighted mixture.
    ClassPair {
        conditional: Vec<ComponentSpec>,
        other: Vec<ComponentSpec>,
        prior: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardConfig {
    QuadraticWell {
        target: Vec<f64>,
        beta: f64,
    },
    IndicatorBand {
        axis: usize,
        lo: f64,
        hi: f64,
        height: f64,
        beta: f64,
    },
    /// `J = 1/p(c|x)` for the configured class pair.
    ReciprocalClassifierCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub n_steps: usize,
    pub c0: f64,
    pub c1: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            n_steps: DEFAULT_STEPS,
            c0: DEFAULT_C0,
            c1: DEFAULT_C1,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> anyhow::Result<Schedule> {
        Ok(Schedule::new(self.n_steps, self.c0, self.c1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default)]
    pub record_trajectories: bool,
    #[serde(default)]
    pub decouple_noise: bool,
}

/// Optional metric settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Closed interval on the first coordinate whose sample mass is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// Histogram range and bin count for density comparisons in one dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramConfig>,
    /// TV levels for the tail relative-error diagnostic (class pairs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail_tv: Vec<f64>,
    /// Model time at which the classifier is evaluated; 1 is clean data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: String,
    pub w_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub outputs: PathBuf,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardConfig>,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

pub fn parse_mode(s: &str) -> anyhow::Result<GuidanceMode> {
    Ok(match s {
        "none" => GuidanceMode::None,
        "conditional" => GuidanceMode::Conditional,
        "classifier_guidance" => GuidanceMode::ClassifierGuidance,
        "cfg" => GuidanceMode::Cfg,
        "reward_improve" => GuidanceMode::RewardImprove,
        "cost_reduce" => GuidanceMode::CostReduce,
        other => bail!("unknown guidance mode {other:?}"),
    })
}

/// Models built from a config.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: Model,
    pub pair: Option<ClassPair>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn mode(&self) -> anyhow::Result<GuidanceMode> {
        parse_mode(&self.mode)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.name.is_empty(), "name must not be empty");
        ensure!(!self.w_grid.is_empty(), "w_grid must not be empty");
        ensure!(
            self.w_grid.iter().all(|w| *w >= 0.0 && w.is_finite()),
            "w_grid entries must be finite and >= 0"
        );
        ensure!(self.trials >= 1, "trials must be >= 1");
        let mode = self.mode()?;
        self.schedule.build()?;
        let built = self.build_model()?;
        match (mode, &self.reward) {
            (GuidanceMode::Cfg | GuidanceMode::ClassifierGuidance | GuidanceMode::Conditional, _) => {
                ensure!(built.pair.is_some(), "mode {mode} needs a class_pair model")
            }
            (GuidanceMode::RewardImprove | GuidanceMode::CostReduce, None) => {
                bail!("mode {mode} needs a [reward] section")
            }
            _ => {}
        }
        if mode == GuidanceMode::Conditional || mode == GuidanceMode::None {
            ensure!(
                self.w_grid.iter().all(|&w| w == 0.0),
                "mode {mode} has no guidance scale; use w_grid = [0]"
            );
        }
        if self.reward.is_some() {
            self.reward_spec(&built)?;
        }
        if let Some([lo, hi]) = self.evaluation.interval {
            ensure!(lo < hi, "evaluation.interval needs lo < hi");
        }
        if let Some(h) = self.evaluation.histogram {
            ensure!(h.lo < h.hi && h.bins > 0, "evaluation.histogram needs lo < hi and bins > 0");
        }
        ensure!(
            self.evaluation.tail_tv.iter().all(|v| *v >= 0.0),
            "evaluation.tail_tv entries must be >= 0"
        );
        Ok(())
    }

    /// Model sampled by the unguided arm, plus the class pair if any.
    pub fn build_model(&self) -> anyhow::Result<BuiltModel> {
        Ok(match &self.model {
            ModelSpec::Gmm { components } => BuiltModel {
                model: ComponentSpec::build(components)?.into(),
                pair: None,
            },
            ModelSpec::SwissRoll { n_points, seed } => BuiltModel {
                model: generate_swissroll(*n_points, *seed)?.into(),
                pair: None,
            },
            ModelSpec::ClassPair {
                conditional,
                other,
                prior,
            } => {
                let pair = ClassPair::from_classes(ComponentSpec::build(conditional)?, ComponentSpec::build(other)?, *prior)?;
                BuiltModel {
                    model: pair.conditional.clone().into(),
                    pair: Some(pair),
                }
            }
        })
    }

    pub fn reward_spec(&self, built: &BuiltModel) -> anyhow::Result<Option<RewardSpec>> {
        let Some(r) = &self.reward else { return Ok(None) };
        let dim = built.model.dim();
        Ok(Some(match r {
            RewardConfig::QuadraticWell { target, beta } => {
                ensure!(target.len() == dim, "reward target has dimension {} but model has {dim}", target.len());
                RewardSpec::quadratic_well(target.clone(), *beta)?
            }
            RewardConfig::IndicatorBand {
                axis,
                lo,
                hi,
                height,
                beta,
            } => {
                ensure!(*axis < dim, "band axis {axis} out of range for dimension {dim}");
                RewardSpec::indicator_band(*axis, *lo, *hi, *height, *beta)?
            }
            RewardConfig::ReciprocalClassifierCost => {
                let pair = built
                    .pair
                    .clone()
                    .context("reciprocal_classifier_cost needs a class_pair model")?;
                RewardSpec::reciprocal_classifier_cost(pair)
            }
        }))
    }
}
