//! Config-driven experiment runner.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use guidelab_core::metrics::{
    classifier_metrics, fraction_in_box, histogram_tv_exact, tail_relative_error, HistogramGrid,
};
use guidelab_core::models::{ClassPair, IsotropicGmm, Model};
use guidelab_core::reward::{RewardKind, RewardSpec, Reweighting, Sign};
use guidelab_core::samplers::{
    record_trajectory, sample_arm, GuidanceConfig, GuidanceMode, PairOptions, PairedBatch,
};
use guidelab_core::schedule::Schedule;
use guidelab_core::stats::MeanEstimate;

use crate::config::ExperimentConfig;
use crate::plot::{self, Axes, Series};

/// Trials whose full paths are written when trajectories are requested.
pub const MAX_RECORDED_TRAJECTORIES: usize = 16;
const MAX_SCATTER_POINTS: usize = 2000;

/// One `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub w: f64,
    pub values: Vec<(String, f64)>,
}

impl MetricsRow {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Everything derived from a validated config before sampling.
struct Plan {
    schedule: Schedule,
    /// Guided sampler at `w = 0`; rescaled per grid point.
    template: GuidanceConfig,
    unguided: GuidanceConfig,
    model: Model,
    pair: Option<ClassPair>,
    reward: Option<RewardSpec>,
}

impl Plan {
    fn new(cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        let built = cfg.build_model()?;
        let reward = cfg.reward_spec(&built)?;
        let mode = cfg.mode()?;
        let pair = built.pair.clone();
        let need_pair = || pair.as_ref().context("mode needs a class pair");
        let template = match mode {
            GuidanceMode::None => GuidanceConfig::unguided(built.model.clone()),
            GuidanceMode::Conditional => GuidanceConfig::conditional(need_pair()?),
            GuidanceMode::Cfg => GuidanceConfig::cfg(need_pair()?, 0.0)?,
            GuidanceMode::ClassifierGuidance => GuidanceConfig::classifier_guidance(need_pair()?, 0.0)?,
            GuidanceMode::RewardImprove | GuidanceMode::CostReduce => {
                let spec = reward.as_ref().context("mode needs a reward")?;
                let rw = match (&spec.kind, mode) {
                    (RewardKind::ReciprocalClassifierCost { pair }, _) => Reweighting::classifier_cost(pair),
                    (_, GuidanceMode::CostReduce) => {
                        Reweighting::new(&built.model, &spec.clone().with_sign(Sign::Cost))?
                    }
                    _ => Reweighting::new(&built.model, spec)?,
                };
                if mode == GuidanceMode::RewardImprove {
                    GuidanceConfig::reward_improve(&rw, 0.0)?
                } else {
                    GuidanceConfig::cost_reduce(&rw, 0.0)?
                }
            }
        };
        let unguided = template.base_config();
        Ok(Self {
            schedule: cfg.schedule.build()?,
            model: unguided.base().clone(),
            template,
            unguided,
            pair,
            reward,
        })
    }
}

/// Formats a float so that it parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn w_label(w: f64) -> String {
    fmt_f64(w)
}

/// Runs every grid point of `cfg` and writes the artifact directory.
///
/// The unguided arm is sampled once and shared by all `w`; with the same
/// master seed every guided arm reuses the same per-trial streams, so
/// differences across `w` carry common random numbers.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentOutput> {
    cfg.validate()?;
    let plan = Plan::new(cfg)?;
    let dir = cfg.outputs.clone();
    fs::create_dir_all(dir.join("plots")).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.snapshot"), cfg.to_toml()?)?;

    let opts = PairOptions {
        decouple_noise: cfg.flags.decouple_noise,
        ..Default::default()
    };
    let s = &plan.schedule;
    let unguided = sample_arm(&plan.unguided, s, cfg.trials, cfg.master_seed, &opts, false)
        .with_context(|| format!("experiment {}, unguided arm", cfg.name))?;

    let mut rows = Vec::with_capacity(cfg.w_grid.len());
    let mut batches = Vec::with_capacity(cfg.w_grid.len());
    for &w in &cfg.w_grid {
        let ctx = || format!("experiment {}, w={w}", cfg.name);
        let guided_cfg = plan.template.with_w(w).with_context(ctx)?;
        // at w = 0 the guided sampler never touches the secondary model and
        // shares the unguided noise, so its endpoints are the unguided ones
        let guided = if w == 0.0 && !opts.decouple_noise {
            unguided.clone()
        } else {
            sample_arm(&guided_cfg, s, cfg.trials, cfg.master_seed, &opts, true).with_context(ctx)?
        };
        let batch = PairedBatch::from_arms(guided, unguided.clone(), &guided_cfg, &plan.unguided, s, cfg.master_seed)?;
        let row = metrics_for(cfg, &plan, &batch).with_context(ctx)?;
        write_samples(&dir.join(format!("samples_w={}.csv", w_label(w))), &batch)?;
        if cfg.flags.record_trajectories {
            write_trajectories(cfg, &plan, &guided_cfg, w, &opts)?;
        }
        rows.push(row);
        batches.push(batch);
    }
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    write_plots(cfg, &plan, &rows, &batches, &dir.join("plots"))?;
    Ok(ExperimentOutput { dir, rows })
}

fn data_gmm(plan: &Plan) -> Option<&IsotropicGmm> {
    plan.model.as_gmm().filter(|g| g.dim() == 1)
}

fn metrics_for(cfg: &ExperimentConfig, plan: &Plan, batch: &PairedBatch) -> anyhow::Result<MetricsRow> {
    let mut v: Vec<(String, f64)> = vec![("n_trials".into(), batch.len() as f64)];
    let d = batch.guided.dim();
    for axis in 0..d {
        let m = MeanEstimate::from_slice(&batch.guided.column(axis));
        v.push((format!("mean_y{}", axis + 1), m.mean));
        v.push((format!("mean_y{}_stderr", axis + 1), m.stderr));
    }

    if let Some(pair) = &plan.pair {
        let t_eval = cfg.evaluation.classifier_time.unwrap_or(1.0);
        let m = classifier_metrics(batch, pair, t_eval)?;
        v.extend([
            ("proportion_improved".into(), m.proportion_improved),
            ("proportion_improved_stderr".into(), m.proportion_improved_stderr),
            ("mean_neg_reciprocal".into(), m.mean_neg_reciprocal),
            ("mean_neg_reciprocal_stderr".into(), m.mean_neg_reciprocal_stderr),
            ("unguided_mean_neg_reciprocal".into(), m.unguided_mean_neg_reciprocal),
            ("unguided_mean_neg_reciprocal_stderr".into(), m.unguided_mean_neg_reciprocal_stderr),
            ("paired_gain".into(), m.paired_gain),
            ("paired_gain_stderr".into(), m.paired_gain_stderr),
        ]);
        for &tv in &cfg.evaluation.tail_tv {
            // undefined when guidance does not significantly lower the cost
            let r = tail_relative_error(batch, |x| pair.classifier_prob(t_eval, x).map(|p| 1.0 / p), tv).ok();
            v.push((format!("tail_ratio_tv={tv}"), r.map_or(f64::NAN, |r| r.ratio)));
            v.push((format!("tail_ratio_stderr_tv={tv}"), r.map_or(f64::NAN, |r| r.ratio_stderr)));
        }
    }

    if let Some(spec) = &plan.reward {
        let prefix = match spec.sign {
            Sign::Reward => "reward",
            Sign::Cost => "cost",
        };
        let g = batch.guided.rows().map(|x| spec.value(x)).collect::<Result<Vec<_>, _>>()?;
        let u = batch.unguided.rows().map(|x| spec.value(x)).collect::<Result<Vec<_>, _>>()?;
        let diff: Vec<f64> = g.iter().zip(&u).map(|(a, b)| a - b).collect();
        let (eg, eu, ed) = (
            MeanEstimate::from_slice(&g),
            MeanEstimate::from_slice(&u),
            MeanEstimate::from_slice(&diff),
        );
        v.extend([
            (format!("{prefix}_mean"), eg.mean),
            (format!("{prefix}_mean_stderr"), eg.stderr),
            (format!("unguided_{prefix}_mean"), eu.mean),
            (format!("unguided_{prefix}_mean_stderr"), eu.stderr),
            (format!("paired_{prefix}_gap"), ed.mean),
            (format!("paired_{prefix}_gap_stderr"), ed.stderr),
        ]);
        if let RewardKind::IndicatorBand { axis, lo, hi, .. } = spec.kind {
            let (mut a, mut b) = (vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d]);
            a[axis] = lo;
            b[axis] = hi;
            v.push(("frac_in_band".into(), fraction_in_box(&batch.guided, &a, &b)));
        }
    }

    if let Some([lo, hi]) = cfg.evaluation.interval {
        let (mut a, mut b) = (vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d]);
        a[0] = lo;
        b[0] = hi;
        v.push(("frac_in_interval".into(), fraction_in_box(&batch.guided, &a, &b)));
    }

    if let (Some(h), Some(g)) = (cfg.evaluation.histogram, data_gmm(plan)) {
        let tv = histogram_tv_exact(&batch.guided, |x| g.axis_cdf(1.0, 0, x), h.lo, h.hi, h.bins)?;
        v.push(("tv_vs_data".into(), tv));
    }

    Ok(MetricsRow {
        experiment: cfg.name.clone(),
        w: batch.w,
        values: v,
    })
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    let Some(first) = rows.first() else {
        wr.flush()?;
        return Ok(());
    };
    let mut header = vec!["experiment".to_string(), "w".to_string()];
    header.extend(first.values.iter().map(|(k, _)| k.clone()));
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.experiment.clone(), fmt_f64(r.w)];
        rec.extend(r.values.iter().map(|(_, v)| fmt_f64(*v)));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

fn write_samples(path: &Path, batch: &PairedBatch) -> anyhow::Result<()> {
    let d = batch.guided.dim();
    let mut wr = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string(), "arm".to_string()];
    header.extend((1..=d).map(|i| format!("y_{i}")));
    header.push("seed".into());
    wr.write_record(&header)?;
    for (arm, samples) in [("guided", &batch.guided), ("unguided", &batch.unguided)] {
        for (i, row) in samples.rows().enumerate() {
            let mut rec = vec![i.to_string(), arm.to_string()];
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
            rec.push(batch.seeds[i].to_string());
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

fn write_trajectories(
    cfg: &ExperimentConfig,
    plan: &Plan,
    guided_cfg: &GuidanceConfig,
    w: f64,
    opts: &PairOptions,
) -> anyhow::Result<()> {
    let path = cfg.outputs.join(format!("trajectories_w={}.csv", w_label(w)));
    let d = guided_cfg.dim();
    let mut wr = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string(), "arm".into(), "n".into(), "alpha_bar".into()];
    header.extend((1..=d).map(|i| format!("y_{i}")));
    wr.write_record(&header)?;
    for trial in 0..cfg.trials.min(MAX_RECORDED_TRAJECTORIES) as u64 {
        for (arm, c, guided) in [("guided", guided_cfg, true), ("unguided", &plan.unguided, false)] {
            let tr = record_trajectory(c, &plan.schedule, cfg.master_seed, trial, guided, opts)?;
            for (n, ab, y) in &tr.states {
                let mut rec = vec![trial.to_string(), arm.to_string(), n.to_string(), fmt_f64(*ab)];
                rec.extend(y.iter().map(|v| fmt_f64(*v)));
                wr.write_record(&rec)?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

fn series_vs_w(rows: &[MetricsRow], key: &str, name: &str) -> Option<Series> {
    let points = rows
        .iter()
        .map(|r| r.get(key).map(|v| (r.w, v)))
        .collect::<Option<Vec<_>>>()?;
    let errors = rows
        .iter()
        .map(|r| r.get(&format!("{key}_stderr")))
        .collect::<Option<Vec<_>>>();
    Some(Series {
        name: name.into(),
        points,
        errors,
    })
}

fn write_plots(
    cfg: &ExperimentConfig,
    plan: &Plan,
    rows: &[MetricsRow],
    batches: &[PairedBatch],
    dir: &Path,
) -> anyhow::Result<()> {
    let ax = Axes {
        log_x: cfg.w_grid.iter().all(|&w| w > 0.0),
    };
    let title = &cfg.name;
    if let Some(s) = series_vs_w(rows, "proportion_improved", "guided vs unguided") {
        let svg = plot::line_chart(title, "guidance scale w", "proportion improved", &[s], ax);
        fs::write(dir.join("proportion_improved.svg"), svg)?;
    }
    if let Some(s) = series_vs_w(rows, "mean_neg_reciprocal", "mean -1/p(c|Y)") {
        let svg = plot::line_chart(title, "guidance scale w", "mean -1/p(c|Y)", &[s], ax);
        fs::write(dir.join("mean_neg_reciprocal.svg"), svg)?;
    }
    for key in ["reward_mean", "cost_mean"] {
        if let Some(s) = series_vs_w(rows, key, key) {
            let svg = plot::line_chart(title, "guidance scale w", key, &[s], ax);
            fs::write(dir.join(format!("{key}.svg")), svg)?;
        }
    }

    let d = plan.template.dim();
    if d == 1 && !batches.is_empty() {
        let (lo, hi, bins) = match cfg.evaluation.histogram {
            Some(h) => (h.lo, h.hi, h.bins.min(100)),
            None => {
                let all = batches.iter().flat_map(|b| b.guided.as_flat().iter().copied());
                let (a, b) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
                (a, b.max(a + 1e-9), 60)
            }
        };
        let grid = HistogramGrid::new(&[lo], &[hi], bins)?;
        let edges = grid.edges(0);
        let width = (hi - lo) / bins as f64;
        let centers: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        let mut series = Vec::new();
        if let Some(g) = data_gmm(plan) {
            let cdf = edges.iter().map(|&e| g.axis_cdf(1.0, 0, e)).collect::<Result<Vec<_>, _>>()?;
            series.push(Series {
                name: "data density".into(),
                points: centers.iter().zip(cdf.windows(2)).map(|(&c, p)| (c, (p[1] - p[0]) / width)).collect(),
                errors: None,
            });
        }
        for b in batches {
            let f = grid.frequencies(&b.guided)?;
            series.push(Series {
                name: format!("w={}", w_label(b.w)),
                points: centers.iter().zip(&f).map(|(&c, p)| (c, p / width)).collect(),
                errors: None,
            });
        }
        let svg = plot::line_chart(title, "y", "density", &series, Axes::default());
        fs::write(dir.join("densities.svg"), svg)?;
    }

    if d == 2 {
        let band = match plan.reward.as_ref().map(|r| &r.kind) {
            Some(RewardKind::IndicatorBand { axis: 0, lo, hi, .. }) => Some((*lo, *hi)),
            _ => None,
        };
        let cloud: Vec<(f64, f64)> = match plan.model.as_cloud() {
            Some(c) => c.points().map(|p| (p[0], p[1])).collect(),
            None => Vec::new(),
        };
        for b in batches {
            let pts: Vec<(f64, f64)> = b
                .guided
                .rows()
                .take(MAX_SCATTER_POINTS)
                .map(|r| (r[0], r[1]))
                .collect();
            let mut groups = Vec::new();
            if !cloud.is_empty() {
                groups.push(("data".to_string(), cloud.clone()));
            }
            groups.push((format!("samples w={}", w_label(b.w)), pts));
            let svg = plot::scatter(&format!("{title}, w={}", w_label(b.w)), &groups, band);
            fs::write(dir.join(format!("scatter_w={}.svg", w_label(b.w))), svg)?;
        }
    }
    Ok(())
}
