//! Tabular dumps of schedules and model quantities.

use anyhow::{bail, ensure};
use guidelab_core::schedule::Schedule;

use crate::config::BuiltModel;
use crate::experiment::fmt_f64;

/// `n, alpha_bar, beta, t` for every step, where `t = 1 - alpha_bar` is the
/// forward noise level.
pub fn schedule_csv(s: &Schedule) -> anyhow::Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["n", "alpha_bar", "beta", "t"])?;
    for n in 1..=s.n_steps() {
        wr.write_record([
            n.to_string(),
            fmt_f64(s.alpha_bar(n)?),
            fmt_f64(s.beta(n)?),
            fmt_f64(s.noise_level(n)?),
        ])?;
    }
    Ok(String::from_utf8(wr.into_inner()?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Quantity {
    Logpdf,
    Score,
    ClassifierProb,
}

/// Evaluates `quantity` at each model time in `ts` on a regular grid of
/// `points` values per axis over `[lo, hi]` (dimension 1 or 2).
///
/// Columns are `t, x_1.., value` (vector quantities get `value_1..`).
pub fn model_probe(
    built: &BuiltModel,
    quantity: Quantity,
    ts: &[f64],
    lo: f64,
    hi: f64,
    points: usize,
) -> anyhow::Result<String> {
    let d = built.model.dim();
    ensure!(d <= 2, "model probe supports dimensions 1 and 2, got {d}");
    ensure!(points >= 2 && lo < hi, "need points >= 2 and lo < hi");
    if quantity == Quantity::ClassifierProb && built.pair.is_none() {
        bail!("classifier_prob needs a class_pair model");
    }
    let axis: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let grid: Vec<Vec<f64>> = if d == 1 {
        axis.iter().map(|&x| vec![x]).collect()
    } else {
        axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect()
    };

    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    if quantity == Quantity::Score && d > 1 {
        header.extend((1..=d).map(|i| format!("value_{i}")));
    } else {
        header.push("value".into());
    }
    wr.write_record(&header)?;
    for &t in ts {
        for x in &grid {
            let values = match quantity {
                Quantity::Logpdf => vec![built.model.noisy_logpdf(t, x)?],
                Quantity::Score => built.model.noisy_score(t, x)?,
                Quantity::ClassifierProb => {
                    vec![built.pair.as_ref().expect("checked").classifier_prob(t, x)?]
                }
            };
            let mut rec = vec![fmt_f64(t)];
            rec.extend(x.iter().chain(&values).map(|v| fmt_f64(*v)));
            wr.write_record(&rec)?;
        }
    }
    Ok(String::from_utf8(wr.into_inner()?)?)
}
