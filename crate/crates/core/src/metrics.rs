//! Comparative sample-quality metrics on paired batches.

use crate::error::{Error, Result};
use crate::models::ClassPair;
use crate::samplers::{PairedBatch, Samples};
use crate::stats::MeanEstimate;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Classifier-probability statistics for one guidance scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub w: f64,
    /// Fraction of trials with `p(c|Y^w) >= p(c|Y^0)`.
    pub proportion_improved: f64,
    pub proportion_improved_stderr: f64,
    /// Mean of `-1/p(c|Y^w)` over the guided arm.
    pub mean_neg_reciprocal: f64,
    pub mean_neg_reciprocal_stderr: f64,
    /// Same statistic on the unguided arm.
    pub unguided_mean_neg_reciprocal: f64,
    pub unguided_mean_neg_reciprocal_stderr: f64,
    /// Paired mean of `1/p(c|Y^0) - 1/p(c|Y^w)`.
    pub paired_gain: f64,
    pub paired_gain_stderr: f64,
    pub n_trials: usize,
}

/// Classifier metrics with the classifier evaluated at model time `t_eval`
/// (`1` is the clean-data classifier).
pub fn classifier_metrics(batch: &PairedBatch, pair: &ClassPair, t_eval: f64) -> Result<MetricRow> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.guided.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            got: batch.guided.dim(),
        });
    }
    let mut improved = 0usize;
    let mut neg_g = Vec::with_capacity(n);
    let mut neg_u = Vec::with_capacity(n);
    let mut gain = Vec::with_capacity(n);
    for (g, u) in batch.guided.rows().zip(batch.unguided.rows()) {
        let pg = pair.classifier_prob(t_eval, g)?;
        let pu = pair.classifier_prob(t_eval, u)?;
        improved += (pg >= pu) as usize;
        neg_g.push(-1.0 / pg);
        neg_u.push(-1.0 / pu);
        gain.push(1.0 / pu - 1.0 / pg);
    }
    let p = improved as f64 / n as f64;
    let eg = MeanEstimate::from_slice(&neg_g);
    let eu = MeanEstimate::from_slice(&neg_u);
    let ed = MeanEstimate::from_slice(&gain);
    Ok(MetricRow {
        w: batch.w,
        proportion_improved: p,
        proportion_improved_stderr: (p * (1.0 - p) / n as f64).sqrt(),
        mean_neg_reciprocal: eg.mean,
        mean_neg_reciprocal_stderr: eg.stderr,
        unguided_mean_neg_reciprocal: eu.mean,
        unguided_mean_neg_reciprocal_stderr: eu.stderr,
        paired_gain: ed.mean,
        paired_gain_stderr: ed.stderr,
        n_trials: n,
    })
}

/// Regular grid on `[lo, hi)` per axis plus an underflow cell (some
/// coordinate below `lo`) and an overflow cell (otherwise out of range).
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    bins: usize,
}

impl HistogramGrid {
    pub fn new(lo: &[f64], hi: &[f64], bins: usize) -> Result<Self> {
        let d = lo.len();
        if d > 2 {
            return Err(Error::DimensionTooHigh(d));
        }
        if d == 0 || hi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d.max(1),
                got: hi.len(),
            });
        }
        if bins == 0 || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Config("histogram needs bins > 0 and lo < hi".into()));
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            bins,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bins.pow(self.dim() as u32) + 2
    }

    pub fn cell(&self, x: &[f64]) -> usize {
        let inner = self.bins.pow(self.dim() as u32);
        let mut idx = 0;
        for i in 0..self.dim() {
            if x[i] < self.lo[i] {
                return inner;
            }
        }
        for i in 0..self.dim() {
            if !(x[i] < self.hi[i]) {
                return inner + 1;
            }
            let f = (x[i] - self.lo[i]) / (self.hi[i] - self.lo[i]);
            let b = ((f * self.bins as f64) as usize).min(self.bins - 1);
            idx = idx * self.bins + b;
        }
        idx
    }

    /// Empirical cell probabilities.
    pub fn frequencies(&self, s: &Samples) -> Result<Vec<f64>> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.dim(),
            });
        }
        if s.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut counts = vec![0u64; self.n_cells()];
        for r in s.rows() {
            counts[self.cell(r)] += 1;
        }
        let n = s.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / n).collect())
    }

    /// Bin edges along one axis.
    pub fn edges(&self, axis: usize) -> Vec<f64> {
        let (a, b) = (self.lo[axis], self.hi[axis]);
        (0..=self.bins)
            .map(|j| a + (b - a) * j as f64 / self.bins as f64)
            .collect()
    }
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `1/2 sum |p_a - p_b|` over the common grid, overflow cells included.
pub fn histogram_tv(a: &Samples, b: &Samples, lo: &[f64], hi: &[f64], bins: usize) -> Result<f64> {
    let grid = HistogramGrid::new(lo, hi, bins)?;
    Ok(half_l1(&grid.frequencies(a)?, &grid.frequencies(b)?))
}

/// TV between a 1-D histogram and exact bin probabilities from a CDF.
pub fn histogram_tv_exact(
    a: &Samples,
    mut cdf: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<f64> {
    let grid = HistogramGrid::new(&[lo], &[hi], bins)?;
    let freq = grid.frequencies(a)?;
    let edges = grid.edges(0);
    let cdfs = edges.iter().map(|&e| cdf(e)).collect::<Result<Vec<_>>>()?;
    let mut exact: Vec<f64> = cdfs.windows(2).map(|w| w[1] - w[0]).collect();
    exact.push(cdfs[0]);
    exact.push(1.0 - cdfs[bins]);
    Ok(half_l1(&freq, &exact))
}

/// Fraction of rows inside the closed box `[lo, hi]`.
pub fn fraction_in_box(s: &Samples, lo: &[f64], hi: &[f64]) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let inside = s
        .rows()
        .filter(|r| r.iter().zip(lo.iter().zip(hi)).all(|(x, (a, b))| a <= x && x <= b))
        .count();
    inside as f64 / s.len() as f64
}

/// Tail share of the guided cost relative to the guidance improvement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRatio {
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub threshold: f64,
    pub numerator: f64,
    pub improvement: f64,
    pub improvement_stderr: f64,
}

/// Computes the threshold `tau`, the smallest value with empirical
/// `P(J_guided > tau) <= tv`, then returns
/// `E[J_guided 1(J_guided > tau)] / (E[J_unguided] - E[J_guided])`.
pub fn tail_relative_error(
    batch: &PairedBatch,
    mut cost: impl FnMut(&[f64]) -> Result<f64>,
    tv: f64,
) -> Result<TailRatio> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(tv >= 0.0) {
        return Err(Error::Config(format!("tv estimate must be >= 0, got {tv}")));
    }
    let jg = batch.guided.rows().map(&mut cost).collect::<Result<Vec<_>>>()?;
    let ju = batch.unguided.rows().map(&mut cost).collect::<Result<Vec<_>>>()?;
    let diff: Vec<f64> = ju.iter().zip(&jg).map(|(u, g)| u - g).collect();
    let imp = MeanEstimate::from_slice(&diff);
    if !(imp.mean - Z95 * imp.stderr > 0.0) {
        return Err(Error::Undefined(format!(
            "guidance improvement {} +/- {} is not significantly positive",
            imp.mean,
            Z95 * imp.stderr
        )));
    }
    let m = (tv * n as f64).floor();
    let threshold = if m >= n as f64 {
        f64::NEG_INFINITY
    } else {
        let mut sorted = jg.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[m as usize]
    };
    let tail: Vec<f64> = jg.iter().map(|&j| if j > threshold { j } else { 0.0 }).collect();
    let num = MeanEstimate::from_slice(&tail);
    let ratio = num.mean / imp.mean;
    // delta method on the ratio of paired means
    let resid: Vec<f64> = tail.iter().zip(&diff).map(|(a, b)| a - ratio * b).collect();
    let r = MeanEstimate::from_slice(&resid);
    Ok(TailRatio {
        ratio,
        ratio_stderr: r.stderr / imp.mean,
        threshold,
        numerator: num.mean,
        improvement: imp.mean,
        improvement_stderr: imp.stderr,
    })
}

/// Outcome of a monotone-trend check.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub passed: bool,
    /// Indices `i` where the step `i -> i + 1` goes the wrong way.
    pub inversions: Vec<usize>,
}

/// Checks that `(mean, stderr)` values move strictly in one direction,
/// tolerating at most `max_inversions` adjacent reversals, each of which must
/// lie within overlapping 95% intervals.
pub fn monotone_trend(values: &[(f64, f64)], increasing: bool, max_inversions: usize) -> TrendCheck {
    let mut inversions = Vec::new();
    let mut ok = true;
    for (i, w) in values.windows(2).enumerate() {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        let forward = if increasing { b > a } else { b < a };
        if !forward {
            inversions.push(i);
            if (a - b).abs() > Z95 * (sa * sa + sb * sb).sqrt() {
                ok = false;
            }
        }
    }
    TrendCheck {
        passed: ok && inversions.len() <= max_inversions,
        inversions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::presets::two_class_pair;
    use crate::models::IsotropicGmm;
    use crate::samplers::Samples;

    fn batch(g: Vec<f64>, u: Vec<f64>) -> PairedBatch {
        PairedBatch {
            guided: Samples::from_flat(1, g).unwrap(),
            unguided: Samples::from_flat(1, u).unwrap(),
            seeds: vec![],
            master_seed: 0,
            schedule_id: String::new(),
            config: String::new(),
            w: 1.0,
        }
    }

    #[test]
    fn ties_count_as_improved() {
        let xs = vec![-1.0, 0.0, 0.5, 2.0];
        let row = classifier_metrics(&batch(xs.clone(), xs), &two_class_pair(), 1.0).unwrap();
        assert_eq!(row.proportion_improved, 1.0);
        assert_eq!(row.proportion_improved_stderr, 0.0);
        assert_eq!(row.paired_gain, 0.0);
    }

    #[test]
    fn degenerate_pair_metric() {
        let g = IsotropicGmm::standard_normal(1);
        let pair = ClassPair::new(g.clone(), g, 0.25).unwrap();
        let row = classifier_metrics(&batch(vec![-3.0, 0.1, 4.0], vec![0.0, 1.0, 2.0]), &pair, 1.0).unwrap();
        assert!((row.mean_neg_reciprocal + 4.0).abs() < 1e-12);
        assert!(row.mean_neg_reciprocal_stderr < 1e-12);
    }

    #[test]
    fn metrics_reject_empty() {
        assert_eq!(
            classifier_metrics(&batch(vec![], vec![]), &two_class_pair(), 1.0),
            Err(Error::EmptyBatch)
        );
    }

    #[test]
    fn tv_extremes() {
        let a = Samples::from_flat(1, vec![-1.0, 0.2, 0.3, 2.5]).unwrap();
        assert_eq!(histogram_tv(&a, &a, &[-3.0], &[3.0], 12).unwrap(), 0.0);
        let b = Samples::from_flat(1, vec![-2.0, -1.5]).unwrap();
        let c = Samples::from_flat(1, vec![1.0, 2.9]).unwrap();
        assert_eq!(histogram_tv(&b, &c, &[-3.0], &[3.0], 2).unwrap(), 1.0);
        // overflow cells separate mass below and above the range
        let lo = Samples::from_flat(1, vec![-10.0]).unwrap();
        let hi = Samples::from_flat(1, vec![10.0]).unwrap();
        assert_eq!(histogram_tv(&lo, &hi, &[-3.0], &[3.0], 4).unwrap(), 1.0);
    }

    #[test]
    fn tv_rejects_high_dimension() {
        let a = Samples::from_flat(3, vec![0.0; 3]).unwrap();
        assert_eq!(
            histogram_tv(&a, &a, &[0.0; 3], &[1.0; 3], 4),
            Err(Error::DimensionTooHigh(3))
        );
    }

    #[test]
    fn tv_two_dimensional() {
        let a = Samples::from_flat(2, vec![0.1, 0.1, 0.9, 0.9]).unwrap();
        let b = Samples::from_flat(2, vec![0.1, 0.9, 0.9, 0.9]).unwrap();
        assert!((histogram_tv(&a, &b, &[0.0, 0.0], &[1.0, 1.0], 2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tail_ratio_limits() {
        let b = batch(vec![1.0, 1.5, 2.0, 1.2, 1.1], vec![3.0, 3.5, 4.0, 3.3, 3.6]);
        let j = |x: &[f64]| Ok(x[0]);
        let zero = tail_relative_error(&b, j, 0.0).unwrap();
        assert_eq!(zero.numerator, 0.0);
        assert_eq!(zero.ratio, 0.0);
        let all = tail_relative_error(&b, j, 1.0).unwrap();
        assert_eq!(all.threshold, f64::NEG_INFINITY);
        let eg = 6.8 / 5.0;
        let eu = 17.4 / 5.0;
        assert!((all.ratio - eg / (eu - eg)).abs() < 1e-12);
        let part = tail_relative_error(&b, j, 0.4).unwrap();
        assert_eq!(part.threshold, 1.2);
        assert!((part.numerator - 3.5 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn tail_ratio_undefined_without_improvement() {
        let b = batch(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        assert!(matches!(tail_relative_error(&b, |x| Ok(x[0]), 0.1), Err(Error::Undefined(_))));
    }

    #[test]
    fn trend_checks() {
        let inc = [(1.0, 0.1), (2.0, 0.1), (3.0, 0.1)];
        assert!(monotone_trend(&inc, true, 0).passed);
        assert!(!monotone_trend(&inc, false, 0).passed);
        let one = [(1.0, 0.1), (2.0, 0.1), (1.95, 0.1), (3.0, 0.1)];
        assert!(monotone_trend(&one, true, 1).passed);
        assert!(!monotone_trend(&one, true, 0).passed);
        let big = [(1.0, 0.01), (2.0, 0.01), (1.0, 0.01), (3.0, 0.01)];
        assert!(!monotone_trend(&big, true, 1).passed);
    }

    #[test]
    fn fraction_in_box_counts_closed_box() {
        let s = Samples::from_flat(2, vec![0.0, 0.0, 1.0, 5.0, 2.0, 0.0]).unwrap();
        assert!((fraction_in_box(&s, &[0.0, -1.0], &[1.0, 10.0]) - 2.0 / 3.0).abs() < 1e-15);
    }
}
