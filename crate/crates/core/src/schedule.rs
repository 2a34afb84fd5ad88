//! Discrete noise schedule `{beta_n, alpha_bar_n}`.
//!
//! The cumulative signal fractions are built backwards from
//! `alpha_bar_N = N^{-c0}` with
//! `alpha_bar_{n-1} = alpha_bar_n + c1 * alpha_bar_n * (1 - alpha_bar_n) * ln N / N`,
//! and `beta_n = x / (1 + x)` with `x = c1 * (1 - alpha_bar_n) * ln N / N`, so that
//! `alpha_bar_n = alpha_bar_{n-1} * (1 - beta_n)` holds to round-off.

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 4000;
pub const DEFAULT_C0: f64 = 1.0;
pub const DEFAULT_C1: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    n_steps: usize,
    c0: f64,
    c1: f64,
    // index 0 holds step n = 1
    alpha_bar: Vec<f64>,
    beta: Vec<f64>,
}

impl Schedule {
    pub fn new(n_steps: usize, c0: f64, c1: f64) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidSchedule(format!(
                "n_steps must be at least 2, got {n_steps}"
            )));
        }
        if !(c0 > 0.0 && c0.is_finite() && c1 > 0.0 && c1.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "c0 and c1 must be positive and finite, got c0={c0}, c1={c1}"
            )));
        }
        let n = n_steps as f64;
        let rate = c1 * n.ln() / n;
        let mut alpha_bar = vec![0.0; n_steps];
        let mut beta = vec![0.0; n_steps];
        alpha_bar[n_steps - 1] = n.powf(-c0);
        for idx in (1..n_steps).rev() {
            let a = alpha_bar[idx];
            alpha_bar[idx - 1] = a + rate * a * (1.0 - a);
        }
        for (b, &a) in beta.iter_mut().zip(&alpha_bar) {
            let x = rate * (1.0 - a);
            *b = x / (1.0 + x);
        }

        if let Some(bad) = alpha_bar.iter().chain(&beta).find(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "recursion produced a non-finite value ({bad})"
            )));
        }
        if alpha_bar[0] >= 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "recursion reached alpha_bar_1 = {} >= 1 (c1 ln N / N = {rate} too large)",
                alpha_bar[0]
            )));
        }
        if alpha_bar.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidSchedule(
                "alpha_bar is not strictly decreasing in n".into(),
            ));
        }
        Ok(Self {
            n_steps,
            c0,
            c1,
            alpha_bar,
            beta,
        })
    }

    /// `N = 4000, c0 = 1, c1 = 2`.
    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_STEPS, DEFAULT_C0, DEFAULT_C1).expect("default schedule is valid")
    }

    /// Same `(c0, c1)` on a grid with `k * N` steps.
    pub fn refined(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSchedule("refinement factor must be >= 1".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        Self::new(self.n_steps * k, self.c0, self.c1)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    fn check(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.n_steps {
            Err(Error::IndexOutOfRange {
                index: n,
                n_steps: self.n_steps,
            })
        } else {
            Ok(n - 1)
        }
    }

    /// `alpha_bar_n`, the signal fraction at step `n` (1-based).
    ///
    /// This is also the model time argument used for step-`n` scores.
    pub fn alpha_bar(&self, n: usize) -> Result<f64> {
        self.check(n).map(|i| self.alpha_bar[i])
    }

    pub fn beta(&self, n: usize) -> Result<f64> {
        self.check(n).map(|i| self.beta[i])
    }

    /// Forward-time noise level `1 - alpha_bar_n`.
    pub fn noise_level(&self, n: usize) -> Result<f64> {
        self.check(n).map(|i| 1.0 - self.alpha_bar[i])
    }

    /// Early-stopping parameter `delta = 1 - alpha_bar_1`.
    pub fn early_stop(&self) -> f64 {
        1.0 - self.alpha_bar[0]
    }

    /// All `alpha_bar_n` for `n = 1..=N`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    // Unchecked accessors for the sampler hot loop.
    #[inline]
    pub(crate) fn ab(&self, n: usize) -> f64 {
        self.alpha_bar[n - 1]
    }

    #[inline]
    pub(crate) fn b(&self, n: usize) -> f64 {
        self.beta[n - 1]
    }

    /// Step whose `alpha_bar_n` is closest to `t`.
    pub fn nearest_step(&self, t: f64) -> usize {
        // alpha_bar is decreasing in n; search on the reversed order.
        let idx = self.alpha_bar.partition_point(|&a| a > t);
        let candidates = [idx.checked_sub(1), (idx < self.n_steps).then_some(idx)];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (self.alpha_bar[a] - t)
                    .abs()
                    .total_cmp(&(self.alpha_bar[b] - t).abs())
            })
            .map(|i| i + 1)
            .unwrap_or(self.n_steps)
    }

    /// Short identifier used in batch metadata.
    pub fn id(&self) -> String {
        format!("N={},c0={},c1={}", self.n_steps, self.c0, self.c1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_terminal_value() {
        let s = Schedule::with_defaults();
        assert!((s.alpha_bar(4000).unwrap() - 0.00025).abs() < 1e-18);
        assert!((s.noise_level(4000).unwrap() - 0.99975).abs() < 1e-15);
    }

    #[test]
    fn recursion_identity_holds() {
        let s = Schedule::with_defaults();
        for n in 2..=s.n_steps() {
            let a = s.alpha_bar(n).unwrap();
            let prev = s.alpha_bar(n - 1).unwrap();
            let b = s.beta(n).unwrap();
            assert!((a - prev * (1.0 - b)).abs() <= 1e-12 * a, "n={n}");
        }
    }

    #[test]
    fn monotone_and_bounded() {
        for &(n, c0, c1) in &[(4000, 1.0, 2.0), (100, 1.0, 2.0), (250, 1.5, 1.0), (16000, 1.0, 2.0)] {
            let s = Schedule::new(n, c0, c1).unwrap();
            let bound = c1 * (n as f64).ln() / n as f64;
            for k in 1..=n {
                let b = s.beta(k).unwrap();
                assert!(b > 0.0 && b < 1.0 && b < bound);
                if k > 1 {
                    assert!(s.alpha_bar(k).unwrap() < s.alpha_bar(k - 1).unwrap());
                    assert!(s.noise_level(k).unwrap() > s.noise_level(k - 1).unwrap());
                }
            }
            assert!(s.alpha_bar(1).unwrap() < 1.0);
            assert!(s.alpha_bar(n).unwrap() > 0.0);
        }
    }

    #[test]
    fn product_consistency() {
        let s = Schedule::new(2000, 1.0, 2.0).unwrap();
        let n_total = s.n_steps();
        let mut prod = 1.0;
        for n in (1..n_total).rev() {
            prod *= 1.0 - s.beta(n + 1).unwrap();
            let ratio = s.alpha_bar(n_total).unwrap() / s.alpha_bar(n).unwrap();
            assert!((prod - ratio).abs() <= 1e-10 * ratio, "n={n}");
        }
    }

    #[test]
    fn first_step_is_smallest_noise() {
        let s = Schedule::new(300, 1.0, 2.0).unwrap();
        let t1 = s.noise_level(1).unwrap();
        assert!((1..=300).all(|n| s.noise_level(n).unwrap() >= t1));
        assert_eq!(s.early_stop(), t1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(Schedule::new(1, 1.0, 2.0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(Schedule::new(10, 0.0, 2.0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(Schedule::new(10, 1.0, -1.0), Err(Error::InvalidSchedule(_))));
        // c1 ln N / N >= 1 drives alpha_bar_1 to 1 or beyond
        assert!(matches!(Schedule::new(10, 1.0, 10.0), Err(Error::InvalidSchedule(_))));
        assert!(matches!(Schedule::new(10, f64::NAN, 1.0), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn index_errors() {
        let s = Schedule::new(10, 1.0, 2.0).unwrap();
        assert_eq!(
            s.noise_level(0),
            Err(Error::IndexOutOfRange { index: 0, n_steps: 10 })
        );
        assert!(s.alpha_bar(11).is_err());
        assert!(s.beta(10).is_ok());
    }

    #[test]
    fn nearest_step_finds_grid_point() {
        let s = Schedule::new(2000, 1.0, 2.0).unwrap();
        let n = s.nearest_step(0.5);
        let a = s.alpha_bar(n).unwrap();
        for m in [n - 1, n + 1] {
            assert!((s.alpha_bar(m).unwrap() - 0.5).abs() >= (a - 0.5).abs());
        }
        assert_eq!(s.nearest_step(2.0), 1);
        assert_eq!(s.nearest_step(-1.0), 2000);
    }

    #[test]
    fn refined_keeps_constants() {
        let s = Schedule::new(250, 1.0, 2.0).unwrap();
        assert_eq!(s.refined(1).unwrap(), s);
        let r = s.refined(4).unwrap();
        assert_eq!(r.n_steps(), 1000);
        assert_eq!((r.c0(), r.c1()), (1.0, 2.0));
    }
}
