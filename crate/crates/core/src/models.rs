//! Tractable target distributions with exact noisy-marginal scores.
//!
//! Time convention used everywhere in this crate: a model evaluated at time
//! argument `t` describes `sqrt(t) * X0 + sqrt(1 - t) * Z`, so `t = 1` is the
//! clean data and `t = 0` is pure noise. A Gaussian component `N(mu, s2 I)`
//! therefore becomes `N(sqrt(t) mu, (t s2 + 1 - t) I)`.
//!
//! | sampler quantity            | model argument      |
//! |-----------------------------|---------------------|
//! | score at DDPM step `n`      | `t = alpha_bar_n`   |
//! | early-stopped endpoint `Y_1`| `t = alpha_bar_1`   |
//! | clean data                  | `t = 1`             |
//! | noise level `1 - alpha_bar` | `1 - t`             |

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::stats::{log_sum_exp, normal_cdf};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

// exp underflows to exactly 0 below this gap; skipping is bit-exact
const UNDERFLOW: f64 = -745.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Density,
    Score,
    PosteriorMean,
}

/// Flat storage shared by Gaussian mixtures and point clouds (variance 0).
#[derive(Debug, Clone, PartialEq)]
struct Mixture {
    dim: usize,
    log_weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    cumulative: Vec<f64>,
    // exp(log_weights); entries may underflow to 0
    weights: Vec<f64>,
}

impl Mixture {
    fn new(dim: usize, log_weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = log_weights.len();
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if k == 0 {
            return Err(Error::InvalidModel("at least one component is required".into()));
        }
        if means.len() != k * dim || variances.len() != k {
            return Err(Error::InvalidModel("component arrays have inconsistent sizes".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("component means must be finite".into()));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidModel("log-weights must be finite or -inf".into()));
        }
        let z = log_sum_exp(&log_weights);
        if !z.is_finite() {
            return Err(Error::InvalidModel("weights must not all vanish".into()));
        }
        let log_weights: Vec<f64> = log_weights.into_iter().map(|w| w - z).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = log_weights
            .iter()
            .map(|w| {
                acc += w.exp();
                acc
            })
            .collect();
        let total = acc;
        cumulative.iter_mut().for_each(|c| *c /= total);
        let weights = log_weights.iter().map(|w| w.exp()).collect();
        Ok(Self {
            dim,
            log_weights,
            means,
            variances,
            cumulative,
            weights,
        })
    }

    fn len(&self) -> usize {
        self.log_weights.len()
    }

    #[inline]
    fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Log-sum-exp over components in two passes: component log-terms first,
    /// then responsibilities. Returns the log-density; `out` receives the
    /// responsibility-weighted score or posterior mean depending on `mode`.
    #[inline]
    fn eval(&self, t: f64, x: &[f64], mode: Reduce, out: &mut [f64]) -> f64 {
        const STACK: usize = 8;
        let k = self.len();
        if k <= STACK {
            let mut buf = [0.0; 2 * STACK];
            let (logs, invs) = buf.split_at_mut(STACK);
            self.eval_with(t, x, mode, out, &mut logs[..k], &mut invs[..k])
        } else {
            let mut buf = vec![0.0; 2 * k];
            let (logs, invs) = buf.split_at_mut(k);
            self.eval_with(t, x, mode, out, logs, invs)
        }
    }

    #[inline(always)]
    fn eval_with(&self, t: f64, x: &[f64], mode: Reduce, out: &mut [f64], logs: &mut [f64], invs: &mut [f64]) -> f64 {
        let d = self.dim;
        let x = &x[..d];
        let sqrt_t = t.sqrt();
        let one_m_t = 1.0 - t;
        let half_d = 0.5 * d as f64;
        let k = logs.len();
        let (lws, vars) = (&self.log_weights[..k], &self.variances[..k]);
        let invs = &mut invs[..k];

        let mut max = f64::NEG_INFINITY;
        let mut last_var = f64::NAN;
        let mut log_norm = 0.0;
        let mut inv_v = 0.0;
        let comps = logs.iter_mut().zip(invs.iter_mut()).zip(lws.iter().zip(vars));
        for (((l_out, inv_out), (&lw, &var_k)), mu) in comps.zip(self.means.chunks_exact(d)) {
            if var_k != last_var {
                last_var = var_k;
                let v = t * var_k + one_m_t;
                log_norm = half_d * (LN_2PI + v.ln());
                inv_v = 1.0 / v;
            }
            *inv_out = inv_v;
            let sq: f64 = x
                .iter()
                .zip(mu)
                .map(|(xi, mi)| {
                    let diff = xi - sqrt_t * mi;
                    diff * diff
                })
                .sum();
            let l = lw - log_norm - 0.5 * sq * inv_v;
            *l_out = l;
            if l > max {
                max = l;
            }
        }

        let mut sum = 0.0;
        if mode == Reduce::Density {
            for &l in logs.iter() {
                let g = l - max;
                if g > UNDERFLOW {
                    sum += if g == 0.0 { 1.0 } else { g.exp() };
                }
            }
            return max + sum.ln();
        }
        let out = &mut out[..d];
        out.fill(0.0);
        let comps = logs.iter().zip(invs.iter()).zip(vars);
        for (((&l, &inv_v), &var_k), mu) in comps.zip(self.means.chunks_exact(d)) {
            let g = l - max;
            if !(g > UNDERFLOW) {
                continue;
            }
            let e = if g == 0.0 { 1.0 } else { g.exp() };
            if e == 0.0 {
                continue;
            }
            sum += e;
            let c = e * inv_v;
            if mode == Reduce::Score {
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(mu) {
                    *o += c * (sqrt_t * mi - xi);
                }
            } else {
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(mu) {
                    *o += c * (mi * one_m_t + sqrt_t * var_k * xi);
                }
            }
        }
        let inv = 1.0 / sum;
        out.iter_mut().for_each(|o| *o *= inv);
        max + sum.ln()
    }

    fn sample_component(&self, rng: &mut CounterRng) -> usize {
        let u = rng.uniform();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.len() - 1)
    }
}

/// One isotropic Gaussian component `weight * N(mean, variance * I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub log_weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GmmComponent {
    pub fn new(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        Self {
            log_weight: weight.ln(),
            mean,
            variance,
        }
    }
}

/// Mixture of isotropic Gaussians. Weights are renormalized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicGmm {
    mix: Mixture,
}

impl IsotropicGmm {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let dim = components
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::InvalidModel("at least one component is required".into()))?;
        if components.iter().any(|c| c.mean.len() != dim) {
            return Err(Error::InvalidModel("component means differ in dimension".into()));
        }
        if let Some(c) = components
            .iter()
            .find(|c| !(c.variance > 0.0 && c.variance.is_finite()))
        {
            return Err(Error::InvalidModel(format!(
                "component variance must be positive and finite, got {}",
                c.variance
            )));
        }
        let log_weights = components.iter().map(|c| c.log_weight).collect();
        let variances = components.iter().map(|c| c.variance).collect();
        let means = components.into_iter().flat_map(|c| c.mean).collect();
        Ok(Self {
            mix: Mixture::new(dim, log_weights, means, variances)?,
        })
    }

    /// A single Gaussian `N(mean, variance * I)`.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![GmmComponent::new(1.0, mean, variance)])
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::gaussian(vec![0.0; dim], 1.0).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.mix.dim
    }

    pub fn n_components(&self) -> usize {
        self.mix.len()
    }

    pub fn log_weight(&self, k: usize) -> f64 {
        self.mix.log_weights[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.mix.log_weights[k].exp()
    }

    pub fn component_mean(&self, k: usize) -> &[f64] {
        self.mix.mean(k)
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.mix.variances[k]
    }

    pub fn components(&self) -> Vec<GmmComponent> {
        (0..self.n_components())
            .map(|k| GmmComponent {
                log_weight: self.log_weight(k),
                mean: self.component_mean(k).to_vec(),
                variance: self.variance(k),
            })
            .collect()
    }

    /// Mixture mean of the clean distribution.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for k in 0..self.n_components() {
            let w = self.weight(k);
            for (mi, &mu) in m.iter_mut().zip(self.component_mean(k)) {
                *mi += w * mu;
            }
        }
        m
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DegenerateTime {
                t,
                reason: "time argument must lie in [0, 1]",
            });
        }
        if self.mix.variances.iter().any(|&s2| t * s2 + 1.0 - t <= 0.0) {
            return Err(Error::DegenerateTime {
                t,
                reason: "non-positive marginal variance",
            });
        }
        Ok(())
    }

    /// `log p(x)` for the marginal at time `t` (`t = 1` is the data density).
    pub fn noisy_logpdf(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        self.mix.check_point(x)?;
        Ok(self.mix.eval(t, x, Reduce::Density, &mut []))
    }

    /// Exact score `grad log p(x)` of the marginal at time `t`.
    pub fn noisy_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.noisy_score_into(t, x, &mut out)?;
        Ok(out)
    }

    #[inline]
    pub fn noisy_score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        self.check_time(t)?;
        self.mix.check_point(x)?;
        Ok(self.mix.eval(t, x, Reduce::Score, out))
    }

    /// `E[X0 | X_t = x]` in closed form.
    ///
    /// At `t = 0` the responsibilities reduce to the mixture weights and this
    /// returns the clean mixture mean.
    pub fn posterior_mean(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        self.mix.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.mix.eval(t, x, Reduce::PosteriorMean, &mut out);
        Ok(out)
    }

    /// CDF of coordinate `axis` of the marginal at time `t`.
    pub fn axis_cdf(&self, t: f64, axis: usize, x: f64) -> Result<f64> {
        self.check_time(t)?;
        if axis >= self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: axis + 1,
            });
        }
        let sqrt_t = t.sqrt();
        Ok((0..self.n_components())
            .map(|k| {
                let v = t * self.variance(k) + 1.0 - t;
                let m = sqrt_t * self.component_mean(k)[axis];
                self.weight(k) * normal_cdf((x - m) / v.sqrt())
            })
            .sum())
    }

    /// Draws from the clean distribution.
    pub fn sample_clean(&self, rng: &mut CounterRng, out: &mut [f64]) {
        let k = self.mix.sample_component(rng);
        rng.fill_normal(out);
        let sd = self.variance(k).sqrt();
        for (o, &mu) in out.iter_mut().zip(self.component_mean(k)) {
            *o = mu + sd * *o;
        }
    }
}

/// Finitely supported weighted distribution. Weights are renormalized on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    mix: Mixture,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, log_weights: Vec<f64>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidModel("point cloud needs at least one point".into()))?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidModel("points differ in dimension".into()));
        }
        if log_weights.len() != points.len() {
            return Err(Error::InvalidModel("one log-weight per point is required".into()));
        }
        let n = points.len();
        let means = points.into_iter().flatten().collect();
        Ok(Self {
            mix: Mixture::new(dim, log_weights, means, vec![0.0; n])?,
        })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.mix.dim
    }

    pub fn len(&self) -> usize {
        self.mix.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.mix.mean(i)
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.mix.means.chunks_exact(self.mix.dim)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.mix.log_weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.mix.log_weights[i].exp()
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t < 1.0 {
            Ok(())
        } else {
            Err(Error::DegenerateTime {
                t,
                reason: "point-cloud marginals need t strictly inside (0, 1)",
            })
        }
    }

    /// Log-density of `sum_i w_i N(sqrt(t) s_i, (1 - t) I)`.
    pub fn noisy_logpdf(&self, t: f64, x: &[f64]) -> Result<f64> {
        Self::check_time(t)?;
        self.mix.check_point(x)?;
        Ok(self.mix.eval(t, x, Reduce::Density, &mut []))
    }

    /// `-x/(1-t) + sqrt(t)/(1-t) * sum_i s_i post_i(x)`.
    pub fn noisy_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.noisy_score_into(t, x, &mut out)?;
        Ok(out)
    }

    #[inline]
    pub fn noisy_score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        Self::check_time(t)?;
        self.mix.check_point(x)?;
        Ok(self.mix.eval(t, x, Reduce::Score, out))
    }

    /// Posterior mean `sum_i s_i post_i(x)`.
    pub fn posterior_mean(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        self.mix.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.mix.eval(t, x, Reduce::PosteriorMean, &mut out);
        Ok(out)
    }

    pub fn sample_clean(&self, rng: &mut CounterRng, out: &mut [f64]) {
        let i = self.mix.sample_component(rng);
        out.copy_from_slice(self.point(i));
    }

    /// Same atoms in the same order (weights may differ).
    pub fn same_atoms(&self, other: &PointCloud) -> bool {
        self.mix.dim == other.mix.dim && self.mix.means == other.mix.means
    }

    /// Scores of `self` into `a` and of `other` into `b`, for clouds with
    /// [`same_atoms`](Self::same_atoms), using one exponential per atom.
    ///
    /// Returns `false`, leaving the outputs unspecified, when either
    /// normalizer drops below `1e-200`; the shared shift is then too coarse
    /// and the caller must evaluate the scores separately. Above that bound
    /// any underflowed term is below `1e-108` of its normalizer.
    pub(crate) fn paired_scores_into(&self, other: &PointCloud, t: f64, x: &[f64], a: &mut [f64], b: &mut [f64]) -> Result<bool> {
        Self::check_time(t)?;
        self.mix.check_point(x)?;
        const MIN_NORM: f64 = 1e-200;
        let d = self.mix.dim;
        let sqrt_t = t.sqrt();
        let inv = 1.0 / (1.0 - t);
        let n = self.len();
        let mut q = vec![0.0; n];
        let mut max = f64::NEG_INFINITY;
        for (qi, mu) in q.iter_mut().zip(self.mix.means.chunks_exact(d)) {
            let sq: f64 = x.iter().zip(mu).map(|(xi, mi)| (xi - sqrt_t * mi) * (xi - sqrt_t * mi)).sum();
            *qi = -0.5 * sq * inv;
            max = max.max(*qi);
        }
        a.fill(0.0);
        b.fill(0.0);
        let (mut za, mut zb) = (0.0, 0.0);
        let atoms = q.iter().zip(self.mix.weights.iter().zip(&other.mix.weights));
        for ((&qi, (&wa, &wb)), mu) in atoms.zip(self.mix.means.chunks_exact(d)) {
            let g = qi - max;
            if !(g > UNDERFLOW) {
                continue;
            }
            let e = g.exp();
            let (ea, eb) = (wa * e, wb * e);
            za += ea;
            zb += eb;
            for ((ai, bi), mi) in a.iter_mut().zip(b.iter_mut()).zip(mu) {
                *ai += ea * mi;
                *bi += eb * mi;
            }
        }
        if !(za >= MIN_NORM && zb >= MIN_NORM) {
            return Ok(false);
        }
        for ((ai, bi), xi) in a.iter_mut().zip(b.iter_mut()).zip(x) {
            *ai = (sqrt_t * *ai / za - xi) * inv;
            *bi = (sqrt_t * *bi / zb - xi) * inv;
        }
        Ok(true)
    }
}

/// Either tractable target family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gmm(IsotropicGmm),
    Cloud(PointCloud),
}

impl From<IsotropicGmm> for Model {
    fn from(m: IsotropicGmm) -> Self {
        Model::Gmm(m)
    }
}

impl From<PointCloud> for Model {
    fn from(c: PointCloud) -> Self {
        Model::Cloud(c)
    }
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Gmm(m) => m.dim(),
            Model::Cloud(c) => c.dim(),
        }
    }

    pub fn noisy_logpdf(&self, t: f64, x: &[f64]) -> Result<f64> {
        match self {
            Model::Gmm(m) => m.noisy_logpdf(t, x),
            Model::Cloud(c) => c.noisy_logpdf(t, x),
        }
    }

    pub fn noisy_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Gmm(m) => m.noisy_score(t, x),
            Model::Cloud(c) => c.noisy_score(t, x),
        }
    }

    /// Writes the score into `out` and returns the log-density as a by-product.
    #[inline]
    pub fn noisy_score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<f64> {
        match self {
            Model::Gmm(m) => m.noisy_score_into(t, x, out),
            Model::Cloud(c) => c.noisy_score_into(t, x, out),
        }
    }

    pub fn posterior_mean(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Gmm(m) => m.posterior_mean(t, x),
            Model::Cloud(c) => c.posterior_mean(t, x),
        }
    }

    pub fn sample_clean(&self, rng: &mut CounterRng, out: &mut [f64]) {
        match self {
            Model::Gmm(m) => m.sample_clean(rng, out),
            Model::Cloud(c) => c.sample_clean(rng, out),
        }
    }

    pub fn as_gmm(&self) -> Option<&IsotropicGmm> {
        match self {
            Model::Gmm(m) => Some(m),
            Model::Cloud(_) => None,
        }
    }

    pub fn as_cloud(&self) -> Option<&PointCloud> {
        match self {
            Model::Cloud(c) => Some(c),
            Model::Gmm(_) => None,
        }
    }
}

/// Class-conditional and marginal mixtures for one target class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPair {
    pub unconditional: IsotropicGmm,
    pub conditional: IsotropicGmm,
    pub prior: f64,
}

/// Absolute density tolerance of the construction-time consistency check.
const CONSISTENCY_TOL: f64 = 1e-8;
const PROBE_POINTS: usize = 101;

impl ClassPair {
    /// Pairs a marginal with the target-class conditional and its prior `p(c)`.
    pub fn new(unconditional: IsotropicGmm, conditional: IsotropicGmm, prior: f64) -> Result<Self> {
        if unconditional.dim() != conditional.dim() {
            return Err(Error::DimensionMismatch {
                expected: unconditional.dim(),
                got: conditional.dim(),
            });
        }
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::InvalidModel(format!("class prior must lie in (0,1), got {prior}")));
        }
        Ok(Self {
            unconditional,
            conditional,
            prior,
        })
    }

    /// Like [`ClassPair::new`], additionally checking that
    /// `p(x) = p(c) p(x|c) + (1 - p(c)) p(x|other)` on a probe grid.
    pub fn new_checked(
        unconditional: IsotropicGmm,
        conditional: IsotropicGmm,
        other: &IsotropicGmm,
        prior: f64,
    ) -> Result<Self> {
        let pair = Self::new(unconditional, conditional, prior)?;
        if other.dim() != pair.dim() {
            return Err(Error::DimensionMismatch {
                expected: pair.dim(),
                got: other.dim(),
            });
        }
        let center = pair.unconditional.mean();
        let max_sd = (0..pair.unconditional.n_components())
            .map(|k| pair.unconditional.variance(k).sqrt())
            .fold(0.0, f64::max);
        let half_width = 6.0 * max_sd
            + (0..pair.unconditional.n_components())
                .flat_map(|k| {
                    pair.unconditional
                        .component_mean(k)
                        .iter()
                        .zip(&center)
                        .map(|(m, c)| (m - c).abs())
                        .collect::<Vec<_>>()
                })
                .fold(0.0, f64::max);
        let mut x = center.clone();
        for axis in 0..pair.dim() {
            for j in 0..PROBE_POINTS {
                x.copy_from_slice(&center);
                x[axis] = center[axis] - half_width + 2.0 * half_width * j as f64 / (PROBE_POINTS - 1) as f64;
                let lhs = pair.unconditional.noisy_logpdf(1.0, &x)?.exp();
                let rhs = prior * pair.conditional.noisy_logpdf(1.0, &x)?.exp()
                    + (1.0 - prior) * other.noisy_logpdf(1.0, &x)?.exp();
                if (lhs - rhs).abs() > CONSISTENCY_TOL {
                    return Err(Error::InvalidModel(format!(
                        "marginal is not the prior-weighted mixture of the classes at {x:?}: {lhs} vs {rhs}"
                    )));
                }
            }
        }
        Ok(pair)
    }

    /// Builds the marginal as `prior * conditional + (1 - prior) * other`.
    pub fn from_classes(conditional: IsotropicGmm, other: IsotropicGmm, prior: f64) -> Result<Self> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::InvalidModel(format!("class prior must lie in (0,1), got {prior}")));
        }
        let lp = prior.ln();
        let lq = (1.0 - prior).ln();
        let mut comps: Vec<GmmComponent> = conditional
            .components()
            .into_iter()
            .map(|mut c| {
                c.log_weight += lp;
                c
            })
            .collect();
        comps.extend(other.components().into_iter().map(|mut c| {
            c.log_weight += lq;
            c
        }));
        Self::new(IsotropicGmm::new(comps)?, conditional, prior)
    }

    pub fn dim(&self) -> usize {
        self.conditional.dim()
    }

    /// `log p(c | X_t = x)`.
    pub fn log_classifier_prob(&self, t: f64, x: &[f64]) -> Result<f64> {
        let lc = self.conditional.noisy_logpdf(t, x)?;
        let lu = self.unconditional.noisy_logpdf(t, x)?;
        Ok((self.prior.ln() + lc - lu).min(0.0))
    }

    /// `p(c | X_t = x) = p(c) p_t(x | c) / p_t(x)`.
    pub fn classifier_prob(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.log_classifier_prob(t, x).map(f64::exp)
    }
}

/// Ready-made instances used by the shipped experiments.
pub mod presets {
    use super::*;

    /// One-dimensional two-class mixture: class 1 is `N(-1,1)/2 + N(1,1)/2`,
    /// class 0 is `N(0,1)`, equal priors. The marginal is
    /// `N(0,1)/2 + N(-1,1)/4 + N(1,1)/4`.
    pub fn two_class_pair() -> ClassPair {
        let target = symmetric_bimodal(1.0);
        let other = IsotropicGmm::standard_normal(1);
        let marginal = IsotropicGmm::new(vec![
            GmmComponent::new(0.5, vec![0.0], 1.0),
            GmmComponent::new(0.25, vec![-1.0], 1.0),
            GmmComponent::new(0.25, vec![1.0], 1.0),
        ])
        .expect("valid");
        ClassPair::new_checked(marginal, target, &other, 0.5).expect("consistent")
    }

    /// `N(-1, s2)/2 + N(1, s2)/2` in one dimension.
    pub fn symmetric_bimodal(variance: f64) -> IsotropicGmm {
        IsotropicGmm::new(vec![
            GmmComponent::new(0.5, vec![-1.0], variance),
            GmmComponent::new(0.5, vec![1.0], variance),
        ])
        .expect("valid")
    }
}
