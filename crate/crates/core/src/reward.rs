//! Exponentiated rewards, exact reweighting transforms and reward posteriors.
//!
//! A reward is always `r(x) = exp(beta * r_ext(x)) > 0`; a cost `J` is the same
//! object used with the opposite guidance sign. Reweighting maps a model `p` to
//! `p_rw(x) = r(x) p(x) / E[r(X0)]`, and the reward posterior at model time `t`
//! is `r_{1-t}(y) = E[r(X0)] * p_rw,t(y) / p_t(y)`.

use crate::error::{Error, Result};
use crate::models::{ClassPair, GmmComponent, IsotropicGmm, Model, PointCloud};
use crate::stats::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub enum RewardKind {
    /// `r_ext(x) = -|x - target|^2`.
    QuadraticWell { target: Vec<f64>, beta: f64 },
    /// `r_ext(x) = height` when `lo <= x[axis] <= hi`, else 0.
    IndicatorBand {
        axis: usize,
        lo: f64,
        hi: f64,
        height: f64,
        beta: f64,
    },
    /// `J(x) = 1 / p(c | X0 = x)`.
    ReciprocalClassifierCost { pair: ClassPair },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Reward,
    Cost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub sign: Sign,
}

impl RewardSpec {
    pub fn quadratic_well(target: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidReward(format!("beta must be positive, got {beta}")));
        }
        if target.is_empty() || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidReward("target must be a finite non-empty vector".into()));
        }
        Ok(Self {
            kind: RewardKind::QuadraticWell { target, beta },
            sign: Sign::Reward,
        })
    }

    pub fn indicator_band(axis: usize, lo: f64, hi: f64, height: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidReward(format!("beta must be positive, got {beta}")));
        }
        if !(lo < hi) {
            return Err(Error::InvalidReward(format!("band needs lo < hi, got [{lo}, {hi}]")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidReward(format!("height must be positive, got {height}")));
        }
        Ok(Self {
            kind: RewardKind::IndicatorBand {
                axis,
                lo,
                hi,
                height,
                beta,
            },
            sign: Sign::Reward,
        })
    }

    pub fn reciprocal_classifier_cost(pair: ClassPair) -> Self {
        Self {
            kind: RewardKind::ReciprocalClassifierCost { pair },
            sign: Sign::Cost,
        }
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let bad = match &self.kind {
            RewardKind::QuadraticWell { target, .. } => (x.len() != target.len()).then_some(target.len()),
            RewardKind::IndicatorBand { axis, .. } => (*axis >= x.len()).then_some(axis + 1),
            RewardKind::ReciprocalClassifierCost { pair } => (x.len() != pair.dim()).then_some(pair.dim()),
        };
        match bad {
            Some(expected) => Err(Error::DimensionMismatch {
                expected,
                got: x.len(),
            }),
            None => Ok(()),
        }
    }

    /// `log r(x)`.
    pub fn log_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            RewardKind::QuadraticWell { target, beta } => {
                -beta * x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            RewardKind::IndicatorBand {
                axis,
                lo,
                hi,
                height,
                beta,
            } => {
                if (*lo..=*hi).contains(&x[*axis]) {
                    beta * height
                } else {
                    0.0
                }
            }
            RewardKind::ReciprocalClassifierCost { pair } => -pair.log_classifier_prob(1.0, x)?,
        })
    }

    /// `r(x) > 0`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.log_value(x).map(f64::exp)
    }
}

/// Closed-form reweighting of a GMM by `exp(-beta |x - target|^2)`.
///
/// Returns the reweighted mixture together with `log E[r(X0)]`.
pub fn reweight_gmm_quadratic(m: &IsotropicGmm, target: &[f64], beta: f64) -> Result<(IsotropicGmm, f64)> {
    if target.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: target.len(),
        });
    }
    let half_d = 0.5 * m.dim() as f64;
    let mut log_terms = Vec::with_capacity(m.n_components());
    let comps = m
        .components()
        .into_iter()
        .map(|c| {
            let a = 1.0 + 2.0 * beta * c.variance;
            let dist2: f64 = c.mean.iter().zip(target).map(|(u, v)| (u - v) * (u - v)).sum();
            // Gaussian-product normalizer of component k
            let log_z = -half_d * a.ln() - beta * dist2 / a;
            log_terms.push(c.log_weight + log_z);
            let s = 2.0 * beta * c.variance;
            GmmComponent {
                log_weight: c.log_weight + log_z,
                mean: c.mean.iter().zip(target).map(|(u, v)| (u + s * v) / a).collect(),
                variance: c.variance / a,
            }
        })
        .collect();
    Ok((IsotropicGmm::new(comps)?, log_sum_exp(&log_terms)))
}

/// Multiplies every atom's weight by `exp(log_r(s_i))`. Returns the reweighted
/// cloud and `log E[r(X0)]`.
pub fn reweight_pointcloud_with(
    c: &PointCloud,
    mut log_r: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(PointCloud, f64)> {
    let mut lw = Vec::with_capacity(c.len());
    for (s, &w) in c.points().zip(c.log_weights()) {
        lw.push(w + log_r(s)?);
    }
    let log_mean = log_sum_exp(&lw);
    if !log_mean.is_finite() {
        return Err(Error::InvalidReward("reweighting annihilated every atom".into()));
    }
    let points = c.points().map(<[f64]>::to_vec).collect();
    Ok((PointCloud::new(points, lw)?, log_mean))
}

pub fn reweight_pointcloud(c: &PointCloud, r: &RewardSpec) -> Result<PointCloud> {
    reweight_pointcloud_with(c, |s| r.log_value(s)).map(|(p, _)| p)
}

/// `E[r(X0)]`: closed form for GMM with a quadratic well, atom sum for clouds.
pub fn mean_reward(model: &Model, r: &RewardSpec) -> Result<f64> {
    Reweighting::new(model, r).map(|rw| rw.mean_reward)
}

/// `r_{1-t}(y) = mean_reward * exp(log p_rw,t(y) - log p_t(y))`.
pub fn reward_posterior(original: &Model, reweighted: &Model, mean_reward: f64, t: f64, y: &[f64]) -> Result<f64> {
    let lr = reweighted.noisy_logpdf(t, y)?;
    let lo = original.noisy_logpdf(t, y)?;
    Ok(mean_reward * (lr - lo).exp())
}

/// A model together with its exact reweighting and normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Reweighting {
    pub original: Model,
    pub reweighted: Model,
    pub mean_reward: f64,
}

impl Reweighting {
    pub fn new(model: &Model, r: &RewardSpec) -> Result<Self> {
        let (reweighted, log_mean): (Model, f64) = match (model, &r.kind) {
            (Model::Gmm(m), RewardKind::QuadraticWell { target, beta }) => {
                let (g, lm) = reweight_gmm_quadratic(m, target, *beta)?;
                (g.into(), lm)
            }
            (Model::Gmm(m), RewardKind::ReciprocalClassifierCost { pair }) => {
                // p(x|c) / p(c|x) = p(x) / p(c): the marginal, with mean 1/p(c)
                if *m != pair.conditional {
                    return Err(Error::Unsupported(
                        "reciprocal-classifier reweighting of a GMM needs the pair's conditional model".into(),
                    ));
                }
                (pair.unconditional.clone().into(), -pair.prior.ln())
            }
            (Model::Gmm(_), RewardKind::IndicatorBand { .. }) => {
                return Err(Error::Unsupported(
                    "indicator rewards have no closed-form GMM reweighting".into(),
                ))
            }
            (Model::Cloud(c), _) => {
                let (p, lm) = reweight_pointcloud_with(c, |s| r.log_value(s))?;
                (p.into(), lm)
            }
        };
        Ok(Self {
            original: model.clone(),
            reweighted,
            mean_reward: log_mean.exp(),
        })
    }

    /// Cost view of a class pair: `J = 1/p(c|x)` on the conditional model.
    pub fn classifier_cost(pair: &ClassPair) -> Self {
        Self {
            original: pair.conditional.clone().into(),
            reweighted: pair.unconditional.clone().into(),
            mean_reward: 1.0 / pair.prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.original.dim()
    }

    /// `log r_{1-t}(y)`.
    pub fn log_posterior(&self, t: f64, y: &[f64]) -> Result<f64> {
        let lr = self.reweighted.noisy_logpdf(t, y)?;
        let lo = self.original.noisy_logpdf(t, y)?;
        Ok(self.mean_reward.ln() + lr - lo)
    }

    /// `r_{1-t}(y) = E[r(X0) | X_{1-t} = y]`.
    pub fn posterior(&self, t: f64, y: &[f64]) -> Result<f64> {
        self.log_posterior(t, y).map(f64::exp)
    }

    /// `grad log p_rw,t(y) - grad log p_t(y)`, which equals `grad log r_{1-t}(y)`.
    pub fn score_difference(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let a = self.reweighted.noisy_score(t, y)?;
        let b = self.original.noisy_score(t, y)?;
        Ok(a.iter().zip(&b).map(|(x, z)| x - z).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::presets::{symmetric_bimodal, two_class_pair};

    #[test]
    fn quadratic_well_values() {
        let r = RewardSpec::quadratic_well(vec![2.0], 1.0).unwrap();
        assert_eq!(r.value(&[2.0]).unwrap(), 1.0);
        assert!((r.value(&[0.0]).unwrap() - (-4.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn reweighted_bimodal_parameters() {
        let (g, _) = reweight_gmm_quadratic(&symmetric_bimodal(1.0), &[2.0], 1.0).unwrap();
        assert!((g.variance(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.variance(1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.component_mean(0)[0] - 1.0).abs() < 1e-15);
        assert!((g.component_mean(1)[0] - 5.0 / 3.0).abs() < 1e-15);
        let ratio = (g.log_weight(0) - g.log_weight(1)).exp();
        assert!((ratio - (-8.0f64 / 3.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn vanishing_beta_is_identity() {
        let m = IsotropicGmm::new(vec![
            GmmComponent::new(0.3, vec![-1.0, 2.0], 0.5),
            GmmComponent::new(0.7, vec![1.5, 0.0], 2.0),
        ])
        .unwrap();
        let (g, lm) = reweight_gmm_quadratic(&m, &[3.0, 3.0], 1e-10).unwrap();
        for k in 0..2 {
            assert!((g.weight(k) - m.weight(k)).abs() < 1e-8);
            assert!((g.variance(k) - m.variance(k)).abs() < 1e-8);
            for i in 0..2 {
                assert!((g.component_mean(k)[i] - m.component_mean(k)[i]).abs() < 1e-8);
            }
        }
        assert!(lm.abs() < 1e-8);
    }

    #[test]
    fn standard_normal_mean_reward() {
        for &beta in &[0.1, 1.0, 7.0] {
            let r = RewardSpec::quadratic_well(vec![0.0], beta).unwrap();
            let z = mean_reward(&IsotropicGmm::standard_normal(1).into(), &r).unwrap();
            assert!((z - (1.0 + 2.0 * beta).powf(-0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn band_on_four_atoms() {
        let c = PointCloud::uniform(vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]]).unwrap();
        let r = RewardSpec::indicator_band(0, 0.5, 5.5, 10.0, 1.0).unwrap();
        let rw = reweight_pointcloud(&c, &r).unwrap();
        let e10 = 10f64.exp();
        let sel = e10 / (2.0 * e10 + 2.0);
        assert!((rw.weight(1) - sel).abs() < 1e-15);
        assert!((rw.weight(2) - sel).abs() < 1e-15);
        assert!((rw.weight(0) - 1.0 / (2.0 * e10 + 2.0)).abs() < 1e-18);
        let z = mean_reward(&c.into(), &r).unwrap();
        assert!((z - (2.0 * e10 + 2.0) / 4.0).abs() < 1e-9 * z);
    }

    #[test]
    fn cloud_mean_reward_is_atom_average() {
        let c = PointCloud::uniform(vec![vec![0.3], vec![-1.2]]).unwrap();
        let r = RewardSpec::quadratic_well(vec![1.0], 0.7).unwrap();
        let z = mean_reward(&c.clone().into(), &r).unwrap();
        let expect = 0.5 * (r.value(&[0.3]).unwrap() + r.value(&[-1.2]).unwrap());
        assert!((z - expect).abs() < 1e-15);
    }

    #[test]
    fn scale_invariance_of_reweighting() {
        let c = PointCloud::uniform(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 3.0]]).unwrap();
        let r = RewardSpec::quadratic_well(vec![1.0, 1.0], 0.4).unwrap();
        let (a, la) = reweight_pointcloud_with(&c, |s| r.log_value(s)).unwrap();
        let (b, lb) = reweight_pointcloud_with(&c, |s| r.log_value(s).map(|v| v + 3.0f64.ln())).unwrap();
        for i in 0..3 {
            assert!((a.log_weights()[i] - b.log_weights()[i]).abs() < 1e-14);
        }
        assert!((lb - la - 3.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn classifier_cost_values() {
        let pair = two_class_pair();
        let j = RewardSpec::reciprocal_classifier_cost(pair.clone());
        assert_eq!(j.sign, Sign::Cost);
        let p = pair.classifier_prob(1.0, &[0.4]).unwrap();
        assert!((j.value(&[0.4]).unwrap() - 1.0 / p).abs() < 1e-14);
        let rw = Reweighting::new(&pair.conditional.clone().into(), &j).unwrap();
        assert_eq!(rw, Reweighting::classifier_cost(&pair));
        assert!((rw.mean_reward - 2.0).abs() < 1e-15);
        // the posterior of J at time t is the reciprocal classifier at that time
        for &t in &[0.2, 0.6, 0.99] {
            for &y in &[-1.5, 0.0, 0.8] {
                let lhs = rw.posterior(t, &[y]).unwrap();
                let rhs = 1.0 / pair.classifier_prob(t, &[y]).unwrap();
                assert!((lhs - rhs).abs() < 1e-12 * rhs);
            }
        }
    }

    #[test]
    fn unsupported_combinations() {
        let m: Model = symmetric_bimodal(1.0).into();
        let band = RewardSpec::indicator_band(0, -1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(Reweighting::new(&m, &band), Err(Error::Unsupported(_))));
        let j = RewardSpec::reciprocal_classifier_cost(two_class_pair());
        assert!(matches!(
            Reweighting::new(&IsotropicGmm::standard_normal(1).into(), &j),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(RewardSpec::quadratic_well(vec![0.0], 0.0).is_err());
        assert!(RewardSpec::quadratic_well(vec![], 1.0).is_err());
        assert!(RewardSpec::indicator_band(0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(RewardSpec::indicator_band(0, 0.0, 1.0, -1.0, 1.0).is_err());
        let r = RewardSpec::quadratic_well(vec![0.0], 1.0).unwrap();
        assert!(r.value(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn posterior_near_data_is_reward() {
        let m: Model = symmetric_bimodal(1.0).into();
        let r = RewardSpec::quadratic_well(vec![2.0], 1.0).unwrap();
        let rw = Reweighting::new(&m, &r).unwrap();
        for &y in &[-1.0, 0.5, 2.0, 3.3] {
            let post = rw.posterior(1.0 - 1e-6, &[y]).unwrap();
            let exact = r.value(&[y]).unwrap();
            assert!((post / exact - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn density_ratio_identity() {
        let m: Model = symmetric_bimodal(1.0).into();
        let r = RewardSpec::quadratic_well(vec![2.0], 1.0).unwrap();
        let rw = Reweighting::new(&m, &r).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            for &y in &[-2.0, 0.0, 1.0] {
                let lhs = rw.reweighted.noisy_logpdf(t, &[y]).unwrap() - m.noisy_logpdf(t, &[y]).unwrap();
                let rhs = rw.log_posterior(t, &[y]).unwrap() - rw.mean_reward.ln();
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }
}
