//! Monte-Carlo and closed-form verifiers for the guidance identities.
//!
//! Reverse time and model time coincide: the reverse process at time `t` has
//! the law of the model marginal with argument `t`, and a DDPM step `n` sits at
//! `t = alpha_bar_n`. Early stopping is tied to the schedule, `delta = 1 -
//! alpha_bar_1`, so `r_delta(Y_1)` is the reward posterior at `alpha_bar_1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::histogram_tv;
use crate::models::{ClassPair, IsotropicGmm, Model};
use crate::reward::{reweight_gmm_quadratic, Reweighting, Sign};
use crate::rng::StreamKey;
use crate::samplers::{
    initial_draw, integrate_lanes, run_chain, GuidanceConfig, Init, KeyedNoise, Samples, SharedGrid,
};
use crate::schedule::Schedule;
use crate::stats::MeanEstimate;

/// Default z threshold for Monte-Carlo comparisons.
pub const Z_MAX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_stderr: f64,
    pub rhs_stderr: f64,
    /// Standard error of `lhs - rhs` used for the decision; equals the
    /// combined stderr unless the two sides are paired per trial.
    pub diff_stderr: f64,
    pub z_score: f64,
    pub tol_abs: f64,
    pub trials: usize,
    pub passed: bool,
}

impl IdentityReport {
    /// Builds a report with `passed = |lhs - rhs| <= tol_abs + z_max * diff_stderr`.
    pub fn new(
        name: impl Into<String>,
        lhs: MeanEstimate,
        rhs: MeanEstimate,
        diff_stderr: Option<f64>,
        tol_abs: f64,
        z_max: f64,
    ) -> Self {
        let se = diff_stderr.unwrap_or_else(|| lhs.stderr.hypot(rhs.stderr));
        let gap = (lhs.mean - rhs.mean).abs();
        let z_score = if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            name: name.into(),
            lhs: lhs.mean,
            rhs: rhs.mean,
            lhs_stderr: lhs.stderr,
            rhs_stderr: rhs.stderr,
            diff_stderr: se,
            z_score,
            tol_abs,
            trials: lhs.n.max(rhs.n),
            passed: gap <= tol_abs + z_max * se,
        }
    }
}

fn exact(v: f64) -> MeanEstimate {
    MeanEstimate {
        mean: v,
        stderr: 0.0,
        n: 0,
    }
}

/// Number of steps `m` with `alpha_bar_{n0 - m} - alpha_bar_{n0} = dt`, where
/// `n0` is the step nearest to `t`. Fails unless `dt` lands on the grid to
/// within `1e-9` relative.
pub fn steps_for_window(schedule: &Schedule, t: f64, dt: f64) -> Result<usize> {
    let n0 = schedule.nearest_step(t);
    let a0 = schedule.ab(n0);
    (1..n0)
        .find(|&m| ((schedule.ab(n0 - m) - a0) - dt).abs() <= 1e-9 * dt.abs())
        .ok_or_else(|| Error::Config(format!("window dt={dt} does not align to schedule steps at t={a0}")))
}

/// Infinitesimal effect of a constant drift perturbation `g` applied on a
/// short window after `t`, against its closed form.
///
/// Chains start at `Y = y` on the step nearest `t`; three arms share all noise:
/// unperturbed, perturbed for `window_steps` steps, perturbed for half as many.
/// The two finite-difference quotients are combined by Richardson
/// extrapolation per trial.
pub fn check_lemma2(
    rw: &Reweighting,
    schedule: &Schedule,
    t: f64,
    window_steps: usize,
    g: &[f64],
    y: &[f64],
    trials: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let d = rw.dim();
    if g.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if g.len() != d { g.len() } else { y.len() },
        });
    }
    let n0 = schedule.nearest_step(t);
    let m = window_steps;
    if m < 2 || m % 2 != 0 || m >= n0 {
        return Err(Error::Config(format!(
            "window must be an even number of steps in [2, {}), got {m}",
            n0
        )));
    }
    let t0 = schedule.ab(n0);
    let h1 = schedule.ab(n0 - m) - t0;
    let h2 = schedule.ab(n0 - m / 2) - t0;
    let early = schedule.ab(1);
    let base = &rw.original;

    let per_trial: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::root(seed).child(i);
            let mut lanes: Vec<f64> = y.iter().chain(y).chain(y).copied().collect();
            integrate_lanes(schedule, n0, 1, d, &mut lanes, &mut KeyedNoise(key), |lane, n, tn, x, out| {
                base.noisy_score_into(tn, x, out)?;
                let on = match lane {
                    1 => n > n0 - m,
                    2 => n > n0 - m / 2,
                    _ => false,
                };
                if on {
                    out.iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
                }
                Ok(())
            })?;
            let r0 = rw.posterior(early, &lanes[..d])?;
            let r1 = rw.posterior(early, &lanes[d..2 * d])?;
            let r2 = rw.posterior(early, &lanes[2 * d..])?;
            let d1 = (r1 - r0) / h1;
            let d2 = (r2 - r0) / h2;
            Ok((h1 * d2 - h2 * d1) / (h1 - h2))
        })
        .collect::<Result<_>>()?;

    let ds = rw.score_difference(t0, y)?;
    let rhs = rw.posterior(t0, y)? / t0 * ds.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    Ok(IdentityReport::new(
        "lemma2",
        MeanEstimate::from_slice(&per_trial),
        exact(rhs),
        None,
        0.0,
        Z_MAX,
    ))
}

/// Per-trial pieces of the reward-gap identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTerms {
    /// Guided minus unguided endpoint value (reversed for costs).
    pub gap: f64,
    /// Along-trajectory integral accumulated on the guided chain.
    pub integral: f64,
}

/// Runs one coupled guided/unguided pair from `y_start` and returns both sides
/// of the reward-gap identity for that trial.
pub fn gap_terms_for_trial(
    rw: &Reweighting,
    sign: Sign,
    w: f64,
    schedule: &Schedule,
    y_start: &[f64],
    key: StreamKey,
) -> Result<GapTerms> {
    let d = rw.dim();
    let mut lanes: Vec<f64> = y_start.iter().chain(y_start).copied().collect();
    let mut s_rw = vec![0.0; d];
    let log_mean = rw.mean_reward.ln();
    let mut integral = 0.0;
    // (1 - w) s + w s_rw for rewards, (1 + w) s - w s_J for costs
    let coeff = match sign {
        Sign::Reward => w,
        Sign::Cost => -w,
    };
    integrate_lanes(schedule, schedule.n_steps(), 1, d, &mut lanes, &mut KeyedNoise(key), |lane, n, t, x, out| {
        let lp = rw.original.noisy_score_into(t, x, out)?;
        if lane == 1 || w == 0.0 {
            return Ok(());
        }
        let lp_rw = rw.reweighted.noisy_score_into(t, x, &mut s_rw)?;
        let mut sq = 0.0;
        for i in 0..d {
            let diff = s_rw[i] - out[i];
            sq += diff * diff;
            out[i] += coeff * diff;
        }
        let r_post = (log_mean + lp_rw - lp).exp();
        let dt = schedule.ab(n - 1) - t;
        integral += dt * (w / t) * r_post * sq;
        Ok(())
    })?;
    let early = schedule.ab(1);
    let rg = rw.posterior(early, &lanes[..d])?;
    let ru = rw.posterior(early, &lanes[d..])?;
    Ok(GapTerms {
        gap: match sign {
            Sign::Reward => rg - ru,
            Sign::Cost => ru - rg,
        },
        integral,
    })
}

/// Endpoint reward gap of the guided sampler against the along-trajectory
/// integral of the weighted squared score difference. `Sign::Cost` checks the
/// mirrored cost-reduction statement.
pub fn check_theorem1(
    rw: &Reweighting,
    sign: Sign,
    w: f64,
    schedule: &Schedule,
    init: &Init,
    trials: usize,
    seed: u64,
) -> Result<IdentityReport> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidGuidance(format!("guidance scale must be >= 0, got {w}")));
    }
    let d = rw.dim();
    if let Init::Fixed(v) = init {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let terms: Vec<GapTerms> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::root(seed).child(i);
            let mut y0 = vec![0.0; d];
            match init {
                Init::Gaussian => initial_draw(key, &mut y0),
                Init::Fixed(v) => y0.copy_from_slice(v),
            }
            gap_terms_for_trial(rw, sign, w, schedule, &y0, key)
        })
        .collect::<Result<_>>()?;
    let lhs = MeanEstimate::from_iter(terms.iter().map(|t| t.gap));
    let rhs = MeanEstimate::from_iter(terms.iter().map(|t| t.integral));
    let diff = MeanEstimate::from_iter(terms.iter().map(|t| t.gap - t.integral));
    let name = match sign {
        Sign::Reward => "theorem1",
        Sign::Cost => "theorem2",
    };
    let mut report = IdentityReport::new(name, lhs, rhs, Some(diff.stderr), 0.0, Z_MAX);
    if w > 0.0 {
        report.passed &= report.lhs > 0.0 && report.rhs > 0.0;
    }
    Ok(report)
}

/// Martingale property of the reward posterior: `r_{1-tau}(y)` against the
/// mean of `r_{1-t}(Y_t)` over reverse chains started at `Y_tau = y`.
/// Both times snap to the nearest schedule step; `tol_abs = 0.01 * lhs`
/// absorbs the discretization of the reverse transitions.
pub fn check_lemma3(
    rw: &Reweighting,
    schedule: &Schedule,
    tau: f64,
    t: f64,
    y: &[f64],
    trials: usize,
    seed: u64,
) -> Result<IdentityReport> {
    if !(tau <= t) {
        return Err(Error::Config(format!("need tau <= t, got tau={tau}, t={t}")));
    }
    let d = rw.dim();
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let n_tau = schedule.nearest_step(tau);
    let n_t = schedule.nearest_step(t);
    let t_tau = schedule.ab(n_tau);
    let t_t = schedule.ab(n_t);
    let lhs = rw.posterior(t_tau, y)?;
    let cfg = GuidanceConfig::unguided(rw.original.clone());
    let vals: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::root(seed).child(i);
            let mut x = y.to_vec();
            let mut scratch = vec![0.0; d];
            integrate_lanes(schedule, n_tau, n_t, d, &mut x, &mut KeyedNoise(key), |_, _, tn, z, out| {
                cfg.score_into(tn, z, out, &mut scratch)
            })?;
            rw.posterior(t_t, &x)
        })
        .collect::<Result<_>>()?;
    Ok(IdentityReport::new(
        "lemma3",
        exact(lhs),
        MeanEstimate::from_slice(&vals),
        None,
        0.01 * lhs,
        Z_MAX,
    ))
}

/// Converts the denoising-objective time `s` (where
/// `x_s = sqrt(1 - s) x_0 + sqrt(s) eps`) to the model time argument.
#[inline]
pub fn denoiser_time_to_model_time(s: f64) -> f64 {
    1.0 - s
}

/// Largest discrepancy, over a grid of denoiser times `s` and points `x`,
/// between the optimal noise predictor `E[eps | x_s]` under the reweighted
/// model and `-sqrt(s)` times its score. `beta = 0` means no reweighting.
pub fn check_scorematch_identity(
    gmm: &IsotropicGmm,
    target: &[f64],
    beta: f64,
    s_grid: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidReward(format!("beta must be >= 0, got {beta}")));
    }
    let (rw, _) = reweight_gmm_quadratic(gmm, target, beta)?;
    let mut worst: f64 = 0.0;
    for &s in s_grid {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::DegenerateTime {
                t: s,
                reason: "denoiser time must lie in (0, 1)",
            });
        }
        let t = denoiser_time_to_model_time(s);
        for x in x_grid {
            let e = rw.posterior_mean(t, x)?;
            let score = rw.noisy_score(t, x)?;
            for i in 0..x.len() {
                let eps_hat = (x[i] - (1.0 - s).sqrt() * e[i]) / s.sqrt();
                worst = worst.max((eps_hat + s.sqrt() * score[i]).abs());
            }
        }
    }
    Ok(worst)
}

/// Monte-Carlo `E[1/p(c|X0)]` under the class-conditional law against `1/p(c)`.
pub fn check_cfg_cost_identity(pair: &ClassPair, trials: usize, seed: u64) -> Result<IdentityReport> {
    let d = pair.dim();
    let vals: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamKey::root(seed).child(i).rng();
            let mut x = vec![0.0; d];
            pair.conditional.sample_clean(&mut rng, &mut x);
            pair.classifier_prob(1.0, &x).map(|p| 1.0 / p)
        })
        .collect::<Result<_>>()?;
    let rhs = 1.0 / pair.prior;
    Ok(IdentityReport::new(
        "e_j0",
        MeanEstimate::from_slice(&vals),
        exact(rhs),
        None,
        1e-12 * rhs,
        Z_MAX,
    ))
}

/// Largest gap between the classifier-free drift and the cost-reduction drift
/// built from the reciprocal classifier, over all steps of `schedule` and the
/// given points.
pub fn cfg_cost_drift_discrepancy(pair: &ClassPair, schedule: &Schedule, ws: &[f64], xs: &[Vec<f64>]) -> Result<f64> {
    let cost = Reweighting::classifier_cost(pair);
    let mut worst: f64 = 0.0;
    for &w in ws {
        let a = GuidanceConfig::cfg(pair, w)?;
        let b = GuidanceConfig::cost_reduce(&cost, w)?;
        for n in 1..=schedule.n_steps() {
            for x in xs {
                let u = a.effective_score(schedule, n, x)?;
                let v = b.effective_score(schedule, n, x)?;
                for (p, q) in u.iter().zip(&v) {
                    worst = worst.max((p - q).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Histogram TV of each coarse sampler against a fine reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_steps: usize,
    pub tv: f64,
}

/// Endpoint-distribution distance to a fine reference as the step count grows.
///
/// All schedules are driven by one Brownian path per trial (see
/// [`SharedGrid`]) and a shared `Y_N`, so the measured TV reflects the time
/// discretization rather than sampling noise.
#[allow(clippy::too_many_arguments)]
pub fn discretization_sweep(
    cfg: &GuidanceConfig,
    n_grid: &[usize],
    reference_n: usize,
    c0: f64,
    c1: f64,
    trials: usize,
    seed: u64,
    lo: &[f64],
    hi: &[f64],
    bins: usize,
) -> Result<Vec<SweepPoint>> {
    let d = cfg.dim();
    let mut schedules = n_grid
        .iter()
        .map(|&n| Schedule::new(n, c0, c1))
        .collect::<Result<Vec<_>>>()?;
    schedules.push(Schedule::new(reference_n, c0, c1)?);
    let refs: Vec<&Schedule> = schedules.iter().collect();
    let grid = SharedGrid::new(&refs);
    let k = schedules.len();

    let ends: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map_init(Vec::new, |path, i| {
            let key = StreamKey::root(seed).child(i);
            grid.sample_path(key.child(0), d, path);
            let mut y0 = vec![0.0; d];
            initial_draw(key, &mut y0);
            let mut out = Vec::with_capacity(k * d);
            for (j, s) in schedules.iter().enumerate() {
                let mut y = y0.clone();
                run_chain(cfg, s, s.n_steps(), &mut y, &mut grid.noise(j, path, d))?;
                out.extend(y);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let column = |j: usize| -> Result<Samples> {
        Samples::from_flat(d, ends.iter().flat_map(|e| e[j * d..(j + 1) * d].iter().copied()).collect())
    };
    let reference = column(k - 1)?;
    n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            Ok(SweepPoint {
                n_steps: n,
                tv: histogram_tv(&column(j)?, &reference, lo, hi, bins)?,
            })
        })
        .collect()
}

/// Wraps a model so reward-free checks can reuse the reweighting plumbing:
/// constant reward `c`, reweighted law equal to the original.
pub fn constant_reward(model: Model, c: f64) -> Reweighting {
    Reweighting {
        original: model.clone(),
        reweighted: model,
        mean_reward: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::presets::{symmetric_bimodal, two_class_pair};
    use crate::models::GmmComponent;
    use crate::reward::RewardSpec;

    fn well(beta: f64) -> Reweighting {
        Reweighting::new(
            &symmetric_bimodal(1.0).into(),
            &RewardSpec::quadratic_well(vec![2.0], beta).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn report_pass_rule() {
        let a = MeanEstimate {
            mean: 1.0,
            stderr: 0.1,
            n: 10,
        };
        let r = IdentityReport::new("x", a, exact(1.25), None, 0.0, 3.0);
        assert!((r.z_score - 2.5).abs() < 1e-12);
        assert!(r.passed);
        let r = IdentityReport::new("x", a, exact(1.35), None, 0.0, 3.0);
        assert!(!r.passed);
        let r = IdentityReport::new("x", a, exact(1.35), None, 0.1, 3.0);
        assert!(r.passed);
    }

    #[test]
    fn lemma2_zero_perturbation() {
        let s = Schedule::new(400, 1.0, 2.0).unwrap();
        let r = check_lemma2(&well(1.0), &s, 0.5, 4, &[0.0], &[0.0], 200, 1).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.lhs, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn lemma2_window_validation() {
        let s = Schedule::new(400, 1.0, 2.0).unwrap();
        assert!(check_lemma2(&well(1.0), &s, 0.5, 3, &[0.5], &[0.0], 10, 1).is_err());
        assert!(check_lemma2(&well(1.0), &s, 0.5, 0, &[0.5], &[0.0], 10, 1).is_err());
        let n0 = s.nearest_step(0.5);
        let dt = s.alpha_bar(n0 - 6).unwrap() - s.alpha_bar(n0).unwrap();
        assert_eq!(steps_for_window(&s, 0.5, dt).unwrap(), 6);
        assert!(steps_for_window(&s, 0.5, dt * 1.001).is_err());
    }

    #[test]
    fn theorem1_zero_scale() {
        let s = Schedule::new(200, 1.0, 2.0).unwrap();
        let r = check_theorem1(&well(0.25), Sign::Reward, 0.0, &s, &Init::Fixed(vec![0.0]), 100, 2).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn lemma3_degenerate_cases() {
        let s = Schedule::new(300, 1.0, 2.0).unwrap();
        let r = check_lemma3(&well(1.0), &s, 0.4, 0.4, &[0.3], 50, 3).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.rhs_stderr, 0.0);
        let c = constant_reward(symmetric_bimodal(1.0).into(), 2.5);
        let r = check_lemma3(&c, &s, 0.3, 0.7, &[0.5], 50, 3).unwrap();
        assert!((r.lhs - 2.5).abs() < 1e-14);
        assert!((r.rhs - 2.5).abs() < 1e-14);
    }

    #[test]
    fn scorematch_single_gaussian() {
        let g = IsotropicGmm::gaussian(vec![0.4], 1.7).unwrap();
        let s_grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let xs: Vec<Vec<f64>> = (-8..=8).map(|i| vec![i as f64 * 0.5]).collect();
        assert!(check_scorematch_identity(&g, &[0.0], 0.0, &s_grid, &xs).unwrap() <= 1e-10);
    }

    #[test]
    fn scorematch_unequal_variances() {
        let g = IsotropicGmm::new(vec![
            GmmComponent::new(0.2, vec![-2.0, 1.0], 0.3),
            GmmComponent::new(0.8, vec![1.0, 0.5], 2.2),
        ])
        .unwrap();
        let xs = vec![vec![0.0, 0.0], vec![1.5, -2.0], vec![-3.0, 2.5]];
        let e = check_scorematch_identity(&g, &[1.0, 1.0], 0.7, &[0.05, 0.5, 0.95], &xs).unwrap();
        assert!(e <= 1e-9, "{e}");
    }

    #[test]
    fn cost_identity_constant_integrand() {
        let g = symmetric_bimodal(1.0);
        let pair = ClassPair::new(g.clone(), g, 0.3).unwrap();
        let r = check_cfg_cost_identity(&pair, 1000, 4).unwrap();
        assert!((r.lhs - 1.0 / 0.3).abs() < 1e-12);
        assert!(r.lhs_stderr < 1e-12);
        assert!(r.passed);
    }

    #[test]
    fn cfg_drift_matches_cost_drift() {
        let s = Schedule::new(50, 1.0, 2.0).unwrap();
        let xs: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 * 0.4]).collect();
        let e = cfg_cost_drift_discrepancy(&two_class_pair(), &s, &[0.5, 2.0], &xs).unwrap();
        assert!(e <= 1e-12, "{e}");
    }

    #[test]
    fn adapter_is_complement() {
        assert_eq!(denoiser_time_to_model_time(0.25), 0.75);
    }
}
