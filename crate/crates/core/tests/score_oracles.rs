//! Closed-form scores, densities and posterior means against independent
//! oracles: finite differences, the scalar formulas of the two-class mixture,
//! and Monte-Carlo importance sampling.

use guidelab_core::models::presets::{symmetric_bimodal, two_class_pair};
use guidelab_core::stats::MeanEstimate;
use guidelab_core::{GmmComponent, IsotropicGmm, Model, PointCloud, StreamKey};
use rand::Rng;

const FD_STEP: f64 = 1e-5;

fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[i] += FD_STEP;
            b[i] -= FD_STEP;
            (f(&a) - f(&b)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_gmm(rng: &mut impl Rng, d: usize) -> IsotropicGmm {
    let k = rng.random_range(1..=4);
    IsotropicGmm::new(
        (0..k)
            .map(|_| {
                GmmComponent::new(
                    rng.random_range(0.1..1.0),
                    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    rng.random_range(0.3..2.0),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn random_cloud(rng: &mut impl Rng, d: usize, n: usize) -> PointCloud {
    let pts = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let lw = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    PointCloud::new(pts, lw).unwrap()
}

#[test]
fn scores_match_finite_differences() {
    let mut rng = StreamKey::root(101).rng();
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let d = rng.random_range(1..=3);
        let model: Model = if case % 2 == 0 {
            random_gmm(&mut rng, d).into()
        } else {
            let n = rng.random_range(1..=10);
            random_cloud(&mut rng, d, n).into()
        };
        let t = rng.random_range(0.05..0.95);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.5..2.5)).collect();
        let s = model.noisy_score(t, &x).unwrap();
        let fd = fd_gradient(|y| model.noisy_logpdf(t, y).unwrap(), &x);
        for (a, b) in s.iter().zip(&fd) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-5, "max abs error {worst}");
}

#[test]
fn two_d_gmm_at_fixed_time() {
    let mut rng = StreamKey::root(5).rng();
    let g = random_gmm(&mut rng, 2);
    for _ in 0..50 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s = g.noisy_score(0.37, &x).unwrap();
        let fd = fd_gradient(|y| g.noisy_logpdf(0.37, y).unwrap(), &x);
        for (a, b) in s.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn ten_point_cloud_at_fixed_time() {
    let mut rng = StreamKey::root(6).rng();
    let c = random_cloud(&mut rng, 2, 10);
    for _ in 0..50 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s = c.noisy_score(0.6, &x).unwrap();
        let fd = fd_gradient(|y| c.noisy_logpdf(0.6, y).unwrap(), &x);
        for (a, b) in s.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

fn grid() -> impl Iterator<Item = (f64, f64)> {
    (0..50).flat_map(|i| (0..50).map(move |j| (i as f64 / 50.0, -4.0 + 8.0 * j as f64 / 49.0)))
}

#[test]
fn two_class_scalar_formulas() {
    let pair = two_class_pair();
    for (t, x) in grid() {
        let rt = t.sqrt();
        let a = (-2.0 * rt * x).exp();
        let b = 2.0 * (t / 2.0 - rt * x).exp();
        let cond = -x + rt * (1.0 - a) / (1.0 + a);
        let uncond = -x + rt * (1.0 - a) / (1.0 + a + b);
        let prob = (1.0 + a) / (1.0 + a + b);
        let sc = pair.conditional.noisy_score(t, &[x]).unwrap()[0];
        let su = pair.unconditional.noisy_score(t, &[x]).unwrap()[0];
        let p = pair.classifier_prob(t, &[x]).unwrap();
        assert!((sc - cond).abs() <= 1e-12, "t={t} x={x}: {sc} vs {cond}");
        assert!((su - uncond).abs() <= 1e-12, "t={t} x={x}: {su} vs {uncond}");
        assert!((p - prob).abs() <= 1e-12, "t={t} x={x}: {p} vs {prob}");
    }
}

#[test]
fn classifier_prob_reference_points() {
    let pair = two_class_pair();
    let at0 = pair.classifier_prob(1.0, &[0.0]).unwrap();
    assert!((at0 - 1.0 / (1.0 + 0.5f64.exp())).abs() < 1e-15);
    assert!((at0 - 0.377541).abs() < 1e-6);
    assert!(pair.classifier_prob(0.7, &[50.0]).unwrap() > 1.0 - 1e-12);
}

#[test]
fn three_term_density_by_direct_summation() {
    let pair = two_class_pair();
    let phi = |x: f64, m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let direct = (0.5 * phi(0.0, 0.0) + 0.25 * phi(0.0, -1.0) + 0.25 * phi(0.0, 1.0)).ln();
    assert!((pair.unconditional.noisy_logpdf(1.0, &[0.0]).unwrap() - direct).abs() < 1e-14);
}

#[test]
fn tweedie_with_equal_variances() {
    // with sigma_k^2 = s2 for all k: score = (sqrt(t) E[X0|x] - x) / (1 - t)
    for s2 in [1.0, 0.4, 2.5] {
        let g = symmetric_bimodal(s2);
        for (t, x) in grid().filter(|(t, _)| *t > 0.0) {
            let e = g.posterior_mean(t, &[x]).unwrap()[0];
            let s = g.noisy_score(t, &[x]).unwrap()[0];
            let tweedie = (t.sqrt() * e - x) / (1.0 - t);
            assert!((s - tweedie).abs() <= 1e-10 * (1.0 + s.abs()), "s2={s2} t={t} x={x}");
        }
    }
}

#[test]
fn posterior_mean_by_importance_sampling() {
    let mut rng = StreamKey::root(77).rng();
    let g = random_gmm(&mut rng, 2);
    let t = 0.5;
    let x = [0.3, -0.8];
    let exact = g.posterior_mean(t, &x).unwrap();
    let n = 1_000_000;
    let mut x0 = [0.0; 2];
    let mut w = Vec::with_capacity(n);
    let mut wx: [Vec<f64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut draws = StreamKey::root(78).rng();
    for _ in 0..n {
        g.sample_clean(&mut draws, &mut x0);
        let sq: f64 = x.iter().zip(&x0).map(|(a, b)| (a - t.sqrt() * b).powi(2)).sum();
        let wi = (-sq / (2.0 * (1.0 - t))).exp();
        w.push(wi);
        wx[0].push(wi * x0[0]);
        wx[1].push(wi * x0[1]);
    }
    let mw = MeanEstimate::from_slice(&w).mean;
    for i in 0..2 {
        let est = MeanEstimate::from_slice(&wx[i]).mean / mw;
        // delta method for the self-normalized ratio
        let resid: Vec<f64> = wx[i].iter().zip(&w).map(|(a, b)| (a - est * b) / mw).collect();
        let se = MeanEstimate::from_slice(&resid).stderr;
        assert!((est - exact[i]).abs() <= 3.0 * se, "axis {i}: {est} vs {} (se {se})", exact[i]);
    }
}

#[test]
fn bimodal_posterior_mean_display() {
    let g = symmetric_bimodal(1.0);
    for (t, x) in grid().filter(|(t, _)| *t > 0.0) {
        let p_minus = 1.0 / (1.0 + (2.0 * t.sqrt() * x).exp());
        let expected = t.sqrt() * x + (1.0 - t) * (1.0 - 2.0 * p_minus);
        assert!((g.posterior_mean(t, &[x]).unwrap()[0] - expected).abs() < 1e-12);
    }
}
