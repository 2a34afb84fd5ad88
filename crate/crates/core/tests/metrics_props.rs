//! Metric oracles and randomized invariants.

use guidelab_core::metrics::{fraction_in_box, histogram_tv, monotone_trend, tail_relative_error};
use guidelab_core::reward::reweight_pointcloud_with;
use guidelab_core::samplers::PairedBatch;
use guidelab_core::{IsotropicGmm, Model, PointCloud, Samples, StreamKey};
use proptest::prelude::*;

fn normal_samples(n: u64, seed: u64) -> Samples {
    let m: Model = IsotropicGmm::standard_normal(1).into();
    let mut s = Samples::new(1);
    let mut buf = [0.0];
    for i in 0..n {
        m.sample_clean(&mut StreamKey::root(seed).child(i).rng(), &mut buf);
        s.push(&buf).unwrap();
    }
    s
}

fn batch(g: Vec<f64>, u: Vec<f64>) -> PairedBatch {
    PairedBatch {
        seeds: (0..g.len() as u64).collect(),
        guided: Samples::from_flat(1, g).unwrap(),
        unguided: Samples::from_flat(1, u).unwrap(),
        master_seed: 0,
        schedule_id: String::new(),
        config: String::new(),
        w: 0.0,
    }
}

#[test]
fn same_law_histograms_are_close() {
    let a = normal_samples(100_000, 1);
    let b = normal_samples(100_000, 2);
    let tv = histogram_tv(&a, &b, &[-6.0], &[6.0], 200).unwrap();
    assert!(tv <= 0.03, "{tv}");
}

#[test]
fn tail_ratio_hand_computed() {
    // guided costs 1..=10, unguided 11..=20: improvement 10, top 20% are {10, 9}
    let g: Vec<f64> = (1..=10).map(f64::from).collect();
    let u: Vec<f64> = (11..=20).map(f64::from).collect();
    let r = tail_relative_error(&batch(g, u), |x| Ok(x[0]), 0.2).unwrap();
    assert_eq!(r.threshold, 8.0);
    assert!((r.numerator - 1.9).abs() < 1e-12);
    assert!((r.ratio - 0.19).abs() < 1e-12);
    assert_eq!(r.improvement_stderr, 0.0);
}

#[test]
fn tail_ratio_zero_tv_and_full_tv() {
    let g = vec![1.0, 2.0, 3.0, 4.0];
    let u = vec![5.0, 7.0, 6.0, 9.0];
    let b = batch(g, u);
    let zero = tail_relative_error(&b, |x| Ok(x[0]), 0.0).unwrap();
    assert_eq!(zero.ratio, 0.0);
    let full = tail_relative_error(&b, |x| Ok(x[0]), 1.0).unwrap();
    // every guided cost is in the tail
    assert!((full.ratio - 2.5 / 4.25).abs() < 1e-12);
}

#[test]
fn trend_allows_one_noisy_reversal() {
    let v = [(1.0, 0.1), (2.0, 0.1), (1.9, 0.1), (3.0, 0.1)];
    assert!(monotone_trend(&v, true, 1).passed);
    assert!(!monotone_trend(&v, true, 0).passed);
    let big = [(1.0, 0.01), (2.0, 0.01), (1.0, 0.01)];
    assert!(!monotone_trend(&big, true, 1).passed);
}

fn samples_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, 1..len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tv_is_a_bounded_symmetric_metric(a in samples_strategy(200), b in samples_strategy(200), c in samples_strategy(200), bins in 1usize..50) {
        let s = |v: &Vec<f64>| Samples::from_flat(1, v.clone()).unwrap();
        let tv = |x: &Vec<f64>, y: &Vec<f64>| histogram_tv(&s(x), &s(y), &[-5.0], &[5.0], bins).unwrap();
        let ab = tv(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(ab, tv(&b, &a));
        prop_assert!(tv(&a, &a) == 0.0);
        prop_assert!(ab <= tv(&a, &c) + tv(&c, &b) + 1e-12);
    }

    #[test]
    fn tv_ignores_sample_order(mut a in samples_strategy(100), b in samples_strategy(100), seed in any::<u64>()) {
        let s = |v: &Vec<f64>| Samples::from_flat(1, v.clone()).unwrap();
        let before = histogram_tv(&s(&a), &s(&b), &[-5.0], &[5.0], 20).unwrap();
        let k = (seed as usize) % a.len();
        a.rotate_left(k);
        a.reverse();
        let after = histogram_tv(&s(&a), &s(&b), &[-5.0], &[5.0], 20).unwrap();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn box_fraction_is_a_probability(a in samples_strategy(100), lo in -5.0f64..0.0, width in 0.0f64..10.0) {
        let f = fraction_in_box(&Samples::from_flat(1, a.clone()).unwrap(), &[lo], &[lo + width]);
        let count = a.iter().filter(|&&x| lo <= x && x <= lo + width).count();
        prop_assert_eq!(f, count as f64 / a.len() as f64);
    }

    #[test]
    fn reweighting_ignores_reward_scale(
        pts in prop::collection::vec(-5.0f64..5.0, 2..30),
        shift in -50.0f64..50.0,
        beta in 0.0f64..2.0,
    ) {
        let cloud = PointCloud::uniform(pts.iter().map(|&p| vec![p]).collect()).unwrap();
        let log_r = |x: &[f64]| Ok(-beta * (x[0] - 1.0).powi(2));
        let (a, la) = reweight_pointcloud_with(&cloud, log_r).unwrap();
        let (b, lb) = reweight_pointcloud_with(&cloud, |x: &[f64]| Ok(log_r(x)? + shift)).unwrap();
        prop_assert!((lb - la - shift).abs() < 1e-9);
        for i in 0..cloud.len() {
            prop_assert!((a.weight(i) - b.weight(i)).abs() < 1e-12);
        }
    }
}
