//! Regression values for the shipped Swiss-roll cloud and its band reweighting.

mod common;

use guidelab::swissroll::generate_swissroll;
use guidelab_core::models::Model;
use guidelab_core::reward::Reweighting;

fn in_band(p: &[f64]) -> bool {
    (-5.0..=6.0).contains(&p[0])
}

#[test]
fn band_holds_a_moderate_share_of_atoms() {
    let cfg = common::shipped("swissroll-reward.toml");
    let built = cfg.build_model().unwrap();
    let Model::Cloud(c) = &built.model else { panic!("expected a cloud") };
    assert_eq!(c, &generate_swissroll(1000, 11).unwrap());
    let frac = c.points().filter(|p| in_band(p)).count() as f64 / c.len() as f64;
    assert!(frac > 0.2 && frac < 0.8, "{frac}");
    assert_eq!(frac, BAND_FRACTION);
}

// pinned for seed 11, 1000 atoms
const BAND_FRACTION: f64 = 0.68;

#[test]
fn reweighted_cloud_concentrates_in_band() {
    let cfg = common::shipped("swissroll-reward.toml");
    let built = cfg.build_model().unwrap();
    let spec = cfg.reward_spec(&built).unwrap().unwrap();
    let rw = Reweighting::new(&built.model, &spec).unwrap();
    let Model::Cloud(c) = &rw.reweighted else { panic!("expected a cloud") };
    let mass: f64 = (0..c.len()).filter(|&i| in_band(c.point(i))).map(|i| c.weight(i)).sum();
    assert!(mass >= 0.999, "{mass}");
}

#[test]
fn atoms_lie_on_the_spiral() {
    let c = generate_swissroll(500, 3).unwrap();
    for p in c.points() {
        let r = p[0].hypot(p[1]);
        // radius 0.7 theta with theta in [1.5 pi, 4.5 pi], plus jitter
        assert!(r > 0.7 * 1.5 * std::f64::consts::PI - 0.15 && r < 0.7 * 4.5 * std::f64::consts::PI + 0.15);
    }
}
