//! Seeded Swiss-roll point cloud.

use std::f64::consts::PI;

use anyhow::ensure;
use guidelab_core::models::PointCloud;
use guidelab_core::rng::StreamKey;
use rand::Rng;

/// Spiral scale.
pub const SCALE: f64 = 0.7;
/// Half-width of the uniform per-axis jitter.
pub const JITTER: f64 = 0.1;

/// `n_points` uniform-weight atoms `0.7 (theta cos theta, theta sin theta)`
/// plus `U(-0.1, 0.1)` jitter per axis, with `theta ~ U[1.5 pi, 4.5 pi]`.
pub fn generate_swissroll(n_points: usize, seed: u64) -> anyhow::Result<PointCloud> {
    ensure!(n_points >= 10, "swiss roll needs at least 10 points, got {n_points}");
    let mut rng = StreamKey::root(seed).rng();
    let points = (0..n_points)
        .map(|_| {
            let theta = rng.random_range(1.5 * PI..4.5 * PI);
            let jx = rng.random_range(-JITTER..JITTER);
            let jy = rng.random_range(-JITTER..JITTER);
            vec![SCALE * theta * theta.cos() + jx, SCALE * theta * theta.sin() + jy]
        })
        .collect();
    Ok(PointCloud::uniform(points)?)
}
