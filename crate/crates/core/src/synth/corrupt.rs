//! Extra damage applied to partial clouds: spherical gaps, a one-sided cut,
//! and Gaussian jitter.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::seed;
use crate::spatial::KdTree;

/// Drops every point within `radius` of any of the `centers`.
pub fn corrupt_gaps(cloud: &PointCloud, centers: &[Point3], radius: f64) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParams(format!(
            "gap radius must be positive, got {radius}"
        )));
    }
    let r2 = radius * radius;
    Ok(cloud.filter(|p| centers.iter().all(|c| (p - c).norm_squared() > r2)))
}

/// Removes the `fraction` of points lying furthest along `direction`.
pub fn occlude_side(cloud: &PointCloud, direction: &Point3, fraction: f64) -> Result<PointCloud> {
    let n = direction.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidParams(
            "occlusion direction must be non-zero".into(),
        ));
    }
    let dir = direction / n;
    let proj: Vec<f64> = cloud.points().iter().map(|p| p.dot(&dir)).collect();
    keep_lowest(cloud, &proj, fraction)
}

/// Drops the `fraction` of points with the largest `score` (ties: later index dropped first).
fn keep_lowest(cloud: &PointCloud, score: &[f64], fraction: f64) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParams(format!(
            "occlusion fraction {fraction} outside [0, 1)"
        )));
    }
    let keep = score.len() - (fraction * score.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let mut mask = vec![false; score.len()];
    for &i in &order[..keep] {
        mask[i] = true;
    }
    let mut i = 0;
    Ok(cloud.filter(|_| {
        i += 1;
        mask[i - 1]
    }))
}

/// Removes the `fraction` of points lying furthest towards `direction`,
/// measured from the nearest centerline sample and with the local tangent
/// component of `direction` removed. Occludes one side of a curved branch
/// along its whole length.
pub fn occlude_lateral(
    cloud: &PointCloud,
    centerline: &[Point3],
    direction: &Point3,
    fraction: f64,
) -> Result<PointCloud> {
    if centerline.len() < 2 {
        return Err(Error::InvalidParams(
            "centerline needs at least 2 samples".into(),
        ));
    }
    let tree = KdTree::new(centerline);
    let mut side = Vec::with_capacity(cloud.len());
    for p in cloud.points() {
        let j = tree.nearest(p).map_or(0, |n| n.index);
        let (a, b) = (
            centerline[j.saturating_sub(1)],
            centerline[(j + 1).min(centerline.len() - 1)],
        );
        let t = (b - a).normalize();
        let d = direction - t * t.dot(direction);
        let n = d.norm();
        side.push(if n > 0.0 {
            (p - centerline[j]).dot(&(d / n))
        } else {
            0.0
        });
    }
    keep_lowest(cloud, &side, fraction)
}

/// Adds isotropic Gaussian noise with standard deviation `sigma`.
pub fn jitter(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal =
        Normal::new(0.0, sigma).map_err(|e| Error::InvalidParams(format!("jitter sigma: {e}")))?;
    let mut rng = seed::rng(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            p + Point3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            )
        })
        .collect();
    match cloud.labels() {
        Some(l) => PointCloud::with_labels(points, l.to_vec()),
        None => PointCloud::new(points),
    }
}
