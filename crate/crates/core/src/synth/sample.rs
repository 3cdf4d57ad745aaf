//! Area-uniform surface sampling and arc-length skeleton resampling.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::seed;

use super::branch::BranchModel;
use super::tree::TreeModel;

/// Anything made of swept tubes.
pub trait SweptModel {
    fn tubes(&self) -> Vec<&BranchModel>;
}

impl SweptModel for BranchModel {
    fn tubes(&self) -> Vec<&BranchModel> {
        vec![self]
    }
}

impl SweptModel for TreeModel {
    fn tubes(&self) -> Vec<&BranchModel> {
        std::iter::once(&self.trunk)
            .chain(self.branches.iter().map(|b| &b.model))
            .collect()
    }
}

/// A surface sample with the parameters that generated it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    /// Index into [`SweptModel::tubes`].
    pub tube: usize,
    pub s: f64,
    pub theta: f64,
    pub point: Point3,
}

/// Draws `n` samples uniformly by lateral surface area.
///
/// The area element used is `r(s) * sqrt(1 + r'(s)^2) ds dtheta`; the
/// curvature correction `1 - kappa r cos(theta)` is ignored, which is exact
/// for straight tubes and below `kappa * r` relative error otherwise.
pub fn sample_surface<M: SweptModel + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
) -> Vec<SurfaceSample> {
    let tubes = model.tubes();
    let mut rng = seed::rng(seed);
    let areas: Vec<f64> = tubes.iter().map(|t| t.lateral_area()).collect();
    let total: f64 = areas.iter().sum();
    let weight = |t: &BranchModel, s: f64| {
        let k = t.taper().slope_at(s);
        t.radius_at(s) * (1.0 + k * k).sqrt()
    };
    let max_weight: Vec<f64> = tubes
        .iter()
        .map(|t| {
            let k = t.taper().taper_angle_deg.to_radians().tan();
            t.taper().max_radius(t.length()) * (1.0 + k * k).sqrt()
        })
        .collect();

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let tube = if tubes.len() == 1 {
            0
        } else {
            let mut pick = rng.random::<f64>() * total;
            let mut idx = tubes.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            idx
        };
        let t = tubes[tube];
        let length = t.length();
        let s = loop {
            let s = rng.random::<f64>() * length;
            if rng.random::<f64>() * max_weight[tube] <= weight(t, s) {
                break s;
            }
        };
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        out.push(SurfaceSample {
            tube,
            s,
            theta,
            point: t.surface_unchecked(s, theta),
        });
    }
    out
}

/// `n` points on the tube surface(s), uniform by area, labelled with the
/// generating tube's id. Deterministic for a fixed seed.
pub fn sample_complete<M: SweptModel + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidParams(
            "sample count must be at least 1".into(),
        ));
    }
    let tubes = model.tubes();
    let samples = sample_surface(model, n, seed);
    let labels = samples.iter().map(|s| tubes[s.tube].id).collect();
    PointCloud::with_labels(samples.into_iter().map(|s| s.point).collect(), labels)
}

/// Default number of ground-truth skeleton points.
pub const SKELETON_POINTS: usize = 100;

/// `n` centerline points at equal arc-length spacing, base first, tip last.
pub fn resample_skeleton(model: &BranchModel, n: usize) -> Result<Vec<Point3>> {
    if n < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 skeleton points, got {n}"
        )));
    }
    let length = model.length();
    Ok((0..n)
        .map(|i| model.centerline(length * i as f64 / (n - 1) as f64))
        .collect())
}
