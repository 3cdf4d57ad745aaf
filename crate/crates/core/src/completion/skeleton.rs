//! Slice-based skeleton estimation from a (possibly partial) branch cloud.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{centroid, Point3};
use crate::synth::{SkeletalSphere, Skeleton};

use super::circle::{fit_circle_in_plane_with, CircleFit};

pub const DEFAULT_SLICE_COUNT: usize = 30;
/// Minimum points per slice for a usable circle fit.
const MIN_SLICE_POINTS: usize = 6;
/// Half-width, in bins, of the local-linear radius smoother.
const RADIUS_SMOOTHING: usize = 5;
const REFIT_PASSES: usize = 2;

/// Principal axis (unit eigenvector of the largest covariance eigenvalue).
///
/// The sign is fixed so that the largest-magnitude component is positive.
pub fn principal_axis(points: &[Point3]) -> Option<Point3> {
    let mu = centroid(points)?;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mu;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imax();
    let mut axis: Point3 = eig.eigenvectors.column(i).into_owned();
    let n = axis.norm();
    if !(n > 0.0) {
        return None;
    }
    axis /= n;
    if axis[axis.iamax()] < 0.0 {
        axis = -axis;
    }
    Some(axis)
}

#[derive(Debug, Clone, Copy)]
struct Slice {
    center: Point3,
    radius: f64,
}

/// Estimates a skeleton with `slice_count` bins along the principal axis.
///
/// Bin centroids give a first centerline. Every bin is then re-cut
/// perpendicular to the local centerline direction and a geometric
/// least-squares circle is fitted in that plane; its center and radius become the sphere. Bins without a usable
/// fit are bridged by cubic interpolation, radii are smoothed with a local
/// linear fit, and both ends are extended to the cloud's extreme points along
/// the local direction.
pub fn estimate_skeleton(points: &[Point3], slice_count: usize) -> Result<Skeleton> {
    if slice_count < 3 {
        return Err(Error::InvalidParams(format!(
            "slice_count must be at least 3, got {slice_count}"
        )));
    }
    if points.len() < 10 * slice_count {
        return Err(Error::TooSparse(format!(
            "{} points for {slice_count} slices (need {})",
            points.len(),
            10 * slice_count
        )));
    }
    let axis = principal_axis(points).ok_or(Error::EmptyCloud)?;
    let mu = centroid(points).ok_or(Error::EmptyCloud)?;
    let proj: Vec<f64> = points.iter().map(|p| (p - mu).dot(&axis)).collect();
    let (tmin, tmax) = proj
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
    let width = (tmax - tmin) / slice_count as f64;
    if !(width > 0.0) {
        return Err(Error::TooSparse(
            "cloud has no extent along its axis".into(),
        ));
    }
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); slice_count];
    for (i, t) in proj.iter().enumerate() {
        let b = (((t - tmin) / width) as usize).min(slice_count - 1);
        bins[b].push(i);
    }

    // first pass: centroids
    let mut centers: Vec<Option<Point3>> = bins
        .iter()
        .map(|idx| {
            (idx.len() >= MIN_SLICE_POINTS).then(|| {
                let pts: Vec<Point3> = idx.iter().map(|&i| points[i]).collect();
                centroid(&pts).unwrap()
            })
        })
        .collect();
    if centers.iter().flatten().count() < 3 {
        return Err(Error::TooSparse("fewer than 3 populated slices".into()));
    }
    // rough radius: median spread of the bins around their centroids
    let mut spreads: Vec<f64> = bins
        .iter()
        .zip(&centers)
        .filter_map(|(idx, c)| {
            let c = (*c)?;
            let perp = |p: &Point3| {
                let d = p - c;
                (d - axis * d.dot(&axis)).norm()
            };
            Some(idx.iter().map(|&i| perp(&points[i])).fold(0.0, f64::max))
        })
        .collect();
    spreads.sort_by(f64::total_cmp);
    let rough_r = spreads[spreads.len() / 2].max(width * 0.05);

    let mut slices: Vec<Option<Slice>> = vec![None; slice_count];
    for _ in 0..REFIT_PASSES {
        let tangents = local_tangents(&centers, &axis);
        for b in 0..slice_count {
            let (Some(c), Some(t)) = (centers[b], tangents[b]) else {
                slices[b] = None;
                continue;
            };
            let slab: Vec<Point3> = points
                .iter()
                .filter(|p| {
                    let d = *p - c;
                    let along = d.dot(&t);
                    along.abs() <= 0.5 * width && (d - t * along).norm() <= 3.0 * rough_r
                })
                .copied()
                .collect();
            slices[b] = if slab.len() >= MIN_SLICE_POINTS {
                fit_circle_in_plane_with(&slab, &c, &t, CircleFit::Geometric)
                    .filter(|(center, r)| {
                        *r <= 3.0 * rough_r && (center - c).norm() <= 3.0 * rough_r
                    })
                    .map(|(center, radius)| Slice { center, radius })
            } else {
                None
            };
        }
        for b in 0..slice_count {
            centers[b] = slices[b].map(|s| s.center);
        }
        if centers.iter().flatten().count() < 3 {
            return Err(Error::TooSparse(
                "fewer than 3 slices with a usable circle fit".into(),
            ));
        }
    }

    let known: Vec<usize> = (0..slice_count).filter(|&b| slices[b].is_some()).collect();
    let (first, last) = (known[0], known[known.len() - 1]);
    let knot_centers: Vec<Point3> = known.iter().map(|&b| slices[b].unwrap().center).collect();
    let knot_radii: Vec<f64> = known.iter().map(|&b| slices[b].unwrap().radius).collect();
    let mut spine: Vec<Point3> = Vec::with_capacity(last - first + 1);
    let mut radii: Vec<f64> = Vec::with_capacity(last - first + 1);
    for b in first..=last {
        spine.push(bridge(&known, &knot_centers, b));
        radii.push(bridge_linear(&known, &knot_radii, b));
    }
    let radii = smooth_radii(&radii, RADIUS_SMOOTHING);

    // extend the ends to the extreme points along the local direction
    let mut spheres: Vec<SkeletalSphere> = Vec::with_capacity(spine.len() + 2);
    let extreme = |c: &Point3, t: &Point3, r: f64, sign: f64| -> Option<Point3> {
        let reach = points
            .iter()
            .filter_map(|p| {
                let d = p - c;
                let along = d.dot(t) * sign;
                ((d - t * d.dot(t)).norm() <= 3.0 * r.max(rough_r)).then_some(along)
            })
            .fold(0.0, f64::max);
        (reach > 1e-9).then(|| c + t * (reach * sign))
    };
    let head_dir = direction(&spine, 0);
    let tail_dir = direction(&spine, spine.len() - 1);
    if let Some(p) = extreme(&spine[0], &head_dir, radii[0], -1.0) {
        spheres.push(SkeletalSphere::new(p, radii[0])?);
    }
    for (c, r) in spine.iter().zip(&radii) {
        if spheres.last().is_none_or(|s| (s.center - c).norm() > 1e-12) {
            spheres.push(SkeletalSphere::new(*c, *r)?);
        }
    }
    if let Some(p) = extreme(
        &spine[spine.len() - 1],
        &tail_dir,
        radii[radii.len() - 1],
        1.0,
    ) {
        spheres.push(SkeletalSphere::new(p, radii[radii.len() - 1])?);
    }
    Skeleton::new(spheres)
}

/// Reverses `skeleton` if its tip is closer to `base_hint` than its base.
pub fn orient_from(skeleton: Skeleton, base_hint: &Point3) -> Skeleton {
    if (skeleton.tip() - base_hint).norm() < (skeleton.base() - base_hint).norm() {
        skeleton.reversed()
    } else {
        skeleton
    }
}

fn direction(spine: &[Point3], i: usize) -> Point3 {
    let (a, b) = if spine.len() < 2 {
        return Point3::z();
    } else if i == 0 {
        (spine[0], spine[1])
    } else if i + 1 >= spine.len() {
        (spine[spine.len() - 2], spine[spine.len() - 1])
    } else {
        (spine[i - 1], spine[i + 1])
    };
    let d = b - a;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Point3::z()
    }
}

/// Central-difference directions through the populated neighbours of each bin.
fn local_tangents(centers: &[Option<Point3>], fallback: &Point3) -> Vec<Option<Point3>> {
    let known: Vec<usize> = (0..centers.len())
        .filter(|&b| centers[b].is_some())
        .collect();
    centers
        .iter()
        .enumerate()
        .map(|(b, c)| {
            c.map(|_| {
                let pos = known.iter().position(|&k| k == b).unwrap();
                let lo = known[pos.saturating_sub(1)];
                let hi = known[(pos + 1).min(known.len() - 1)];
                let d = centers[hi].unwrap() - centers[lo].unwrap();
                let n = d.norm();
                if n > 0.0 {
                    let d = d / n;
                    if d.dot(fallback) < 0.0 {
                        -d
                    } else {
                        d
                    }
                } else {
                    *fallback
                }
            })
        })
        .collect()
}

/// Cubic Hermite interpolation in bin index with Catmull-Rom slopes.
fn bridge(known: &[usize], values: &[Point3], b: usize) -> Point3 {
    match known.binary_search(&b) {
        Ok(i) => values[i],
        Err(i) => {
            let (i0, i1) = (i - 1, i);
            let (x0, x1) = (known[i0] as f64, known[i1] as f64);
            let slope = |j: usize| -> Point3 {
                let lo = j.saturating_sub(1);
                let hi = (j + 1).min(known.len() - 1);
                if hi == lo {
                    Point3::zeros()
                } else {
                    (values[hi] - values[lo]) / (known[hi] as f64 - known[lo] as f64)
                }
            };
            let h = x1 - x0;
            let u = (b as f64 - x0) / h;
            let (u2, u3) = (u * u, u * u * u);
            values[i0] * (2.0 * u3 - 3.0 * u2 + 1.0)
                + slope(i0) * (h * (u3 - 2.0 * u2 + u))
                + values[i1] * (-2.0 * u3 + 3.0 * u2)
                + slope(i1) * (h * (u3 - u2))
        }
    }
}

fn bridge_linear(known: &[usize], values: &[f64], b: usize) -> f64 {
    match known.binary_search(&b) {
        Ok(i) => values[i],
        Err(i) => {
            let (x0, x1) = (known[i - 1] as f64, known[i] as f64);
            let u = (b as f64 - x0) / (x1 - x0);
            values[i - 1] * (1.0 - u) + values[i] * u
        }
    }
}

/// Local linear regression of radius against bin index.
fn smooth_radii(radii: &[f64], half: usize) -> Vec<f64> {
    let n = radii.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let m = (hi - lo + 1) as f64;
            if m < 2.0 {
                return radii[i];
            }
            let xs = (lo..=hi).map(|j| j as f64);
            let mx = xs.clone().sum::<f64>() / m;
            let my = radii[lo..=hi].iter().sum::<f64>() / m;
            let sxx: f64 = xs.clone().map(|x| (x - mx) * (x - mx)).sum();
            let sxy: f64 = xs
                .zip(&radii[lo..=hi])
                .map(|(x, y)| (x - mx) * (y - my))
                .sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let r = my + slope * (i as f64 - mx);
            if r > 0.0 {
                r
            } else {
                radii[i]
            }
        })
        .collect()
}
