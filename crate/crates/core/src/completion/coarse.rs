use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::seed;
use crate::synth::Skeleton;

use super::circle::plane_basis;

/// `output_count` points, uniform by area, on the piecewise-conical tube
/// through the skeleton spheres (radii interpolated linearly per segment).
pub fn synthesize_coarse(
    skeleton: &Skeleton,
    output_count: usize,
    seed: u64,
) -> Result<PointCloud> {
    if output_count == 0 {
        return Err(Error::InvalidParams(
            "output_count must be at least 1".into(),
        ));
    }
    let spheres = skeleton.spheres();
    let segments: Vec<(Point3, Point3, f64, f64, Point3, Point3, f64)> = spheres
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let axis = b.center - a.center;
            let h = axis.norm();
            let (u, v) = plane_basis(&(axis / h));
            let slant = (h * h + (b.radius - a.radius).powi(2)).sqrt();
            let area = std::f64::consts::PI * (a.radius + b.radius) * slant;
            (a.center, b.center, a.radius, b.radius, u, v, area)
        })
        .collect();
    let total: f64 = segments.iter().map(|s| s.6).sum();
    let mut rng = seed::rng(seed);
    let mut points = Vec::with_capacity(output_count);
    for _ in 0..output_count {
        let mut pick = rng.random::<f64>() * total;
        let mut seg = &segments[segments.len() - 1];
        for s in &segments {
            if pick < s.6 {
                seg = s;
                break;
            }
            pick -= s.6;
        }
        let &(c0, c1, r0, r1, u, v, _) = seg;
        // density along the segment is proportional to r(z) = r0 + (r1 - r0) z
        let target = rng.random::<f64>() * 0.5 * (r0 + r1);
        let dr = r1 - r0;
        let z = if dr.abs() < 1e-15 * r0.max(r1) {
            target / r0
        } else {
            (-r0 + (r0 * r0 + 2.0 * dr * target).sqrt()) / dr
        }
        .clamp(0.0, 1.0);
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let r = r0 + dr * z;
        points.push(c0 + (c1 - c0) * z + (u * theta.cos() + v * theta.sin()) * r);
    }
    PointCloud::new(points)
}
