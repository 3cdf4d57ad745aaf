//! Single-viewpoint ray casting: keeps only the first surface hit per ray.

use nalgebra::Matrix3;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{any_perpendicular, Aabb, Point3, PointCloud};
use crate::seed;

use super::branch::BranchModel;
use super::sample::SweptModel;

pub const DEFAULT_PARTIAL_COUNT: usize = 2048;
pub const DEFAULT_GRID_RESOLUTION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewConfig {
    pub viewpoint: Point3,
    pub target_count: usize,
    /// Rays per image side.
    pub grid_resolution: usize,
}

impl ViewConfig {
    pub fn new(viewpoint: Point3) -> Self {
        Self {
            viewpoint,
            target_count: DEFAULT_PARTIAL_COUNT,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub tube: usize,
    pub s: f64,
    pub theta: f64,
    /// Distance from the ray origin.
    pub t: f64,
    pub point: Point3,
}

struct Frustum {
    c0: Point3,
    axis: Point3,
    h: f64,
    r0: f64,
    k: f64,
    s0: f64,
    s1: f64,
}

struct Chunk {
    center: Point3,
    radius: f64,
    range: std::ops::Range<usize>,
}

struct TubeMesh<'a> {
    model: &'a BranchModel,
    frusta: Vec<Frustum>,
    chunks: Vec<Chunk>,
    center: Point3,
    radius: f64,
}

const CHUNK: usize = 16;

impl<'a> TubeMesh<'a> {
    fn new(model: &'a BranchModel) -> Self {
        let stations: Vec<(f64, Point3)> = model.stations().collect();
        let mut frusta = Vec::with_capacity(stations.len());
        for w in stations.windows(2) {
            let ((s0, c0), (s1, c1)) = (w[0], w[1]);
            let h = (c1 - c0).norm();
            if h <= 0.0 {
                continue;
            }
            let (r0, r1) = (model.radius_at(s0), model.radius_at(s1));
            frusta.push(Frustum {
                c0,
                axis: (c1 - c0) / h,
                h,
                r0,
                k: (r1 - r0) / h,
                s0,
                s1,
            });
        }
        let chunks: Vec<Chunk> = (0..frusta.len())
            .step_by(CHUNK)
            .map(|start| {
                let range = start..(start + CHUNK).min(frusta.len());
                bounding_sphere(&frusta[range.clone()], range)
            })
            .collect();
        let bb = model.bounding_box();
        Self {
            model,
            frusta,
            chunks,
            center: bb.center(),
            radius: 0.5 * bb.diagonal(),
        }
    }
}

fn bounding_sphere(frusta: &[Frustum], range: std::ops::Range<usize>) -> Chunk {
    let first = frusta[0].c0;
    let last =
        frusta[frusta.len() - 1].c0 + frusta[frusta.len() - 1].axis * frusta[frusta.len() - 1].h;
    let center = (first + last) * 0.5;
    let radius = frusta
        .iter()
        .map(|f| {
            let end = f.c0 + f.axis * f.h;
            let rmax = f.r0.max(f.r0 + f.k * f.h);
            (f.c0 - center).norm().max((end - center).norm()) + rmax
        })
        .fold(0.0, f64::max);
    Chunk {
        center,
        radius,
        range,
    }
}

fn ray_hits_sphere(o: &Point3, d: &Point3, c: &Point3, r: f64) -> bool {
    let oc = c - o;
    let along = oc.dot(d);
    let perp2 = oc.norm_squared() - along * along;
    perp2 <= r * r && (along >= 0.0 || oc.norm_squared() <= r * r)
}

/// Nearest positive hit of the ray with a truncated cone.
fn intersect_frustum(o: &Point3, d: &Point3, f: &Frustum) -> Option<(f64, f64)> {
    let p = o - f.c0;
    let pz = p.dot(&f.axis);
    let dz = d.dot(&f.axis);
    let q = p - f.axis * pz;
    let e = d - f.axis * dz;
    let r_at = f.r0 + f.k * pz;
    let a = e.norm_squared() - f.k * f.k * dz * dz;
    let b = 2.0 * (q.dot(&e) - r_at * f.k * dz);
    let c = q.norm_squared() - r_at * r_at;
    let mut roots = [f64::NAN; 2];
    if a.abs() < 1e-14 {
        if b.abs() < 1e-300 {
            return None;
        }
        roots[0] = -c / b;
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // numerically stable pair
        let qq = -0.5 * (b + b.signum() * sq);
        roots = [qq / a, if qq != 0.0 { c / qq } else { -b / (2.0 * a) }];
        if roots[0] > roots[1] {
            roots.swap(0, 1);
        }
    }
    roots
        .into_iter()
        .filter(|t| t.is_finite() && *t > 1e-12)
        .find_map(|t| {
            let z = pz + t * dz;
            (z >= 0.0 && z <= f.h && f.r0 + f.k * z > 0.0)
                .then(|| (t, f.s0 + (f.s1 - f.s0) * z / f.h))
        })
}

/// Newton refinement of `S(s, theta) = o + t d` starting from a mesh hit.
fn refine_hit(
    model: &BranchModel,
    o: &Point3,
    d: &Point3,
    mut s: f64,
    mut theta: f64,
    mut t: f64,
) -> Option<(f64, f64, f64, Point3)> {
    let length = model.length();
    let scale = 1.0 + (o.norm() + t).abs();
    let hs = 1e-6 * length.max(1e-3);
    for _ in 0..30 {
        let frame = model.frame_at(s);
        let r = model.radius_at(s);
        let radial = frame.normal * theta.cos() + frame.binormal * theta.sin();
        let surf = frame.position + radial * r;
        let residual = surf - (o + d * t);
        if residual.norm() <= 1e-13 * scale {
            return Some((s, theta, t, surf));
        }
        let (lo, hi) = ((s - hs).max(0.0), (s + hs).min(length));
        let ds =
            (model.surface_unchecked(hi, theta) - model.surface_unchecked(lo, theta)) / (hi - lo);
        let dtheta = (frame.binormal * theta.cos() - frame.normal * theta.sin()) * r;
        let jac = Matrix3::from_columns(&[ds, dtheta, -d]);
        let step = jac.lu().solve(&-residual)?;
        s = (s + step.x).clamp(0.0, length);
        theta += step.y;
        t += step.z;
    }
    let surf = model.surface_unchecked(s, theta);
    ((surf - (o + d * t)).norm() <= 1e-10 * scale).then_some((s, theta, t, surf))
}

fn cast(meshes: &[TubeMesh<'_>], o: &Point3, d: &Point3) -> Option<RayHit> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (ti, mesh) in meshes.iter().enumerate() {
        if !ray_hits_sphere(o, d, &mesh.center, mesh.radius) {
            continue;
        }
        for chunk in &mesh.chunks {
            if !ray_hits_sphere(o, d, &chunk.center, chunk.radius) {
                continue;
            }
            for f in &mesh.frusta[chunk.range.clone()] {
                if let Some((t, s)) = intersect_frustum(o, d, f) {
                    if best.is_none_or(|b| t < b.1) {
                        best = Some((ti, t, s));
                    }
                }
            }
        }
    }
    let (tube, t0, s0) = best?;
    let model = meshes[tube].model;
    let theta0 = model.surface_angle(s0, &(o + d * t0));
    let (s, theta, t, point) = refine_hit(model, o, d, s0, theta0, t0)?;
    Some(RayHit {
        tube,
        s,
        theta: theta.rem_euclid(std::f64::consts::TAU),
        t,
        point,
    })
}

/// First hit of a single ray against every tube of the model.
pub fn cast_ray<M: SweptModel + ?Sized>(
    model: &M,
    origin: &Point3,
    direction: &Point3,
) -> Option<RayHit> {
    let tubes = model.tubes();
    let meshes: Vec<TubeMesh<'_>> = tubes.iter().map(|t| TubeMesh::new(t)).collect();
    cast(&meshes, origin, &direction.normalize())
}

/// Every visible hit on a square pinhole grid aimed at the model's bounding sphere.
pub fn render_hits<M: SweptModel + ?Sized>(model: &M, view: &ViewConfig) -> Result<Vec<RayHit>> {
    let tubes = model.tubes();
    let bb = tubes
        .iter()
        .map(|t| t.bounding_box())
        .reduce(|a, b| a.union(&b))
        .ok_or(Error::EmptyView)?;
    check_view(view, &bb)?;
    let meshes: Vec<TubeMesh<'_>> = tubes.iter().map(|t| TubeMesh::new(t)).collect();

    let o = view.viewpoint;
    let center = bb.center();
    let radius = 0.5 * bb.diagonal();
    let dist = (center - o).norm();
    let half = if dist > radius {
        (radius / dist).asin()
    } else {
        std::f64::consts::FRAC_PI_3
    };
    let forward = (center - o) / dist;
    let right = any_perpendicular(&forward);
    let up = forward.cross(&right);
    let extent = half.tan();
    let n = view.grid_resolution;

    let mut hits = Vec::new();
    for j in 0..n {
        let v = (2.0 * (j as f64 + 0.5) / n as f64 - 1.0) * extent;
        for i in 0..n {
            let u = (2.0 * (i as f64 + 0.5) / n as f64 - 1.0) * extent;
            let d = (forward + right * u + up * v).normalize();
            if let Some(h) = cast(&meshes, &o, &d) {
                hits.push(h);
            }
        }
    }
    Ok(hits)
}

fn check_view(view: &ViewConfig, bb: &Aabb) -> Result<()> {
    if !crate::geometry::is_finite(&view.viewpoint) {
        return Err(Error::NonFinite);
    }
    if bb.contains(&view.viewpoint) {
        return Err(Error::InvalidParams(
            "viewpoint must lie outside the model bounding box".into(),
        ));
    }
    if view.grid_resolution == 0 || view.target_count == 0 {
        return Err(Error::InvalidParams(
            "grid resolution and target count must be positive".into(),
        ));
    }
    Ok(())
}

/// Visible surface points from `view.viewpoint`, resampled to exactly
/// `view.target_count` points (duplicates pad a sparse view). Labels carry
/// the hit tube's id.
pub fn render_partial<M: SweptModel + ?Sized>(
    model: &M,
    view: &ViewConfig,
    seed: u64,
) -> Result<PointCloud> {
    let hits = render_hits(model, view)?;
    if hits.is_empty() {
        return Err(Error::EmptyView);
    }
    let tubes = model.tubes();
    let mut rng = seed::rng(seed);
    let m = view.target_count;
    let chosen: Vec<usize> = if hits.len() >= m {
        let mut idx = rand::seq::index::sample(&mut rng, hits.len(), m).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..hits.len())
            .chain((hits.len()..m).map(|_| rng.random_range(0..hits.len())))
            .collect()
    };
    let points = chosen.iter().map(|&i| hits[i].point).collect();
    let labels = chosen.iter().map(|&i| tubes[hits[i].tube].id).collect();
    PointCloud::with_labels(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::branch::TaperProfile;

    fn cylinder() -> BranchModel {
        BranchModel::new(
            &[Point3::zeros(), Point3::z()],
            TaperProfile::new(0.05, 0.0, 0.0).unwrap(),
            2,
        )
        .unwrap()
    }

    /// First hit with the open cylinder x^2 + y^2 = r^2, 0 <= z <= 1.
    fn analytic_cylinder_hit(o: &Point3, d: &Point3, r: f64) -> Option<f64> {
        let a = d.x * d.x + d.y * d.y;
        let b = 2.0 * (o.x * d.x + o.y * d.y);
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - 4.0 * a * c;
        if a == 0.0 || disc < 0.0 {
            return None;
        }
        let mut ts = [
            (-b - disc.sqrt()) / (2.0 * a),
            (-b + disc.sqrt()) / (2.0 * a),
        ];
        ts.sort_by(f64::total_cmp);
        ts.into_iter()
            .find(|&t| t > 0.0 && (0.0..=1.0).contains(&(o.z + t * d.z)))
    }

    #[test]
    fn matches_analytic_cylinder() {
        let m = cylinder();
        let o = Point3::new(1.0, 0.3, 0.4);
        let mut count = 0;
        for i in 0..200 {
            let target = Point3::new(
                0.0,
                -0.06 + 0.12 * (i as f64 / 199.0),
                0.3 + 0.002 * i as f64,
            );
            let d = (target - o).normalize();
            let exact = analytic_cylinder_hit(&o, &d, 0.05);
            let got = cast_ray(&m, &o, &d);
            match (exact, got) {
                (Some(t), Some(h)) => {
                    count += 1;
                    assert!((h.t - t).abs() < 1e-9, "ray {i}: {} vs {t}", h.t);
                }
                (None, None) => {}
                // grazing rays may go either way
                (a, b) => assert!(
                    !(3..=196).contains(&i) || a.is_none() && b.is_none(),
                    "ray {i}: {a:?} vs {b:?}"
                ),
            }
        }
        assert!(count > 100);
    }

    #[test]
    fn partial_points_are_on_the_surface_and_visible() {
        let m = cylinder();
        let view = ViewConfig {
            viewpoint: Point3::new(0.8, 0.5, 0.6),
            target_count: 500,
            grid_resolution: 96,
        };
        let hits = render_hits(&m, &view).unwrap();
        assert!(!hits.is_empty());
        for h in &hits {
            let expect = m.tube_surface(h.s, h.theta).unwrap();
            assert!((expect - h.point).norm() < 1e-9);
            // nothing closer along the same ray
            let d = (h.point - view.viewpoint).normalize();
            let again = cast_ray(&m, &view.viewpoint, &d).unwrap();
            assert!(again.t >= h.t - 1e-9);
        }
        let cloud = render_partial(&m, &view, 1).unwrap();
        assert_eq!(cloud.len(), 500);
    }

    #[test]
    fn only_the_facing_side_is_seen() {
        let m = cylinder();
        let view = ViewConfig {
            viewpoint: Point3::new(3.0, 0.0, 0.5),
            target_count: 300,
            grid_resolution: 64,
        };
        let cloud = render_partial(&m, &view, 0).unwrap();
        assert!(cloud.points().iter().all(|p| p.x > -1e-9));
    }

    #[test]
    fn viewpoint_inside_bbox_rejected() {
        let view = ViewConfig::new(Point3::new(0.0, 0.0, 0.5));
        assert!(matches!(
            render_partial(&cylinder(), &view, 0),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let m = cylinder();
        let view = ViewConfig {
            viewpoint: Point3::new(0.0, 2.0, 0.5),
            target_count: 200,
            grid_resolution: 48,
        };
        assert_eq!(
            render_partial(&m, &view, 4).unwrap(),
            render_partial(&m, &view, 4).unwrap()
        );
    }
}
