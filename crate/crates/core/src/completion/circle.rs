//! Least-squares circle fits: algebraic (Kasa) and geometric.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{any_perpendicular, Point3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle2 {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// Least-squares fit of `x^2 + y^2 + D x + E y + F = 0`.
///
/// Returns `None` for fewer than three points or a (near) collinear set.
pub fn fit_circle(points: &[(f64, f64)]) -> Option<Circle2> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let mut scale = 0.0f64;
    for (x, y) in points {
        let (x, y) = (x - mx, y - my);
        scale = scale.max(x.abs()).max(y.abs());
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb -= row * (x * x + y * y);
    }
    if scale == 0.0 {
        return None;
    }
    // reject rank-deficient systems relative to the spread of the data
    let eig = ata.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) {
        return None;
    }
    let sol = ata.lu().solve(&atb)?;
    let (cx, cy) = (-0.5 * sol.x, -0.5 * sol.y);
    let r2 = cx * cx + cy * cy - sol.z;
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some(Circle2 {
        cx: cx + mx,
        cy: cy + my,
        r: r2.sqrt(),
    })
}

const GEOMETRIC_ITERATIONS: usize = 50;

/// Fit minimizing the sum of squared point-to-circle distances, by
/// Levenberg-Marquardt from the algebraic solution. Less biased than the
/// algebraic fit on short noisy arcs.
pub fn fit_circle_geometric(points: &[(f64, f64)]) -> Option<Circle2> {
    let init = fit_circle(points)?;
    let mut p = Vector3::new(init.cx, init.cy, init.r);
    let cost = |p: &Vector3<f64>| -> f64 {
        points
            .iter()
            .map(|(x, y)| ((x - p.x).hypot(y - p.y) - p.z).powi(2))
            .sum()
    };
    let mut current = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..GEOMETRIC_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (x, y) in points {
            let (dx, dy) = (x - p.x, y - p.y);
            let d = dx.hypot(dy);
            if d == 0.0 {
                continue;
            }
            let j = Vector3::new(-dx / d, -dy / d, -1.0);
            jtj += j * j.transpose();
            jtr += j * (d - p.z);
        }
        let mut improved = false;
        for _ in 0..20 {
            let damped = jtj + Matrix3::from_diagonal(&jtj.diagonal()) * mu;
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = cost(&trial);
            if trial.z > 0.0 && c.is_finite() && c < current {
                let small = step.norm() <= 1e-12 * (1.0 + p.norm());
                p = trial;
                current = c;
                mu = (mu * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some(Circle2 {
        cx: p.x,
        cy: p.y,
        r: p.z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CircleFit {
    #[default]
    Algebraic,
    Geometric,
}

/// Orthonormal basis `(u, v)` of the plane perpendicular to `normal`.
pub fn plane_basis(normal: &Point3) -> (Point3, Point3) {
    let u = any_perpendicular(normal);
    let v = normal.cross(&u).normalize();
    (u, v)
}

/// Projects `points` onto the plane through `origin` with unit `normal`
/// and fits a circle there. Returns the 3D center and radius.
pub fn fit_circle_in_plane(
    points: &[Point3],
    origin: &Point3,
    normal: &Point3,
) -> Option<(Point3, f64)> {
    fit_circle_in_plane_with(points, origin, normal, CircleFit::Algebraic)
}

pub fn fit_circle_in_plane_with(
    points: &[Point3],
    origin: &Point3,
    normal: &Point3,
    method: CircleFit,
) -> Option<(Point3, f64)> {
    let (u, v) = plane_basis(normal);
    let flat: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let d = p - origin;
            (d.dot(&u), d.dot(&v))
        })
        .collect();
    let c = match method {
        CircleFit::Algebraic => fit_circle(&flat)?,
        CircleFit::Geometric => fit_circle_geometric(&flat)?,
    };
    Some((origin + u * c.cx + v * c.cy, c.r))
}
