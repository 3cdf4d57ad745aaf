//! Swept tube around a spline centerline with a linear taper.

use crate::error::{Error, Result};
use crate::geometry::{any_perpendicular, Aabb, Point3};

use super::skeleton::SkeletalSphere;
use super::spline::CatmullRom;

pub const DEFAULT_TAPER_ANGLE_DEG: f64 = -0.5;
pub const DEFAULT_MIN_RADIUS: f64 = 0.0005;

/// Radius law `r(s) = max(min_radius, base_radius + s * tan(taper_angle))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperProfile {
    pub base_radius: f64,
    pub taper_angle_deg: f64,
    pub min_radius: f64,
}

impl TaperProfile {
    pub fn new(base_radius: f64, taper_angle_deg: f64, min_radius: f64) -> Result<Self> {
        if !(base_radius.is_finite() && taper_angle_deg.is_finite() && min_radius.is_finite()) {
            return Err(Error::NonFinite);
        }
        if base_radius <= 0.0 || min_radius < 0.0 || min_radius > base_radius {
            return Err(Error::InvalidParams(format!(
                "taper needs 0 <= min_radius ({min_radius}) <= base_radius ({base_radius}), base_radius > 0"
            )));
        }
        if taper_angle_deg.abs() >= 90.0 {
            return Err(Error::InvalidParams(format!(
                "taper angle {taper_angle_deg} deg outside (-90, 90)"
            )));
        }
        Ok(Self {
            base_radius,
            taper_angle_deg,
            min_radius,
        })
    }

    /// Default angle and floor; the floor drops to `base_radius` for very thin bases.
    pub fn with_base(base_radius: f64) -> Result<Self> {
        Self::new(
            base_radius,
            DEFAULT_TAPER_ANGLE_DEG,
            DEFAULT_MIN_RADIUS.min(base_radius),
        )
    }

    fn slope(&self) -> f64 {
        self.taper_angle_deg.to_radians().tan()
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        (self.base_radius + s * self.slope()).max(self.min_radius)
    }

    /// dr/ds (zero where the floor is active).
    pub fn slope_at(&self, s: f64) -> f64 {
        if self.base_radius + s * self.slope() > self.min_radius {
            self.slope()
        } else {
            0.0
        }
    }

    /// Largest radius over `[0, length]`; the law is monotone.
    pub fn max_radius(&self, length: f64) -> f64 {
        self.radius_at(0.0).max(self.radius_at(length))
    }

    /// Lateral (cone/cylinder) surface area over `[0, length]`.
    pub fn lateral_area(&self, length: f64) -> f64 {
        let k = self.slope();
        let stretch = (1.0 + k * k).sqrt();
        let cone = |a: f64, b: f64| {
            std::f64::consts::TAU
                * stretch
                * (self.base_radius * (b - a) + 0.5 * k * (b * b - a * a))
        };
        let cyl = |a: f64, b: f64| std::f64::consts::TAU * self.min_radius * (b - a);
        // arc-length where the linear law meets the floor
        let cross = if k != 0.0 {
            (self.min_radius - self.base_radius) / k
        } else {
            f64::NAN
        };
        if cross.is_finite() && cross > 0.0 && cross < length {
            if k < 0.0 {
                cone(0.0, cross) + cyl(cross, length)
            } else {
                cyl(0.0, cross) + cone(cross, length)
            }
        } else if self.base_radius + 0.5 * length * k > self.min_radius {
            cone(0.0, length)
        } else {
            cyl(0.0, length)
        }
    }
}

/// A single branch: spline centerline, taper law, and a rotation-minimizing
/// frame tabulated along the arc-length.
#[derive(Debug, Clone)]
pub struct BranchModel {
    pub id: u32,
    spline: CatmullRom,
    taper: TaperProfile,
    frame_nodes: Vec<FrameNode>,
}

#[derive(Debug, Clone, Copy)]
struct FrameNode {
    s: f64,
    position: Point3,
    tangent: Point3,
    normal: Point3,
}

/// Orthonormal frame at a centerline station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub position: Point3,
    pub tangent: Point3,
    pub normal: Point3,
    pub binormal: Point3,
}

/// One double-reflection step carrying `normal` from `(x0, t0)` to `(x1, t1)`.
fn transport(x0: &Point3, t0: &Point3, n0: &Point3, x1: &Point3, t1: &Point3) -> Point3 {
    let v1 = x1 - x0;
    let c1 = v1.norm_squared();
    let (n_l, t_l) = if c1 > 0.0 {
        (
            n0 - v1 * (2.0 / c1 * v1.dot(n0)),
            t0 - v1 * (2.0 / c1 * v1.dot(t0)),
        )
    } else {
        (*n0, *t0)
    };
    let v2 = t1 - t_l;
    let c2 = v2.norm_squared();
    let n = if c2 > 0.0 {
        n_l - v2 * (2.0 / c2 * v2.dot(&n_l))
    } else {
        n_l
    };
    // re-orthogonalize against rounding drift
    let n = n - t1 * t1.dot(&n);
    let norm = n.norm();
    if norm > 1e-12 {
        n / norm
    } else {
        any_perpendicular(t1)
    }
}

impl BranchModel {
    pub fn new(centers: &[Point3], taper: TaperProfile, id: u32) -> Result<Self> {
        let spline = CatmullRom::new(centers)?;
        let length = spline.length();
        if taper.radius_at(length) <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "taper reaches a non-positive radius within the branch length {length}"
            )));
        }
        let mut frame_nodes: Vec<FrameNode> = Vec::with_capacity(spline.arc_nodes().len());
        for &s in spline.arc_nodes() {
            let (position, tangent) = spline.point_and_tangent(s);
            let normal = match frame_nodes.last() {
                None => any_perpendicular(&tangent),
                Some(prev) => transport(
                    &prev.position,
                    &prev.tangent,
                    &prev.normal,
                    &position,
                    &tangent,
                ),
            };
            frame_nodes.push(FrameNode {
                s,
                position,
                tangent,
                normal,
            });
        }
        Ok(Self {
            id,
            spline,
            taper,
            frame_nodes,
        })
    }

    pub fn spline(&self) -> &CatmullRom {
        &self.spline
    }

    pub fn taper(&self) -> &TaperProfile {
        &self.taper
    }

    pub fn length(&self) -> f64 {
        self.spline.length()
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        self.taper.radius_at(s)
    }

    pub fn centerline(&self, s: f64) -> Point3 {
        self.spline.point_at_arc(s)
    }

    pub fn base(&self) -> Point3 {
        self.spline.knots()[0]
    }

    /// Rotation-minimizing frame at arc-length `s` (clamped).
    pub fn frame_at(&self, s: f64) -> Frame {
        let s = s.clamp(0.0, self.length());
        let j = match self.frame_nodes.partition_point(|n| n.s <= s) {
            0 => 0,
            p => p - 1,
        };
        let node = &self.frame_nodes[j];
        let (position, tangent) = self.spline.point_and_tangent(s);
        let normal = transport(
            &node.position,
            &node.tangent,
            &node.normal,
            &position,
            &tangent,
        );
        Frame {
            position,
            tangent,
            normal,
            binormal: tangent.cross(&normal),
        }
    }

    /// Surface point `centerline(s) + r(s) (cos(theta) n(s) + sin(theta) b(s))`.
    pub fn tube_surface(&self, s: f64, theta: f64) -> Result<Point3> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(Error::OutOfRange { s, length });
        }
        Ok(self.surface_unchecked(s, theta))
    }

    pub(crate) fn surface_unchecked(&self, s: f64, theta: f64) -> Point3 {
        let f = self.frame_at(s);
        f.position + (f.normal * theta.cos() + f.binormal * theta.sin()) * self.taper.radius_at(s)
    }

    /// Angle of `p` around the centerline station at `s`, measured from the frame normal.
    pub(crate) fn surface_angle(&self, s: f64, p: &Point3) -> f64 {
        let f = self.frame_at(s);
        let d = p - f.position;
        d.dot(&f.binormal).atan2(d.dot(&f.normal))
    }

    /// Bounding box of the swept tube.
    pub fn bounding_box(&self) -> Aabb {
        let mut bb: Option<Aabb> = None;
        for n in &self.frame_nodes {
            let r = self.taper.radius_at(n.s);
            let b = Aabb {
                min: n.position,
                max: n.position,
            }
            .expanded(r);
            bb = Some(match bb {
                None => b,
                Some(acc) => acc.union(&b),
            });
        }
        bb.unwrap()
    }

    /// Arc-length stations of the tabulated frames (base to tip).
    pub(crate) fn stations(&self) -> impl Iterator<Item = (f64, Point3)> + '_ {
        self.frame_nodes.iter().map(|n| (n.s, n.position))
    }

    /// Lateral surface area.
    pub fn lateral_area(&self) -> f64 {
        self.taper.lateral_area(self.length())
    }
}

/// Spline through the sphere centers with the default taper seeded by the
/// first sphere's radius.
pub fn fit_spline(spheres: &[SkeletalSphere]) -> Result<BranchModel> {
    if spheres.is_empty() {
        return Err(Error::DegenerateSkeleton("no spheres".into()));
    }
    let centers: Vec<Point3> = spheres.iter().map(|s| s.center).collect();
    let taper = TaperProfile::with_base(spheres[0].radius)?;
    BranchModel::new(&centers, taper, 0)
}
