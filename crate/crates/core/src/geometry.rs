//! Basic point and point-cloud types shared by every module.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// A 3D position in meters.
pub type Point3 = Vector3<f64>;

pub fn is_finite(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Unordered multiset of finite points with an optional per-point label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if !points.iter().all(is_finite) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            points,
            labels: None,
        })
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::InvalidParams(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        cloud.labels = Some(labels);
        Ok(cloud)
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            labels: None,
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Errors with `EmptyCloud` when there is nothing to consume.
    pub fn require_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    /// Keeps the points (and labels) for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&Point3) -> bool) -> PointCloud {
        let mask: Vec<bool> = self.points.iter().map(&mut keep).collect();
        let points = self
            .points
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| *p)
            .collect();
        let labels = self.labels.as_ref().map(|l| {
            l.iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .collect()
        });
        PointCloud { points, labels }
    }

    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Point3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let mut bb = Aabb {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Point3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }
}

/// Any unit vector perpendicular to `v` (which must be non-zero).
pub fn any_perpendicular(v: &Point3) -> Point3 {
    let a = v.abs();
    let helper = if a.x <= a.y && a.x <= a.z {
        Point3::x()
    } else if a.y <= a.z {
        Point3::y()
    } else {
        Point3::z()
    };
    v.cross(&helper).normalize()
}

/// Arc-length of a polyline.
pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Closest point on segment `[a, b]` to `p`, with its parameter in [0, 1].
pub fn closest_on_segment(p: &Point3, a: &Point3, b: &Point3) -> (Point3, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

/// Distance from `p` to the polyline through `points`.
pub fn distance_to_polyline(p: &Point3, points: &[Point3]) -> f64 {
    match points.len() {
        0 => f64::INFINITY,
        1 => (p - points[0]).norm(),
        _ => points
            .windows(2)
            .map(|w| (p - closest_on_segment(p, &w[0], &w[1]).0).norm())
            .fold(f64::INFINITY, f64::min),
    }
}
