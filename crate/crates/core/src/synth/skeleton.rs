use crate::error::{Error, Result};
use crate::geometry::{is_finite, polyline_length, Point3};

/// A centerline sample paired with the local branch radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletalSphere {
    pub center: Point3,
    pub radius: f64,
}

impl SkeletalSphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        if !is_finite(&center) || !radius.is_finite() {
            return Err(Error::NonFinite);
        }
        if radius <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }
}

/// Ordered spheres from base to tip.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    spheres: Vec<SkeletalSphere>,
}

impl Skeleton {
    pub fn new(spheres: Vec<SkeletalSphere>) -> Result<Self> {
        if spheres.len() < 2 {
            return Err(Error::DegenerateSkeleton(format!(
                "need at least 2 spheres, got {}",
                spheres.len()
            )));
        }
        for s in &spheres {
            SkeletalSphere::new(s.center, s.radius)?;
        }
        if let Some(i) = spheres
            .windows(2)
            .position(|w| (w[1].center - w[0].center).norm() == 0.0)
        {
            return Err(Error::DegenerateSkeleton(format!(
                "consecutive centers {} and {} coincide",
                i,
                i + 1
            )));
        }
        Ok(Self { spheres })
    }

    pub fn spheres(&self) -> &[SkeletalSphere] {
        &self.spheres
    }

    pub fn centers(&self) -> Vec<Point3> {
        self.spheres.iter().map(|s| s.center).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.spheres.iter().map(|s| s.radius).collect()
    }

    pub fn base(&self) -> Point3 {
        self.spheres[0].center
    }

    pub fn tip(&self) -> Point3 {
        self.spheres[self.spheres.len() - 1].center
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    /// Polyline arc-length through the centers.
    pub fn length(&self) -> f64 {
        polyline_length(&self.centers())
    }

    /// Cumulative polyline arc-length at every center.
    pub fn cumulative_arc(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.spheres.len());
        out.push(0.0);
        for w in self.spheres.windows(2) {
            acc += (w[1].center - w[0].center).norm();
            out.push(acc);
        }
        out
    }

    /// Center, unit direction and linearly interpolated radius at polyline
    /// arc-length `s` (clamped to the skeleton).
    pub fn station(&self, s: f64) -> (Point3, Point3, f64) {
        let cum = self.cumulative_arc();
        let s = s.clamp(0.0, *cum.last().unwrap());
        let i = match cum.partition_point(|&a| a <= s) {
            0 => 0,
            p => (p - 1).min(self.spheres.len() - 2),
        };
        let (a, b) = (&self.spheres[i], &self.spheres[i + 1]);
        let seg = cum[i + 1] - cum[i];
        let u = ((s - cum[i]) / seg).clamp(0.0, 1.0);
        let dir = (b.center - a.center) / seg;
        (
            a.center + (b.center - a.center) * u,
            dir,
            a.radius + (b.radius - a.radius) * u,
        )
    }

    /// Same skeleton traversed tip to base.
    pub fn reversed(&self) -> Skeleton {
        let mut spheres = self.spheres.clone();
        spheres.reverse();
        Skeleton { spheres }
    }

    /// `n` points evenly spaced by polyline arc-length, base and tip included.
    pub fn resample_polyline(&self, n: usize) -> Vec<Point3> {
        let total = self.length();
        (0..n.max(2))
            .map(|i| self.station(total * i as f64 / (n.max(2) - 1) as f64).0)
            .collect()
    }
}
