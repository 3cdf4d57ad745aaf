//! Branch traits (diameter, angle, length, height) and error metrics.

use serde::{Deserialize, Serialize};

use crate::completion::{fit_circle_in_plane, principal_axis};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::synth::{BranchModel, Skeleton};

/// Arc-length from the branch base where diameter is measured.
pub const DEFAULT_DIAMETER_OFFSET: f64 = 0.02;
/// Skeleton arc-length from the base used for the branch direction.
pub const DEFAULT_ANGLE_WINDOW: f64 = 0.05;
const MIN_SLICE_POINTS: usize = 8;
const WINDOW_SAMPLES: usize = 21;
/// Step and count of alternative stations tried when the slice is too sparse.
const FALLBACK_STEP: f64 = 0.005;
const FALLBACK_TRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitRecord {
    pub branch_id: u32,
    pub diameter_mm: f64,
    pub angle_deg: f64,
    pub length_cm: f64,
    pub attachment_height_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QsmConfig {
    pub diameter_offset: f64,
    pub angle_window: f64,
    /// Try nearby stations when the slice at `diameter_offset` is too sparse.
    pub fallback: bool,
}

impl Default for QsmConfig {
    fn default() -> Self {
        Self {
            diameter_offset: DEFAULT_DIAMETER_OFFSET,
            angle_window: DEFAULT_ANGLE_WINDOW,
            fallback: true,
        }
    }
}

/// Diameter in mm from a circle fit to the slice at arc-length `offset`.
///
/// The slice is `2 r` thick, where `r` is the skeleton radius at that station,
/// and only points within `3 r` of the centerline take part.
pub fn measure_diameter(cloud: &[Point3], skeleton: &Skeleton, offset: f64) -> Result<f64> {
    let length = skeleton.length();
    if !(0.0..length).contains(&offset) {
        return Err(Error::OutOfRange { s: offset, length });
    }
    let (c, t, r) = skeleton.station(offset);
    let slice: Vec<Point3> = cloud
        .iter()
        .filter(|p| {
            let d = *p - c;
            let along = d.dot(&t);
            along.abs() <= r && (d - t * along).norm() <= 3.0 * r
        })
        .copied()
        .collect();
    if slice.len() < MIN_SLICE_POINTS {
        return Err(Error::TooSparse(format!(
            "{} points in the slice at {offset} m (need {MIN_SLICE_POINTS})",
            slice.len()
        )));
    }
    let (_, radius) = fit_circle_in_plane(&slice, &c, &t)
        .ok_or_else(|| Error::TooSparse(format!("no circle fits the slice at {offset} m")))?;
    Ok(2.0 * radius * 1000.0)
}

/// Like [`measure_diameter`], stepping outward from `offset` while the slice is too sparse.
pub fn measure_diameter_near(cloud: &[Point3], skeleton: &Skeleton, offset: f64) -> Result<f64> {
    let mut first_err = None;
    for k in 0..=FALLBACK_TRIES {
        for sign in [1.0, -1.0] {
            if k == 0 && sign < 0.0 {
                continue;
            }
            let s = offset + sign * k as f64 * FALLBACK_STEP;
            if s < 0.0 || s >= skeleton.length() {
                continue;
            }
            match measure_diameter(cloud, skeleton, s) {
                Ok(d) => return Ok(d),
                Err(e @ Error::TooSparse(_)) => {
                    first_err.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Err(first_err.unwrap_or(Error::TooSparse("no usable slice".into())))
}

/// Least-squares line direction through `points`, oriented first to last.
pub fn line_direction(points: &[Point3]) -> Option<Point3> {
    let axis = principal_axis(points)?;
    let span = points[points.len() - 1] - points[0];
    Some(if axis.dot(&span) < 0.0 { -axis } else { axis })
}

fn angle_between(dir: &Point3, trunk_axis: &Point3) -> Result<f64> {
    let n = trunk_axis.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidParams(
            "trunk axis must be a non-zero finite vector".into(),
        ));
    }
    Ok(dir
        .dot(&(trunk_axis / n))
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees())
}

/// Degrees in [0, 180] between the base-to-tip direction of the first
/// `window` meters of the skeleton and `trunk_axis`.
pub fn measure_angle(skeleton: &Skeleton, trunk_axis: &Point3, window: f64) -> Result<f64> {
    if !(window > 0.0) || skeleton.length() <= window {
        return Err(Error::DegenerateSkeleton(format!(
            "skeleton length {} does not exceed the angle window {window}",
            skeleton.length()
        )));
    }
    let pts: Vec<Point3> = (0..WINDOW_SAMPLES)
        .map(|i| {
            skeleton
                .station(window * i as f64 / (WINDOW_SAMPLES - 1) as f64)
                .0
        })
        .collect();
    let dir = line_direction(&pts)
        .ok_or_else(|| Error::DegenerateSkeleton("window has no extent".into()))?;
    angle_between(&dir, trunk_axis)
}

/// Skeleton polyline length in cm.
pub fn measure_length(skeleton: &Skeleton) -> f64 {
    skeleton.length() * 100.0
}

/// Traits of a branch from its cloud and skeleton.
pub fn characterize_branch(
    branch_id: u32,
    cloud: &[Point3],
    skeleton: &Skeleton,
    trunk_axis: &Point3,
    attachment_height_m: f64,
    cfg: &QsmConfig,
) -> Result<TraitRecord> {
    let diameter_mm = if cfg.fallback {
        measure_diameter_near(cloud, skeleton, cfg.diameter_offset)?
    } else {
        measure_diameter(cloud, skeleton, cfg.diameter_offset)?
    };
    Ok(TraitRecord {
        branch_id,
        diameter_mm,
        angle_deg: measure_angle(skeleton, trunk_axis, cfg.angle_window)?,
        length_cm: measure_length(skeleton),
        attachment_height_m,
    })
}

/// Traits of the generating model, measured at the same stations as
/// [`characterize_branch`].
pub fn ground_truth_traits(
    model: &BranchModel,
    trunk_axis: &Point3,
    attachment_height_m: f64,
    cfg: &QsmConfig,
) -> Result<TraitRecord> {
    let window = cfg.angle_window.min(model.length());
    let pts: Vec<Point3> = (0..WINDOW_SAMPLES)
        .map(|i| model.centerline(window * i as f64 / (WINDOW_SAMPLES - 1) as f64))
        .collect();
    let dir = line_direction(&pts)
        .ok_or_else(|| Error::DegenerateSkeleton("window has no extent".into()))?;
    Ok(TraitRecord {
        branch_id: model.id,
        diameter_mm: 2.0 * model.radius_at(cfg.diameter_offset.min(model.length())) * 1000.0,
        angle_deg: angle_between(&dir, trunk_axis)?,
        length_cm: model.length() * 100.0,
        attachment_height_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    pub rmse: f64,
    pub n: usize,
}

pub fn error_metrics(estimates: &[f64], ground_truth: &[f64]) -> Result<ErrorReport> {
    if estimates.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(estimates.len(), ground_truth.len()));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidParams(
            "error metrics need at least one pair".into(),
        ));
    }
    if let Some(i) = ground_truth.iter().position(|&g| g == 0.0) {
        return Err(Error::ZeroGroundTruth(i));
    }
    let n = estimates.len() as f64;
    let (mut abs, mut rel, mut sq) = (0.0, 0.0, 0.0);
    for (e, g) in estimates.iter().zip(ground_truth) {
        let d = (e - g).abs();
        abs += d;
        rel += d / g.abs();
        sq += d * d;
    }
    Ok(ErrorReport {
        mae: abs / n,
        mape: 100.0 * rel / n,
        rmse: (sq / n).sqrt(),
        n: estimates.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trait {
    Diameter,
    Angle,
    Length,
}

impl Trait {
    pub fn name(self) -> &'static str {
        match self {
            Trait::Diameter => "diameter",
            Trait::Angle => "angle",
            Trait::Length => "length",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Trait::Diameter => "mm",
            Trait::Angle => "deg",
            Trait::Length => "cm",
        }
    }

    pub fn of(self, r: &TraitRecord) -> f64 {
        match self {
            Trait::Diameter => r.diameter_mm,
            Trait::Angle => r.angle_deg,
            Trait::Length => r.length_cm,
        }
    }
}

/// One row of a model x dataset x trait comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub trait_name: Trait,
    pub report: ErrorReport,
}

/// Reports for each trait, pairing `estimates` and `truth` by branch id.
pub fn trait_reports(
    model: &str,
    dataset: &str,
    estimates: &[TraitRecord],
    truth: &[TraitRecord],
    traits: &[Trait],
) -> Result<Vec<ReportRow>> {
    let mut pairs = Vec::with_capacity(estimates.len());
    for e in estimates {
        let g = truth
            .iter()
            .find(|g| g.branch_id == e.branch_id)
            .ok_or(Error::UnknownBranchId(e.branch_id))?;
        pairs.push((e, g));
    }
    traits
        .iter()
        .map(|&t| {
            let est: Vec<f64> = pairs.iter().map(|(e, _)| t.of(e)).collect();
            let gt: Vec<f64> = pairs.iter().map(|(_, g)| t.of(g)).collect();
            Ok(ReportRow {
                model: model.to_string(),
                dataset: dataset.to_string(),
                trait_name: t,
                report: error_metrics(&est, &gt)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SkeletalSphere;

    fn straight(dir: Point3, len: f64) -> Skeleton {
        let spheres = (0..11)
            .map(|i| SkeletalSphere::new(dir * (len * i as f64 / 10.0), 0.01).unwrap())
            .collect();
        Skeleton::new(spheres).unwrap()
    }

    #[test]
    fn metric_hand_values() {
        let r = error_metrics(&[3.0], &[2.0]).unwrap();
        assert_eq!((r.mae, r.mape, r.rmse), (1.0, 50.0, 1.0));
        let r = error_metrics(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.mae, r.mape, r.rmse), (1.0, 50.0, 1.0));
        let r = error_metrics(&[1.5, 2.0], &[1.5, 2.0]).unwrap();
        assert_eq!((r.mae, r.mape, r.rmse), (0.0, 0.0, 0.0));
        assert!(matches!(
            error_metrics(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            error_metrics(&[1.0], &[0.0]),
            Err(Error::ZeroGroundTruth(0))
        ));
    }

    #[test]
    fn angle_of_straight_branches() {
        let axis = Point3::z();
        let diag = Point3::new(1.0, 0.0, 1.0).normalize();
        assert!((measure_angle(&straight(diag, 0.5), &axis, 0.05).unwrap() - 45.0).abs() < 0.1);
        assert!(
            measure_angle(&straight(axis, 0.5), &axis, 0.05)
                .unwrap()
                .abs()
                < 1e-6
        );
        assert!((measure_angle(&straight(-axis, 0.5), &axis, 0.05).unwrap() - 180.0).abs() < 1e-6);
        assert!(measure_angle(&straight(axis, 0.04), &axis, 0.05).is_err());
    }

    #[test]
    fn length_in_cm() {
        assert!((measure_length(&straight(Point3::x(), 1.0)) - 100.0).abs() < 1e-9);
        let two = Skeleton::new(vec![
            SkeletalSphere::new(Point3::zeros(), 0.1).unwrap(),
            SkeletalSphere::new(Point3::new(0.3, 0.4, 0.0), 0.1).unwrap(),
        ])
        .unwrap();
        assert!((measure_length(&two) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn sparse_slice_is_reported() {
        let sk = straight(Point3::z(), 0.5);
        let cloud = vec![Point3::new(0.01, 0.0, 0.02); 3];
        assert!(matches!(
            measure_diameter(&cloud, &sk, 0.02),
            Err(Error::TooSparse(_))
        ));
    }
}
