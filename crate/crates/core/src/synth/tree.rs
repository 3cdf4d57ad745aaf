//! Trees: a trunk plus lateral branches attached on its surface.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::seed;

use super::branch::{BranchModel, TaperProfile, DEFAULT_MIN_RADIUS, DEFAULT_TAPER_ANGLE_DEG};

/// Maximum distance between a lateral's base and the trunk surface.
pub const ATTACHMENT_TOLERANCE: f64 = 1e-6;

/// Where a lateral leaves the trunk: arc-length fraction and angle around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub t: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct LateralBranch {
    pub model: BranchModel,
    pub attachment: Attachment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    FromSkeleton,
    TreeUnit { seed: u64, params: TreeUnitParams },
}

#[derive(Debug, Clone)]
pub struct TreeModel {
    pub trunk: BranchModel,
    pub branches: Vec<LateralBranch>,
    pub provenance: Provenance,
}

impl TreeModel {
    pub fn new(
        trunk: BranchModel,
        branches: Vec<LateralBranch>,
        provenance: Provenance,
    ) -> Result<Self> {
        for b in &branches {
            let a = b.attachment;
            if !(0.0..=1.0).contains(&a.t) {
                return Err(Error::InvalidParams(format!(
                    "branch {} attachment t = {} outside [0, 1]",
                    b.model.id, a.t
                )));
            }
            let on_trunk = trunk.surface_unchecked(a.t * trunk.length(), a.theta);
            let gap = (on_trunk - b.model.base()).norm();
            if gap > ATTACHMENT_TOLERANCE {
                return Err(Error::InvalidParams(format!(
                    "branch {} base is {gap} m off the trunk surface",
                    b.model.id
                )));
            }
        }
        Ok(Self {
            trunk,
            branches,
            provenance,
        })
    }

    pub fn branch(&self, id: u32) -> Option<&LateralBranch> {
        self.branches.iter().find(|b| b.model.id == id)
    }

    /// Trunk station (point and unit tangent) where a lateral attaches.
    pub fn attachment_frame(&self, branch: &LateralBranch) -> (Point3, Point3) {
        let s = branch.attachment.t * self.trunk.length();
        self.trunk.spline().point_and_tangent(s)
    }
}

/// Closest centerline arc-length on `trunk` to `p`.
pub fn project_onto_centerline(trunk: &BranchModel, p: &Point3) -> f64 {
    let stations: Vec<(f64, Point3)> = trunk.stations().collect();
    let best = stations
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 .1 - p)
                .norm_squared()
                .total_cmp(&(b.1 .1 - p).norm_squared())
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = stations[best.saturating_sub(1)].0;
    let hi = stations[(best + 1).min(stations.len() - 1)].0;
    // golden-section search on the squared distance
    let dist = |s: f64| (trunk.centerline(s) - p).norm_squared();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dist(c), dist(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dist(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dist(d);
        }
    }
    0.5 * (a + b)
}

/// Builds a lateral whose first center is snapped onto the trunk surface.
pub fn attach_lateral(
    trunk: &BranchModel,
    centers: &[Point3],
    taper: TaperProfile,
    id: u32,
) -> Result<LateralBranch> {
    if centers.len() < 2 {
        return Err(Error::DegenerateSkeleton(format!(
            "lateral {id} needs at least 2 centers"
        )));
    }
    let s = project_onto_centerline(trunk, &centers[0]);
    let theta = trunk.surface_angle(s, &centers[0]);
    let base = trunk.surface_unchecked(s, theta);
    let mut snapped = Vec::with_capacity(centers.len());
    snapped.push(base);
    snapped.extend(centers[1..].iter().copied().filter(|c| *c != base));
    let model = BranchModel::new(&snapped, taper, id)?;
    Ok(LateralBranch {
        model,
        attachment: Attachment {
            t: (s / trunk.length()).clamp(0.0, 1.0),
            theta,
        },
    })
}

/// Parameters of the recursive "tree unit" generator: every unit extends the
/// central leader and spawns lateral branches around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeUnitParams {
    pub depth: usize,
    pub branches_per_unit: usize,
    /// Lateral base radius relative to the leader radius at the attachment.
    pub radius_decay: f64,
    /// Degrees between the lateral's initial direction and the leader.
    pub branch_angle_range: (f64, f64),
    /// Meters of leader added per unit.
    pub unit_length_range: (f64, f64),
    pub lateral_length_range: (f64, f64),
    pub trunk_base_radius: f64,
    /// Downward bending of laterals, degrees per meter of length.
    pub droop_deg_per_m: f64,
}

impl Default for TreeUnitParams {
    fn default() -> Self {
        Self {
            depth: 4,
            branches_per_unit: 3,
            radius_decay: 0.35,
            branch_angle_range: (35.0, 75.0),
            unit_length_range: (0.35, 0.55),
            lateral_length_range: (0.3, 0.6),
            trunk_base_radius: 0.04,
            droop_deg_per_m: 30.0,
        }
    }
}

impl TreeUnitParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let range_ok =
            |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if !(self.radius_decay > 0.0 && self.radius_decay <= 1.0) {
            return bad(format!("radius_decay {} outside (0, 1]", self.radius_decay));
        }
        let (a_lo, a_hi) = self.branch_angle_range;
        if !(a_lo > 0.0 && a_hi < 90.0 && a_lo <= a_hi) {
            return bad(format!(
                "branch angle range ({a_lo}, {a_hi}) not inside (0, 90) deg"
            ));
        }
        if !range_ok(self.unit_length_range) || !range_ok(self.lateral_length_range) {
            return bad("length ranges must be positive and ordered".into());
        }
        if !(self.trunk_base_radius > 0.0) || !self.droop_deg_per_m.is_finite() {
            return bad("trunk radius must be positive and droop finite".into());
        }
        Ok(())
    }
}

const LEADER_KNOTS_PER_UNIT: usize = 4;
const LATERAL_KNOTS: usize = 9;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

fn uniform(rng: &mut seed::Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Rotates `d` towards `target` by `angle` radians (no-op when parallel).
fn bend_towards(d: &Point3, target: &Point3, angle: f64) -> Point3 {
    let axis = d.cross(target);
    let n = axis.norm();
    if n < 1e-12 {
        return *d;
    }
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(axis / n), angle);
    rot * d
}

/// Generates a simplified tree-unit tree. Deterministic for a fixed seed.
pub fn generate_tree_unit(params: &TreeUnitParams, seed: u64) -> Result<TreeModel> {
    params.validate()?;
    let mut rng = seed::rng(seed);

    // leader
    let mut centers = vec![Point3::zeros()];
    let mut dir = Point3::z();
    let mut unit_ends = Vec::with_capacity(params.depth);
    for _ in 0..params.depth {
        let len = uniform(&mut rng, params.unit_length_range);
        let step = len / LEADER_KNOTS_PER_UNIT as f64;
        for _ in 0..LEADER_KNOTS_PER_UNIT {
            let wobble = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                0.0,
            );
            dir = bend_towards(&dir, &(dir + wobble), 2f64.to_radians());
            // keep the leader upright
            dir = bend_towards(&dir, &Point3::z(), 0.5 * dir.angle(&Point3::z()));
            let next = centers.last().unwrap() + dir * step;
            centers.push(next);
        }
        unit_ends.push(centers.len() - 1);
    }
    let trunk_taper = TaperProfile::new(
        params.trunk_base_radius,
        DEFAULT_TAPER_ANGLE_DEG,
        DEFAULT_MIN_RADIUS.min(params.trunk_base_radius),
    )?;
    let trunk = BranchModel::new(&centers, trunk_taper, 0)?;
    let knot_count = centers.len() - 1;
    let knot_arc = |k: usize| trunk.spline().arc_at(k as f64 / knot_count as f64);

    let mut branches = Vec::with_capacity(params.depth * params.branches_per_unit);
    let mut azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let mut next_id = 1u32;
    let mut unit_start = 0usize;
    for &unit_end in &unit_ends {
        let (s0, s1) = (knot_arc(unit_start), knot_arc(unit_end));
        for j in 0..params.branches_per_unit {
            let frac =
                (j as f64 + 0.5 + rng.random_range(-0.3..0.3)) / params.branches_per_unit as f64;
            let s_a = s0 + frac * (s1 - s0);
            azimuth += GOLDEN_ANGLE + rng.random_range(-0.2..0.2);
            let theta = azimuth.rem_euclid(std::f64::consts::TAU);
            let base = trunk.surface_unchecked(s_a, theta);
            let frame = trunk.frame_at(s_a);
            let outward = frame.normal * theta.cos() + frame.binormal * theta.sin();
            let alpha = uniform(&mut rng, params.branch_angle_range).to_radians();
            let mut d = frame.tangent * alpha.cos() + outward * alpha.sin();
            let length = uniform(&mut rng, params.lateral_length_range);
            let step = length / (LATERAL_KNOTS - 1) as f64;
            let droop = params.droop_deg_per_m.to_radians() * step;
            let mut lateral = Vec::with_capacity(LATERAL_KNOTS);
            lateral.push(base);
            for _ in 1..LATERAL_KNOTS {
                let next = lateral.last().unwrap() + d * step;
                lateral.push(next);
                d = bend_towards(&d, &-Point3::z(), droop);
            }
            let parent_r = trunk.radius_at(s_a);
            let base_r = parent_r * params.radius_decay * rng.random_range(0.7..1.0);
            let taper = TaperProfile::new(
                base_r,
                DEFAULT_TAPER_ANGLE_DEG,
                DEFAULT_MIN_RADIUS.min(base_r),
            )?;
            branches.push(LateralBranch {
                model: BranchModel::new(&lateral, taper, next_id)?,
                attachment: Attachment {
                    t: s_a / trunk.length(),
                    theta,
                },
            });
            next_id += 1;
        }
        unit_start = unit_end;
    }
    TreeModel::new(
        trunk,
        branches,
        Provenance::TreeUnit {
            seed,
            params: params.clone(),
        },
    )
}
