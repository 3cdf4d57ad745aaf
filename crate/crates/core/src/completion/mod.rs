//! Non-learned completion: skeleton estimate, coarse tube synthesis, and
//! gradient-descent refinement on the joint loss without the adversarial term.

pub mod circle;
pub mod coarse;
pub mod skeleton;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_to_polyline, Point3, PointCloud};
use crate::losses::{self, directed_chamfer, joint_loss, ChamferNorm, JointTerms, LossWeights};
use crate::spatial::KdTree;
use crate::synth::Skeleton;

pub use circle::{
    fit_circle, fit_circle_geometric, fit_circle_in_plane, fit_circle_in_plane_with, Circle2,
    CircleFit,
};
pub use coarse::synthesize_coarse;
pub use skeleton::{estimate_skeleton, orient_from, principal_axis, DEFAULT_SLICE_COUNT};

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Refined points may not leave this multiple of the largest skeleton radius.
pub const BOUND_FACTOR: f64 = 3.0;
const MAX_DENSE_SKELETON: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub output_count: usize,
    pub steps: usize,
    /// First trial step, meters per unit gradient.
    pub step_size: f64,
    pub weights: LossWeights,
    pub variance_activation_step: usize,
    pub slice_count: usize,
    pub repulsion_k: usize,
    /// Repulsion bandwidth in meters; `None` uses [`spacing_bandwidth`] of the coarse cloud.
    pub repulsion_h: Option<f64>,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            output_count: 4096,
            steps: 100,
            step_size: 1.0,
            weights: LossWeights::default(),
            variance_activation_step: 50,
            slice_count: DEFAULT_SLICE_COUNT,
            repulsion_k: losses::DEFAULT_REPULSION_K,
            repulsion_h: None,
            seed: 0,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParams(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.output_count == 0 {
            return Err(Error::InvalidParams("output_count must be positive".into()));
        }
        LossWeights::new(self.weights.lambda_skeleton, self.weights.lambda_variance)?;
        if let Some(h) = self.repulsion_h {
            if !(h > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "repulsion_h must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Coverage of the partial cloud (one-directional Chamfer-l1).
    pub cd: f64,
    pub rep: f64,
    pub var: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub completed: PointCloud,
    pub coarse: PointCloud,
    pub skeleton_est: Skeleton,
    pub loss_trace: Vec<TraceRow>,
    /// Skeleton Chamfer term against a supplied ground-truth skeleton.
    pub skeleton_cd: Option<f64>,
}

struct Objective<'a> {
    partial: &'a [Point3],
    dense_skeleton: Vec<Point3>,
    dense_tree: KdTree,
    k: usize,
    h: f64,
    weights: LossWeights,
    skel_term: f64,
}

struct Evaluation {
    terms: JointTerms,
    total: f64,
    gradient: Vec<Point3>,
}

impl Objective<'_> {
    fn eval(&self, x: &[Point3], variance_on: bool) -> Result<Evaluation> {
        let tree = KdTree::new(x);
        let (cd, _, mut gradient) = directed_chamfer(self.partial, x, &tree, ChamferNorm::L1);
        let rep = losses::repulsion(x, self.k, self.h)?;
        for (g, r) in gradient.iter_mut().zip(&rep.gradient) {
            *g += r;
        }
        let var = if variance_on {
            let v = losses::variance_with_tree(x, &self.dense_skeleton, &self.dense_tree)?;
            for (g, vg) in gradient.iter_mut().zip(&v.gradient) {
                *g += vg * self.weights.lambda_variance;
            }
            v.value
        } else {
            0.0
        };
        let terms = JointTerms {
            cd,
            rep: rep.value,
            adv_g: 0.0,
            skel: self.skel_term,
            var,
        };
        Ok(Evaluation {
            total: joint_loss(&terms, &self.weights, variance_on),
            terms,
            gradient,
        })
    }
}

/// `sqrt(2)` times the mean nearest-neighbor distance. The repulsion kernel
/// `-d exp(-d^2/h^2)` is stationary at `d = h / sqrt(2)`, so neighbors already
/// at the typical spacing are left in place instead of being pushed apart.
pub fn spacing_bandwidth(points: &[Point3]) -> f64 {
    let tree = KdTree::new(points);
    let (sum, n) = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| tree.knn(p, 1, Some(i)).first().map(|nb| nb.dist()))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 || sum == 0.0 {
        return losses::default_bandwidth(points);
    }
    std::f64::consts::SQRT_2 * sum / n as f64
}

/// Skeleton centerline resampled so that spacing stays below a quarter of the
/// smallest radius.
pub fn dense_skeleton(skeleton: &Skeleton) -> Vec<Point3> {
    let rmin = skeleton.radii().into_iter().fold(f64::INFINITY, f64::min);
    let n = (skeleton.length() / (0.25 * rmin)).ceil() as usize + 1;
    skeleton.resample_polyline(n.clamp(2, MAX_DENSE_SKELETON))
}

/// Gradient descent with backtracking on coverage + repulsion
/// (+ lambda_variance * variance from `variance_activation_step` on).
///
/// A step is taken only if it satisfies the Armijo condition and does not
/// push coverage of the partial above its value for the coarse cloud.
pub fn refine(
    coarse: &PointCloud,
    partial: &PointCloud,
    skeleton: &Skeleton,
    cfg: &CompletionConfig,
    gt_skeleton: Option<&[Point3]>,
) -> Result<CompletionResult> {
    cfg.validate()?;
    coarse.require_non_empty()?;
    partial.require_non_empty()?;
    if coarse.len() < partial.len() {
        return Err(Error::InvalidParams(format!(
            "output size {} is smaller than the partial cloud ({})",
            coarse.len(),
            partial.len()
        )));
    }
    let skeleton_cd = match gt_skeleton {
        Some(gt) => {
            let pred = skeleton.resample_polyline(crate::synth::sample::SKELETON_POINTS);
            Some(losses::skeleton_cd_loss(&pred, gt)?.value)
        }
        None => None,
    };
    let dense = dense_skeleton(skeleton);
    let objective = Objective {
        partial: partial.points(),
        dense_tree: KdTree::new(&dense),
        dense_skeleton: dense,
        k: cfg.repulsion_k,
        h: cfg
            .repulsion_h
            .unwrap_or_else(|| spacing_bandwidth(coarse.points())),
        weights: cfg.weights,
        skel_term: skeleton_cd.unwrap_or(0.0),
    };

    let mut x = coarse.points().to_vec();
    let mut trace = Vec::with_capacity(cfg.steps);
    let cover0 = if cfg.steps > 0 {
        objective.eval(&x, false)?.terms.cd
    } else {
        0.0
    };
    let mut alpha = cfg.step_size;
    let mut current: Option<(bool, Evaluation)> = None;
    for step in 0..cfg.steps {
        let var_on = step >= cfg.variance_activation_step;
        let here = match current.take() {
            Some((on, e)) if on == var_on => e,
            _ => objective.eval(&x, var_on)?,
        };
        if !here.total.is_finite() || here.gradient.iter().any(|g| !crate::geometry::is_finite(g)) {
            return Err(Error::Divergence { step });
        }
        let g2: f64 = here.gradient.iter().map(|g| g.norm_squared()).sum();
        let mut a = (2.0 * alpha).min(1e3 * cfg.step_size);
        let mut accepted = None;
        if g2 > 0.0 {
            for _ in 0..MAX_BACKTRACKS {
                let cand: Vec<Point3> = x
                    .iter()
                    .zip(&here.gradient)
                    .map(|(p, g)| p - g * a)
                    .collect();
                let e = objective.eval(&cand, var_on)?;
                if e.total.is_finite()
                    && e.total <= here.total - ARMIJO_C * a * g2
                    && e.terms.cd <= cover0
                {
                    accepted = Some((cand, e));
                    break;
                }
                a *= 0.5;
            }
        }
        let e = match accepted {
            Some((cand, e)) => {
                x = cand;
                alpha = a;
                e
            }
            None => here,
        };
        trace.push(TraceRow {
            step,
            cd: e.terms.cd,
            rep: e.terms.rep,
            var: e.terms.var,
            total: e.total,
        });
        current = Some((var_on, e));
    }

    let centers = skeleton.centers();
    let bound = BOUND_FACTOR * skeleton.radii().into_iter().fold(0.0, f64::max);
    for (index, p) in x.iter().enumerate() {
        let distance = distance_to_polyline(p, &centers);
        if distance > bound {
            return Err(Error::OutOfBounds {
                index,
                distance,
                bound,
            });
        }
    }
    Ok(CompletionResult {
        completed: PointCloud::new(x)?,
        coarse: coarse.clone(),
        skeleton_est: skeleton.clone(),
        loss_trace: trace,
        skeleton_cd,
    })
}

/// Full completion of a single-branch partial cloud: estimate, synthesize, refine.
pub fn complete(
    partial: &PointCloud,
    cfg: &CompletionConfig,
    base_hint: Option<&Point3>,
    gt_skeleton: Option<&[Point3]>,
) -> Result<CompletionResult> {
    cfg.validate()?;
    partial.require_non_empty()?;
    let mut skeleton = estimate_skeleton(partial.points(), cfg.slice_count)?;
    if let Some(hint) = base_hint {
        skeleton = orient_from(skeleton, hint);
    }
    let coarse = synthesize_coarse(&skeleton, cfg.output_count, cfg.seed)?;
    refine(&coarse, partial, &skeleton, cfg, gt_skeleton)
}
