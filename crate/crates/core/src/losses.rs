//! Point-set losses with analytic gradients with respect to the predicted points.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};
use crate::seed;
use crate::spatial::KdTree;
use crate::synth::SkeletalSphere;

pub const DEFAULT_REPULSION_K: usize = 5;
/// Repulsion bandwidth as a fraction of the bounding-box diagonal.
pub const DEFAULT_BANDWIDTH_FRACTION: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// One entry per predicted point.
    pub gradient: Vec<Point3>,
}

impl LossValue {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![Point3::zeros(); n],
        }
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient
            .iter()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChamferNorm {
    /// Mean of unsquared nearest-neighbour distances (CD-l1).
    #[default]
    L1,
    L2Squared,
}

impl ChamferNorm {
    /// Per-pair penalty and its derivative with respect to the displacement `v`.
    #[inline]
    fn eval(self, v: &Point3) -> (f64, Point3) {
        match self {
            ChamferNorm::L1 => {
                let d = v.norm();
                if d > 0.0 {
                    (d, v / d)
                } else {
                    (0.0, Point3::zeros())
                }
            }
            ChamferNorm::L2Squared => (v.norm_squared(), v * 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_skeleton: f64,
    pub lambda_variance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_skeleton: 0.01,
            lambda_variance: 10.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_skeleton: f64, lambda_variance: f64) -> Result<Self> {
        if !(lambda_skeleton >= 0.0 && lambda_variance >= 0.0)
            || !lambda_skeleton.is_finite()
            || !lambda_variance.is_finite()
        {
            return Err(Error::InvalidParams(format!(
                "loss weights must be finite and non-negative, got ({lambda_skeleton}, {lambda_variance})"
            )));
        }
        Ok(Self {
            lambda_skeleton,
            lambda_variance,
        })
    }
}

fn require(points: &[Point3]) -> Result<()> {
    if points.is_empty() {
        Err(Error::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Mean over `from` of the penalty to the nearest point of `to`.
///
/// Returns the value plus gradients with respect to `from` and `to`.
pub(crate) fn directed_chamfer(
    from: &[Point3],
    to: &[Point3],
    to_tree: &KdTree,
    norm: ChamferNorm,
) -> (f64, Vec<Point3>, Vec<Point3>) {
    let scale = 1.0 / from.len() as f64;
    let mut grad_from = vec![Point3::zeros(); from.len()];
    let mut grad_to = vec![Point3::zeros(); to.len()];
    let mut sum = 0.0;
    for (i, p) in from.iter().enumerate() {
        let nb = to_tree.nearest(p).expect("non-empty target");
        let (v, g) = norm.eval(&(p - to[nb.index]));
        sum += v;
        grad_from[i] = g * scale;
        grad_to[nb.index] -= g * scale;
    }
    (sum * scale, grad_from, grad_to)
}

/// Symmetric Chamfer distance; the gradient is with respect to `pred`.
pub fn chamfer(pred: &[Point3], gt: &[Point3], norm: ChamferNorm) -> Result<LossValue> {
    require(pred)?;
    require(gt)?;
    let pred_tree = KdTree::new(pred);
    let gt_tree = KdTree::new(gt);
    let (a, _, grad_a) = directed_chamfer(gt, pred, &pred_tree, norm);
    let (b, grad_b, _) = directed_chamfer(pred, gt, &gt_tree, norm);
    Ok(LossValue {
        value: a + b,
        gradient: grad_a.iter().zip(&grad_b).map(|(x, y)| x + y).collect(),
    })
}

/// Mean CD-l1 scaled by 1000, the usual reporting unit.
pub fn cd_l1_x1000(a: &[Point3], b: &[Point3]) -> Result<f64> {
    Ok(chamfer(a, b, ChamferNorm::L1)?.value * 1000.0)
}

/// Coverage of `target` by `points`: mean distance from every target point to
/// its nearest point in `points`. Gradient is with respect to `points`.
pub fn coverage(points: &[Point3], target: &[Point3]) -> Result<LossValue> {
    require(points)?;
    require(target)?;
    let tree = KdTree::new(points);
    let (value, _, gradient) = directed_chamfer(target, points, &tree, ChamferNorm::L1);
    Ok(LossValue { value, gradient })
}

/// Repulsion bandwidth used when none is given.
pub fn default_bandwidth(points: &[Point3]) -> f64 {
    Aabb::from_points(points).map_or(0.0, |b| DEFAULT_BANDWIDTH_FRACTION * b.diagonal())
}

/// `(1/(n k)) sum_i sum_{j in kNN(i)} -d_ij exp(-d_ij^2 / h^2)`.
pub fn repulsion(pred: &[Point3], k: usize, h: f64) -> Result<LossValue> {
    if k < 1 || pred.len() <= k {
        return Err(Error::TooFewPoints {
            needed: k.max(1),
            got: pred.len(),
        });
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParams(format!(
            "repulsion bandwidth must be positive, got {h}"
        )));
    }
    let n = pred.len();
    let tree = KdTree::new(pred);
    let scale = 1.0 / (n * k) as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut out = LossValue::zero(n);
    for (i, x) in pred.iter().enumerate() {
        for nb in tree.knn(x, k, Some(i)) {
            let d = nb.dist();
            let w = (-d * d * inv_h2).exp();
            out.value -= d * w;
            if d > 0.0 {
                // d/dd of -d exp(-d^2/h^2)
                let fd = -w * (1.0 - 2.0 * d * d * inv_h2);
                let g = (x - pred[nb.index]) * (fd / d * scale);
                out.gradient[i] += g;
                out.gradient[nb.index] -= g;
            }
        }
    }
    out.value *= scale;
    Ok(out)
}

/// Population variance of point-to-skeleton distances, summed over the
/// clouds. The gradient is the concatenation of every cloud's gradient, in order.
pub fn variance_loss(clouds: &[&[Point3]], skeleton: &[Point3]) -> Result<LossValue> {
    if skeleton.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let tree = KdTree::new(skeleton);
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(clouds.iter().map(|c| c.len()).sum());
    for cloud in clouds {
        let v = variance_with_tree(cloud, skeleton, &tree)?;
        value += v.value;
        gradient.extend(v.gradient);
    }
    Ok(LossValue { value, gradient })
}

pub(crate) fn variance_with_tree(
    cloud: &[Point3],
    skeleton: &[Point3],
    tree: &KdTree,
) -> Result<LossValue> {
    require(cloud)?;
    let n = cloud.len() as f64;
    let nearest: Vec<(f64, Point3)> = cloud
        .iter()
        .map(|p| {
            let nb = tree.nearest(p).expect("non-empty skeleton");
            let v = p - skeleton[nb.index];
            let d = nb.dist();
            (d, if d > 0.0 { v / d } else { Point3::zeros() })
        })
        .collect();
    let mean = nearest.iter().map(|(d, _)| d).sum::<f64>() / n;
    let value = nearest
        .iter()
        .map(|(d, _)| (d - mean) * (d - mean))
        .sum::<f64>()
        / n;
    let gradient = nearest
        .iter()
        .map(|(d, u)| u * (2.0 * (d - mean) / n))
        .collect();
    Ok(LossValue { value, gradient })
}

/// Value and gradients of the sphere-surface sampling loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereLoss {
    pub value: f64,
    pub center_gradient: Vec<Point3>,
    pub radius_gradient: Vec<f64>,
}

/// `n` uniform unit directions, deterministic per seed.
fn sphere_directions(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| loop {
            let v = Point3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        })
        .collect()
}

/// The surface points drawn by [`skeleton_sampling_loss`] for the same arguments.
pub fn sphere_samples(
    spheres: &[SkeletalSphere],
    samples_per_sphere: usize,
    seed: u64,
) -> Vec<Point3> {
    sphere_directions(spheres.len() * samples_per_sphere, seed)
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let s = &spheres[i / samples_per_sphere];
            s.center + u * s.radius
        })
        .collect()
}

/// Chamfer-l1 between points drawn on every sphere's surface and `gt`.
/// Radius 0 is accepted here (the sphere collapses to its center).
pub fn skeleton_sampling_loss(
    spheres: &[SkeletalSphere],
    gt: &[Point3],
    samples_per_sphere: usize,
    seed: u64,
) -> Result<SphereLoss> {
    if spheres.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    require(gt)?;
    if samples_per_sphere == 0 {
        return Err(Error::InvalidParams(
            "samples_per_sphere must be at least 1".into(),
        ));
    }
    if spheres
        .iter()
        .any(|s| !crate::geometry::is_finite(&s.center) || !s.radius.is_finite() || s.radius < 0.0)
    {
        return Err(Error::InvalidParams(
            "spheres need finite centers and radii >= 0".into(),
        ));
    }
    let dirs = sphere_directions(spheres.len() * samples_per_sphere, seed);
    let samples: Vec<Point3> = dirs
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let s = &spheres[i / samples_per_sphere];
            s.center + u * s.radius
        })
        .collect();
    let cd = chamfer(&samples, gt, ChamferNorm::L1)?;
    let mut center_gradient = vec![Point3::zeros(); spheres.len()];
    let mut radius_gradient = vec![0.0; spheres.len()];
    for (i, (g, u)) in cd.gradient.iter().zip(&dirs).enumerate() {
        let s = i / samples_per_sphere;
        center_gradient[s] += g;
        radius_gradient[s] += g.dot(u);
    }
    Ok(SphereLoss {
        value: cd.value,
        center_gradient,
        radius_gradient,
    })
}

/// Chamfer-l1 between skeleton point lists; gradient with respect to `pred`.
pub fn skeleton_cd_loss(pred: &[Point3], gt: &[Point3]) -> Result<LossValue> {
    chamfer(pred, gt, ChamferNorm::L1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorScores {
    pub d_gt: f64,
    pub d_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// `L_G = (d_gt - 1)^2`, `L_D = d_gt^2 + (d_r - 1)^2`.
    #[default]
    Literal,
    /// Standard least-squares GAN roles: `L_G = (d_r - 1)^2`, `L_D = (d_gt - 1)^2 + d_r^2`.
    Conventional,
}

/// `(L_G, L_D)` in the [`AdversarialForm::Literal`] form.
pub fn adversarial_losses(scores: DiscriminatorScores) -> (f64, f64) {
    adversarial_losses_with(scores, AdversarialForm::Literal)
}

pub fn adversarial_losses_with(scores: DiscriminatorScores, form: AdversarialForm) -> (f64, f64) {
    let DiscriminatorScores { d_gt, d_r } = scores;
    match form {
        AdversarialForm::Literal => ((d_gt - 1.0).powi(2), d_gt * d_gt + (d_r - 1.0).powi(2)),
        AdversarialForm::Conventional => ((d_r - 1.0).powi(2), (d_gt - 1.0).powi(2) + d_r * d_r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointTerms {
    pub cd: f64,
    pub rep: f64,
    pub adv_g: f64,
    pub skel: f64,
    pub var: f64,
}

/// `cd + rep + adv_g + lambda_skeleton * skel (+ lambda_variance * var)`.
pub fn joint_loss(terms: &JointTerms, w: &LossWeights, variance_enabled: bool) -> f64 {
    let base = terms.cd + terms.rep + terms.adv_g + w.lambda_skeleton * terms.skel;
    if variance_enabled {
        base + w.lambda_variance * terms.var
    } else {
        base
    }
}
