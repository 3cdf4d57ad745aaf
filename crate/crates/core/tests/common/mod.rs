#![allow(dead_code)]

use branchkit::losses::{self, ChamferNorm};
use branchkit::synth::SkeletalSphere;
use branchkit::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_CONFIGS: usize = 50;
pub const FD_REL_TOL: f64 = 1e-4;
/// Finite-difference step as a fraction of the configuration's bbox diagonal.
pub const FD_STEP_FRACTION: f64 = 1e-6;
/// Components below this fraction of the largest one are compared at that floor.
const COMPONENT_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ) * scale
        })
        .collect()
}

pub fn diagonal(points: &[Point3]) -> f64 {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Sorted brute-force distances from `q` to `set`, skipping index `skip`.
pub fn sorted_distances(q: &Point3, set: &[Point3], skip: Option<usize>) -> Vec<f64> {
    let mut d: Vec<f64> = set
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(_, p)| (p - q).norm())
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// True if every query's `k`-th and `k+1`-th nearest distances in `set`
/// differ by more than `margin`.
pub fn rank_gap_ok(
    queries: &[Point3],
    set: &[Point3],
    k: usize,
    margin: f64,
    self_skip: bool,
) -> bool {
    queries.iter().enumerate().all(|(i, q)| {
        let d = sorted_distances(q, set, self_skip.then_some(i));
        d.len() <= k || d[k] - d[k - 1] > margin
    })
}

/// Central-difference gradient of `f` with respect to every coordinate of `x`.
pub fn fd_gradient(x: &[Point3], step: f64, f: &dyn Fn(&[Point3]) -> f64) -> Vec<Point3> {
    let mut y = x.to_vec();
    let mut g = vec![Point3::zeros(); x.len()];
    for i in 0..x.len() {
        for c in 0..3 {
            let orig = y[i][c];
            y[i][c] = orig + step;
            let fp = f(&y);
            y[i][c] = orig - step;
            let fm = f(&y);
            y[i][c] = orig;
            g[i][c] = (fp - fm) / (2.0 * step);
        }
    }
    g
}

/// Largest per-component relative error between two flattened gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let top = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (COMPONENT_FLOOR * top).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn flatten(v: &[Point3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Worst relative error of the analytic gradient of each loss over
/// `FD_CONFIGS` random tie-free configurations.
pub struct GradientReport {
    pub name: &'static str,
    pub worst: f64,
    pub configs: usize,
}

impl GradientReport {
    pub fn ok(&self) -> bool {
        self.configs == FD_CONFIGS && self.worst < FD_REL_TOL
    }
}

fn run_configs(
    name: &'static str,
    seed: u64,
    mut one: impl FnMut(&mut ChaCha8Rng) -> Option<f64>,
) -> GradientReport {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut configs = 0;
    let mut attempts = 0;
    while configs < FD_CONFIGS {
        attempts += 1;
        assert!(
            attempts < 20 * FD_CONFIGS,
            "{name}: could not draw tie-free configurations"
        );
        if let Some(e) = one(&mut r) {
            worst = worst.max(e);
            configs += 1;
        }
    }
    GradientReport {
        name,
        worst,
        configs,
    }
}

pub fn check_chamfer(norm: ChamferNorm, seed: u64) -> GradientReport {
    let name = match norm {
        ChamferNorm::L1 => "chamfer_l1",
        ChamferNorm::L2Squared => "chamfer_l2_squared",
    };
    run_configs(name, seed, |r| {
        let scale = r.random_range(0.1..3.0);
        let pred = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let gt = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let step = FD_STEP_FRACTION * diagonal(&[pred.clone(), gt.clone()].concat());
        let margin = 10.0 * step;
        if !rank_gap_ok(&pred, &gt, 1, margin, false) || !rank_gap_ok(&gt, &pred, 1, margin, false)
        {
            return None;
        }
        let a = losses::chamfer(&pred, &gt, norm).unwrap().gradient;
        let n = fd_gradient(&pred, step, &|x| {
            losses::chamfer(x, &gt, norm).unwrap().value
        });
        Some(max_relative_error(&flatten(&a), &flatten(&n)))
    })
}

pub fn check_skeleton_cd(seed: u64) -> GradientReport {
    run_configs("skeleton_cd", seed, |r| {
        let scale = r.random_range(0.1..3.0);
        let pred = {
            let n = r.random_range(2..30);
            random_points(r, n, scale)
        };
        let gt = {
            let n = r.random_range(2..30);
            random_points(r, n, scale)
        };
        let step = FD_STEP_FRACTION * diagonal(&[pred.clone(), gt.clone()].concat());
        if !rank_gap_ok(&pred, &gt, 1, 10.0 * step, false)
            || !rank_gap_ok(&gt, &pred, 1, 10.0 * step, false)
        {
            return None;
        }
        let a = losses::skeleton_cd_loss(&pred, &gt).unwrap().gradient;
        let n = fd_gradient(&pred, step, &|x| {
            losses::skeleton_cd_loss(x, &gt).unwrap().value
        });
        Some(max_relative_error(&flatten(&a), &flatten(&n)))
    })
}

pub fn check_coverage(seed: u64) -> GradientReport {
    run_configs("coverage", seed, |r| {
        let scale = r.random_range(0.1..3.0);
        let pts = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let target = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let step = FD_STEP_FRACTION * diagonal(&[pts.clone(), target.clone()].concat());
        if !rank_gap_ok(&target, &pts, 1, 10.0 * step, false) {
            return None;
        }
        let a = losses::coverage(&pts, &target).unwrap().gradient;
        let n = fd_gradient(&pts, step, &|x| losses::coverage(x, &target).unwrap().value);
        Some(max_relative_error(&flatten(&a), &flatten(&n)))
    })
}

pub fn check_repulsion(seed: u64) -> GradientReport {
    run_configs("repulsion", seed, |r| {
        let scale = r.random_range(0.1..3.0);
        let n = r.random_range(8..30);
        let k = r.random_range(1..6);
        let pts = random_points(r, n, scale);
        let h = scale * r.random_range(0.1..0.6);
        let step = FD_STEP_FRACTION * diagonal(&pts);
        if !rank_gap_ok(&pts, &pts, k, 10.0 * step, true) {
            return None;
        }
        let a = losses::repulsion(&pts, k, h).unwrap().gradient;
        let num = fd_gradient(&pts, step, &|x| losses::repulsion(x, k, h).unwrap().value);
        Some(max_relative_error(&flatten(&a), &flatten(&num)))
    })
}

pub fn check_variance(seed: u64) -> GradientReport {
    run_configs("variance", seed, |r| {
        let scale = r.random_range(0.1..3.0);
        let a_cloud = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let b_cloud = {
            let n = r.random_range(3..25);
            random_points(r, n, scale)
        };
        let skeleton = {
            let n = r.random_range(1..12);
            random_points(r, n, scale)
        };
        let all = [a_cloud.clone(), b_cloud.clone(), skeleton.clone()].concat();
        let step = FD_STEP_FRACTION * diagonal(&all);
        if !rank_gap_ok(&a_cloud, &skeleton, 1, 10.0 * step, false)
            || !rank_gap_ok(&b_cloud, &skeleton, 1, 10.0 * step, false)
        {
            return None;
        }
        let na = a_cloud.len();
        let joined = [a_cloud, b_cloud].concat();
        let f = |x: &[Point3]| {
            losses::variance_loss(&[&x[..na], &x[na..]], &skeleton)
                .unwrap()
                .value
        };
        let a = losses::variance_loss(&[&joined[..na], &joined[na..]], &skeleton)
            .unwrap()
            .gradient;
        let n = fd_gradient(&joined, step, &f);
        Some(max_relative_error(&flatten(&a), &flatten(&n)))
    })
}

/// Sphere centers and radii; a configuration is used only when central
/// differences at two step sizes agree, which rules out a nearest-neighbor
/// switch inside the stencil.
pub fn check_sphere_sampling(seed: u64) -> GradientReport {
    run_configs("skeleton_sampling", seed, |r| {
        let scale = r.random_range(0.2..2.0);
        let m = r.random_range(1..5);
        let spheres: Vec<SkeletalSphere> = random_points(r, m, scale)
            .into_iter()
            .map(|c| SkeletalSphere {
                center: c,
                radius: scale * r.random_range(0.05..0.3),
            })
            .collect();
        let gt = {
            let n = r.random_range(3..20);
            random_points(r, n, scale)
        };
        let per = r.random_range(1..6);
        let sample_seed = r.random::<u64>();
        let step = FD_STEP_FRACTION
            * diagonal(&[gt.clone(), spheres.iter().map(|s| s.center).collect()].concat());
        let value = |sp: &[SkeletalSphere]| {
            losses::skeleton_sampling_loss(sp, &gt, per, sample_seed)
                .unwrap()
                .value
        };
        // parameters flattened as (cx, cy, cz, r) per sphere
        let params: Vec<f64> = spheres
            .iter()
            .flat_map(|s| [s.center.x, s.center.y, s.center.z, s.radius])
            .collect();
        let unpack = |p: &[f64]| -> Vec<SkeletalSphere> {
            p.chunks_exact(4)
                .map(|c| SkeletalSphere {
                    center: Point3::new(c[0], c[1], c[2]),
                    radius: c[3],
                })
                .collect()
        };
        let central = |h: f64| -> Vec<f64> {
            let mut q = params.clone();
            (0..params.len())
                .map(|i| {
                    q[i] = params[i] + h;
                    let fp = value(&unpack(&q));
                    q[i] = params[i] - h;
                    let fm = value(&unpack(&q));
                    q[i] = params[i];
                    (fp - fm) / (2.0 * h)
                })
                .collect()
        };
        let n1 = central(step);
        let n2 = central(2.0 * step);
        if max_relative_error(&n1, &n2) > 1e-6 {
            return None;
        }
        let l = losses::skeleton_sampling_loss(&spheres, &gt, per, sample_seed).unwrap();
        let a: Vec<f64> = l
            .center_gradient
            .iter()
            .zip(&l.radius_gradient)
            .flat_map(|(c, rg)| [c.x, c.y, c.z, *rg])
            .collect();
        Some(max_relative_error(&a, &n1))
    })
}

pub fn all_gradient_checks() -> Vec<GradientReport> {
    vec![
        check_chamfer(ChamferNorm::L1, 11),
        check_chamfer(ChamferNorm::L2Squared, 12),
        check_coverage(13),
        check_repulsion(14),
        check_variance(15),
        check_sphere_sampling(16),
        check_skeleton_cd(17),
    ]
}

/// Numeric arc length of `f` on `[a, b]` from `n` chord segments.
pub fn chord_length(f: &dyn Fn(f64) -> Point3, a: f64, b: f64, n: usize) -> f64 {
    let mut prev = f(a);
    let mut total = 0.0;
    for i in 1..=n {
        let p = f(a + (b - a) * i as f64 / n as f64);
        total += (p - prev).norm();
        prev = p;
    }
    total
}

/// Dense polyline oracle for a parametric curve: `samples + 1` points at
/// uniform parameter and their cumulative chord lengths.
pub struct ArcOracle {
    pub points: Vec<Point3>,
    pub cumulative: Vec<f64>,
}

impl ArcOracle {
    pub fn new(f: &dyn Fn(f64) -> Point3, samples: usize) -> Self {
        let points: Vec<Point3> = (0..=samples)
            .map(|i| f(i as f64 / samples as f64))
            .collect();
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc position of a point lying on the curve: nearest polyline segment,
    /// then the projection onto it.
    pub fn locate(&self, p: &Point3) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let d = w[1] - w[0];
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dist = (w[0] + d * t - p).norm();
            if dist < best.0 {
                best = (dist, self.cumulative[i] + t * len2.sqrt());
            }
        }
        best.1
    }
}

/// Largest relative deviation of consecutive oracle arc gaps from their mean.
pub fn gap_uniformity(oracle: &ArcOracle, points: &[Point3]) -> f64 {
    let s: Vec<f64> = points.iter().map(|p| oracle.locate(p)).collect();
    let gaps: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = (s[s.len() - 1] - s[0]) / gaps.len() as f64;
    gaps.iter()
        .map(|g| (g - mean).abs() / mean)
        .fold(0.0, f64::max)
}

/// Random smooth knot sequence: a wandering path with bounded turning.
pub fn random_knots(rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let n = rng.random_range(3..9);
    let mut p = Point3::zeros();
    let mut dir = Point3::new(0.0, 0.0, 1.0);
    let mut knots = vec![p];
    for _ in 1..n {
        let jitter = Point3::new(
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
        );
        dir = (dir + jitter).normalize();
        p += dir * rng.random_range(0.1..0.4);
        knots.push(p);
    }
    knots
}

/// Connected components of `points` under linkage distance `link`, by union-find.
pub fn components(points: &[Point3], link: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].z.total_cmp(&points[b].z));
    // sweep along z so only pairs within `link` in z are compared
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if points[j].z - points[i].z > link {
                break;
            }
            if (points[i] - points[j]).norm() <= link {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Worst errors of complete-cloud characterization against independent
/// generator truth: diameter from the taper formula, length from a dense
/// chord oracle, angle from the centerline window direction.
#[derive(Debug, Default)]
pub struct OracleBar {
    pub branches: usize,
    pub failures: usize,
    pub diameter_rel: f64,
    pub angle_deg: f64,
    pub length_rel: f64,
}

pub fn oracle_bar(count: usize, seed: u64) -> OracleBar {
    use branchkit::pipeline::{branch_skeleton, generate_samples, DatasetParams};
    use branchkit::qsm::{characterize_branch, QsmConfig};

    let params = DatasetParams {
        count,
        noise_sigma: 0.0,
        ..Default::default()
    };
    let qsm = QsmConfig::default();
    let (_, samples) = generate_samples(seed, &params, &qsm).expect("dataset");
    let mut bar = OracleBar {
        branches: samples.len(),
        ..Default::default()
    };
    for s in &samples {
        let base = s.model.base();
        let measured = branch_skeleton(&s.complete, 30, &base).and_then(|sk| {
            characterize_branch(s.id, s.complete.points(), &sk, &s.trunk_axis, base.z, &qsm)
        });
        let Ok(m) = measured else {
            bar.failures += 1;
            continue;
        };
        let t = s.model.taper();
        let radius = (t.base_radius + qsm.diameter_offset * t.taper_angle_deg.to_radians().tan())
            .max(t.min_radius);
        let diameter = 2000.0 * radius;
        let spline = s.model.spline().clone();
        let length_cm = 100.0 * ArcOracle::new(&|u| spline.eval(u), 100_000).length();
        let window: Vec<Point3> = (0..=50)
            .map(|i| s.model.centerline(qsm.angle_window * i as f64 / 50.0))
            .collect();
        let dir = (window[50] - window[0]).normalize();
        let angle = dir
            .dot(&s.trunk_axis.normalize())
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees();
        bar.diameter_rel = bar
            .diameter_rel
            .max((m.diameter_mm - diameter).abs() / diameter);
        bar.angle_deg = bar.angle_deg.max((m.angle_deg - angle).abs());
        bar.length_rel = bar
            .length_rel
            .max((m.length_cm - length_cm).abs() / length_cm);
    }
    bar
}

/// Geometric circle fit by coarse-to-fine grid search over the center; the
/// optimal radius for a fixed center is the mean distance.
pub fn brute_circle(
    pts: &[(f64, f64)],
    guess: (f64, f64),
    span: f64,
) -> branchkit::completion::Circle2 {
    let cost = |cx: f64, cy: f64| {
        let d: Vec<f64> = pts.iter().map(|(x, y)| (x - cx).hypot(y - cy)).collect();
        let r = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|di| (di - r).powi(2)).sum::<f64>(), r)
    };
    let (mut cx, mut cy, mut span) = (guess.0, guess.1, span);
    for _ in 0..40 {
        let mut best = (f64::INFINITY, cx, cy);
        for i in -10..=10 {
            for j in -10..=10 {
                let (x, y) = (cx + span * i as f64 / 10.0, cy + span * j as f64 / 10.0);
                let c = cost(x, y).0;
                if c < best.0 {
                    best = (c, x, y);
                }
            }
        }
        (cx, cy) = (best.1, best.2);
        span *= 0.3;
    }
    branchkit::completion::Circle2 {
        cx,
        cy,
        r: cost(cx, cy).1,
    }
}

/// Reference planner written from the rule text: targets exceed the cutoff;
/// a target's order is 1 if it is the thickest (lowest id on ties), otherwise
/// 2 plus the number of other non-first targets ranked above it by height
/// (lowest id on ties).
pub fn brute_plan(
    traits: &[branchkit::qsm::TraitRecord],
    th: branchkit::pruning::Thresholds,
) -> Vec<(u32, branchkit::pruning::Action, Option<u32>)> {
    use branchkit::pruning::Action;
    let target = |t: &branchkit::qsm::TraitRecord| t.diameter_mm > 10.0 * th.diameter_cutoff_cm;
    let targets: Vec<_> = traits.iter().filter(|t| target(t)).collect();
    let first = targets
        .iter()
        .find(|a| {
            targets.iter().all(|b| {
                a.diameter_mm > b.diameter_mm
                    || (a.diameter_mm == b.diameter_mm && a.branch_id <= b.branch_id)
            })
        })
        .map(|t| t.branch_id);
    traits
        .iter()
        .map(|t| {
            if target(t) {
                let order = if Some(t.branch_id) == first {
                    1
                } else {
                    let above = targets
                        .iter()
                        .filter(|o| Some(o.branch_id) != first && o.branch_id != t.branch_id)
                        .filter(|o| {
                            o.attachment_height_m > t.attachment_height_m
                                || (o.attachment_height_m == t.attachment_height_m
                                    && o.branch_id < t.branch_id)
                        })
                        .count();
                    2 + above as u32
                };
                (t.branch_id, Action::Remove, Some(order))
            } else if t.length_cm > th.length_cutoff_cm {
                (
                    t.branch_id,
                    Action::Shorten {
                        to_length_cm: th.length_cutoff_cm,
                    },
                    None,
                )
            } else {
                (t.branch_id, Action::Keep, None)
            }
        })
        .collect()
}

/// Checks the plan invariants; returns a description of the first violation.
pub fn plan_violation(
    traits: &[branchkit::qsm::TraitRecord],
    plan: &branchkit::pruning::PruningPlan,
) -> Option<String> {
    use branchkit::pruning::Action;
    if plan.decisions.len() != traits.len() {
        return Some("decision count differs from branch count".into());
    }
    for t in traits {
        if plan
            .decisions
            .iter()
            .filter(|d| d.branch_id == t.branch_id)
            .count()
            != 1
        {
            return Some(format!("branch {} not decided exactly once", t.branch_id));
        }
    }
    let cut = 10.0 * plan.thresholds.diameter_cutoff_cm;
    let mut orders = Vec::new();
    for (t, d) in traits.iter().zip(&plan.decisions) {
        let removed = matches!(d.action, Action::Remove);
        if removed != (t.diameter_mm > cut) {
            return Some(format!("branch {} violates the strict cutoff", t.branch_id));
        }
        if removed != d.order.is_some() {
            return Some(format!(
                "branch {} order presence disagrees with action",
                t.branch_id
            ));
        }
        if let Some(o) = d.order {
            orders.push((o, t));
        }
    }
    orders.sort_by_key(|(o, _)| *o);
    for (i, (o, _)) in orders.iter().enumerate() {
        if *o != i as u32 + 1 {
            return Some("removal orders are not a permutation of 1..n".into());
        }
    }
    if let Some((_, first)) = orders.first() {
        if orders
            .iter()
            .any(|(_, t)| t.diameter_mm > first.diameter_mm)
        {
            return Some("order 1 is not the thickest target".into());
        }
    }
    for w in orders.windows(2).skip(1) {
        if w[1].1.attachment_height_m > w[0].1.attachment_height_m {
            return Some("later removals are not ordered from the top down".into());
        }
    }
    None
}

pub fn random_traits(r: &mut ChaCha8Rng) -> Vec<branchkit::qsm::TraitRecord> {
    let n = r.random_range(1..25);
    let mut ids: Vec<u32> = (1..200).collect();
    (0..n)
        .map(|_| {
            let id = ids.swap_remove(r.random_range(0..ids.len()));
            // coarse grids make exact ties common
            branchkit::qsm::TraitRecord {
                branch_id: id,
                diameter_mm: r.random_range(10..40) as f64,
                angle_deg: r.random_range(0.0..180.0),
                length_cm: r.random_range(20..70) as f64,
                attachment_height_m: r.random_range(0..8) as f64 * 0.25,
            }
        })
        .collect()
}

/// sha256 of every file under `dir`, keyed by relative path.
pub fn dir_hashes(dir: &std::path::Path) -> std::collections::BTreeMap<String, String> {
    use sha2::{Digest, Sha256};
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable directory") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).expect("readable file");
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                let hex: String = Sha256::digest(&bytes)
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect();
                out.insert(rel, hex);
            }
        }
    }
    out
}

/// Runs the `branchkit` binary; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_branchkit"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Full generate, complete, evaluate run through the binary into `root`.
pub fn cli_pipeline(root: &std::path::Path, config: &std::path::Path, seed: u64) {
    let s = seed.to_string();
    let data = root.join("data");
    let completed = root.join("completed");
    let eval = root.join("eval");
    let cfg = config.to_str().unwrap();
    for args in [
        vec![
            "--seed",
            &s,
            "--config",
            cfg,
            "--out",
            data.to_str().unwrap(),
            "generate",
        ],
        vec![
            "--seed",
            &s,
            "--config",
            cfg,
            "--out",
            completed.to_str().unwrap(),
            "complete",
            "--manifest",
            data.join("manifest.json").to_str().unwrap(),
        ],
        vec![
            "--seed",
            &s,
            "--config",
            cfg,
            "--out",
            eval.to_str().unwrap(),
            "evaluate",
            "--manifest",
            data.join("manifest.json").to_str().unwrap(),
            "--completed",
            completed.to_str().unwrap(),
        ],
    ] {
        let (code, _, err) = run_cli(&args);
        assert_eq!(code, 0, "{args:?}: {err}");
    }
}
