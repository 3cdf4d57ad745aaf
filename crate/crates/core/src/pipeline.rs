//! Dataset generation, completion and evaluation runs, and the synthetic
//! raw-versus-completed benchmark.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::completion::{self, estimate_skeleton, orient_from, CompletionConfig, CompletionResult};
use crate::error::{Error, Result};
use crate::geometry::{any_perpendicular, Point3, PointCloud};
use crate::io::{self, SkeletonDoc, TruthDoc};
use crate::losses::cd_l1_x1000;
use crate::pruning::{emit_pruning_map, plan_pruning, PruningPlan, Thresholds};
use crate::qsm::{
    characterize_branch, ground_truth_traits, trait_reports, QsmConfig, ReportRow, Trait,
    TraitRecord,
};
use crate::seed;
use crate::synth::render::{
    render_partial, ViewConfig, DEFAULT_GRID_RESOLUTION, DEFAULT_PARTIAL_COUNT,
};
use crate::synth::sample::{resample_skeleton, sample_complete, SKELETON_POINTS};
use crate::synth::{
    corrupt_gaps, generate_tree_unit, jitter, occlude_lateral, BranchModel, SkeletalSphere,
    Skeleton, TreeModel, TreeUnitParams,
};

pub const DEFAULT_COMPLETE_COUNT: usize = 8192;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Floor,
    Round,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Fraction { train: f64, rounding: Rounding },
    Counts { train: usize, test: usize },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fraction {
            train: 0.8,
            rounding: Rounding::Floor,
        }
    }
}

impl SplitSpec {
    /// `(train, test)` sizes for `n` samples.
    pub fn counts(&self, n: usize) -> Result<(usize, usize)> {
        match *self {
            SplitSpec::Fraction { train, rounding } => {
                if !(0.0..=1.0).contains(&train) {
                    return Err(Error::InvalidParams(format!(
                        "train fraction {train} outside [0, 1]"
                    )));
                }
                let x = train * n as f64;
                let t = match rounding {
                    Rounding::Floor => x.floor(),
                    Rounding::Round => x.round(),
                } as usize;
                Ok((t.min(n), n - t.min(n)))
            }
            SplitSpec::Counts { train, test } => {
                if train + test != n {
                    return Err(Error::InvalidParams(format!(
                        "split {train} + {test} does not cover {n} samples"
                    )));
                }
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    /// Number of branches.
    pub count: usize,
    pub occlusion_fraction: f64,
    pub gap_count: usize,
    pub gap_radius: f64,
    /// Standard deviation of Gaussian jitter added to partial clouds, meters.
    pub noise_sigma: f64,
    pub partial_count: usize,
    pub complete_count: usize,
    pub grid_resolution: usize,
    pub view_distance: f64,
    pub tree: TreeUnitParams,
    pub split: SplitSpec,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            count: 10,
            occlusion_fraction: 0.4,
            gap_count: 2,
            gap_radius: 0.015,
            noise_sigma: 0.001,
            partial_count: DEFAULT_PARTIAL_COUNT,
            complete_count: DEFAULT_COMPLETE_COUNT,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            view_distance: 1.0,
            tree: TreeUnitParams::default(),
            split: SplitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetParams,
    pub completion: CompletionConfig,
    pub qsm: QsmConfig,
    pub thresholds: Thresholds,
}

/// One generated branch with everything needed to score it.
#[derive(Debug, Clone)]
pub struct BranchSample {
    pub id: u32,
    pub tree_index: usize,
    pub model: BranchModel,
    pub trunk_axis: Point3,
    pub complete: PointCloud,
    pub partial: PointCloud,
    pub gt_skeleton: Vec<Point3>,
    pub truth: TraitRecord,
}

/// A tree whose laterals carry dataset-wide branch ids starting at `first_id`.
pub fn dataset_tree(
    root: u64,
    tree_index: usize,
    first_id: u32,
    params: &TreeUnitParams,
) -> Result<TreeModel> {
    let mut tree = generate_tree_unit(params, seed::derive(root, "tree", tree_index as u64))?;
    if tree.branches.is_empty() {
        return Err(Error::InvalidParams(
            "tree parameters produce no lateral branches".into(),
        ));
    }
    for (j, b) in tree.branches.iter_mut().enumerate() {
        b.model.id = first_id + j as u32;
    }
    Ok(tree)
}

fn laterals_per_tree(params: &TreeUnitParams) -> usize {
    params.depth * params.branches_per_unit
}

/// Generates the trees that hold branches `0..count`.
pub fn dataset_trees(root: u64, params: &DatasetParams) -> Result<Vec<TreeModel>> {
    let per = laterals_per_tree(&params.tree);
    if per == 0 {
        return Err(Error::InvalidParams(
            "tree parameters produce no lateral branches".into(),
        ));
    }
    let trees = params.count.div_ceil(per);
    (0..trees)
        .map(|t| dataset_tree(root, t, (t * per) as u32 + 1, &params.tree))
        .collect()
}

/// Scans, damages and measures lateral `j` of `tree` as branch `index`.
pub fn make_branch_sample(
    root: u64,
    index: usize,
    tree_index: usize,
    tree: &TreeModel,
    j: usize,
    params: &DatasetParams,
    qsm: &QsmConfig,
) -> Result<BranchSample> {
    let i = index as u64;
    let lateral = &tree.branches[j];
    let model = lateral.model.clone();
    let (_, trunk_axis) = tree.attachment_frame(lateral);
    let height = model.base().z;

    let complete = sample_complete(
        &model,
        params.complete_count,
        seed::derive(root, "complete", i),
    )?;

    let mut rng = seed::rng(seed::derive(root, "view", i));
    let bb = model.bounding_box();
    let chord = (model.spline().knots().last().unwrap() - model.base()).normalize();
    let u = any_perpendicular(&chord);
    let v = chord.cross(&u);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let look = (u * phi.cos() + v * phi.sin()).normalize();
    let mut distance = params.view_distance.max(bb.diagonal());
    let mut viewpoint = bb.center() + look * distance;
    while bb.contains(&viewpoint) {
        distance *= 2.0;
        viewpoint = bb.center() + look * distance;
    }
    let view = ViewConfig {
        viewpoint,
        target_count: params.partial_count,
        grid_resolution: params.grid_resolution,
    };
    let rendered = render_partial(&model, &view, seed::derive(root, "render", i))?;

    let side = chord.cross(&look) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let centerline = resample_skeleton(&model, 400)?;
    let mut partial = if params.occlusion_fraction > 0.0 {
        occlude_lateral(&rendered, &centerline, &side, params.occlusion_fraction)?
    } else {
        rendered
    };
    if params.gap_count > 0 && !partial.is_empty() {
        let centers: Vec<Point3> = (0..params.gap_count)
            .map(|_| partial.points()[rng.random_range(0..partial.len())])
            .collect();
        partial = corrupt_gaps(&partial, &centers, params.gap_radius)?;
    }
    if partial.is_empty() {
        return Err(Error::EmptyView);
    }
    let partial = jitter(&partial, params.noise_sigma, seed::derive(root, "noise", i))?;
    Ok(BranchSample {
        id: model.id,
        tree_index,
        gt_skeleton: resample_skeleton(&model, SKELETON_POINTS)?,
        truth: ground_truth_traits(&model, &trunk_axis, height, qsm)?,
        model,
        trunk_axis,
        complete,
        partial,
    })
}

/// Every branch sample of the dataset, in id order.
pub fn generate_samples(
    root: u64,
    params: &DatasetParams,
    qsm: &QsmConfig,
) -> Result<(Vec<TreeModel>, Vec<BranchSample>)> {
    let trees = dataset_trees(root, params)?;
    let per = laterals_per_tree(&params.tree);
    let samples = (0..params.count)
        .map(|index| {
            let t = index / per;
            make_branch_sample(root, index, t, &trees[t], index % per, params, qsm)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((trees, samples))
}

/// Estimated skeleton of a single-branch cloud, base end nearest `base_hint`.
pub fn branch_skeleton(
    cloud: &PointCloud,
    slice_count: usize,
    base_hint: &Point3,
) -> Result<Skeleton> {
    Ok(orient_from(
        estimate_skeleton(cloud.points(), slice_count)?,
        base_hint,
    ))
}

/// Measurements of one benchmark branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub id: u32,
    pub truth: TraitRecord,
    pub raw: Option<TraitRecord>,
    pub completed: Option<TraitRecord>,
    pub cd_raw_x1000: f64,
    pub cd_completed_x1000: Option<f64>,
    pub error: Option<String>,
}

pub fn evaluate_sample(sample: &BranchSample, cfg: &RunConfig) -> BranchOutcome {
    let base = sample.model.base();
    let height = sample.truth.attachment_height_m;
    let mut error = None;
    let raw = branch_skeleton(&sample.partial, cfg.completion.slice_count, &base)
        .and_then(|sk| {
            characterize_branch(
                sample.id,
                sample.partial.points(),
                &sk,
                &sample.trunk_axis,
                height,
                &cfg.qsm,
            )
        })
        .map_err(|e| error = Some(format!("raw: {e}")))
        .ok();
    let mut completion_cfg = cfg.completion.clone();
    completion_cfg.seed = seed::derive(cfg.seed, "completion", sample.id as u64);
    completion_cfg.output_count = completion_cfg.output_count.max(sample.partial.len());
    let result = completion::complete(
        &sample.partial,
        &completion_cfg,
        Some(&base),
        Some(&sample.gt_skeleton),
    );
    let (completed, cd_completed) = match result {
        Ok(r) => {
            let traits = characterize_branch(
                sample.id,
                r.completed.points(),
                &r.skeleton_est,
                &sample.trunk_axis,
                height,
                &cfg.qsm,
            )
            .map_err(|e| error = Some(format!("completed: {e}")))
            .ok();
            (
                traits,
                cd_l1_x1000(r.completed.points(), sample.complete.points()).ok(),
            )
        }
        Err(e) => {
            error = Some(format!("completion: {e}"));
            (None, None)
        }
    };
    BranchOutcome {
        id: sample.id,
        truth: sample.truth,
        raw,
        completed,
        cd_raw_x1000: cd_l1_x1000(sample.partial.points(), sample.complete.points())
            .unwrap_or(f64::NAN),
        cd_completed_x1000: cd_completed,
        error,
    }
}

/// Aggregates of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub outcomes: Vec<BranchOutcome>,
    /// Branches where both raw and completed diameters were measured.
    pub paired: usize,
    pub raw_diameter_mae: f64,
    pub completed_diameter_mae: f64,
    /// Fraction of all branches whose completed diameter error is lower than
    /// the raw one; branches that failed either measurement count as not better.
    pub completed_better_fraction: f64,
    pub mean_cd_completed_x1000: f64,
    pub reports: Vec<ReportRow>,
}

pub fn summarize(outcomes: Vec<BranchOutcome>) -> Result<BenchmarkSummary> {
    let paired: Vec<(&BranchOutcome, &TraitRecord, &TraitRecord)> = outcomes
        .iter()
        .filter_map(|o| Some((o, o.raw.as_ref()?, o.completed.as_ref()?)))
        .collect();
    let n = paired.len();
    let err = |t: &TraitRecord, o: &BranchOutcome| (t.diameter_mm - o.truth.diameter_mm).abs();
    let raw_mae = paired.iter().map(|(o, r, _)| err(r, o)).sum::<f64>() / n.max(1) as f64;
    let comp_mae = paired.iter().map(|(o, _, c)| err(c, o)).sum::<f64>() / n.max(1) as f64;
    let better = paired
        .iter()
        .filter(|(o, r, c)| err(c, o) < err(r, o))
        .count();
    let cds: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.cd_completed_x1000)
        .collect();
    let truth: Vec<TraitRecord> = paired.iter().map(|(o, _, _)| o.truth).collect();
    let raw: Vec<TraitRecord> = paired.iter().map(|(_, r, _)| **r).collect();
    let comp: Vec<TraitRecord> = paired.iter().map(|(_, _, c)| **c).collect();
    let traits = [Trait::Diameter, Trait::Angle, Trait::Length];
    let mut reports = Vec::new();
    if n > 0 {
        reports.extend(trait_reports("raw", "synthetic", &raw, &truth, &traits)?);
        reports.extend(trait_reports(
            "completed",
            "synthetic",
            &comp,
            &truth,
            &traits,
        )?);
    }
    Ok(BenchmarkSummary {
        paired: n,
        raw_diameter_mae: raw_mae,
        completed_diameter_mae: comp_mae,
        completed_better_fraction: better as f64 / outcomes.len().max(1) as f64,
        mean_cd_completed_x1000: cds.iter().sum::<f64>() / cds.len().max(1) as f64,
        outcomes,
        reports,
    })
}

/// Generates the dataset in memory and scores raw against completed clouds.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkSummary> {
    let (_, samples) = generate_samples(cfg.seed, &cfg.dataset, &cfg.qsm)?;
    summarize(samples.iter().map(|s| evaluate_sample(s, cfg)).collect())
}

// ---------------------------------------------------------------- on-disk runs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u32,
    pub tree_index: usize,
    pub partial_path: String,
    pub complete_path: String,
    pub skeleton_path: String,
    pub truth_path: String,
    pub tree_path: String,
    pub trunk_axis: [f64; 3],
    pub base: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub params: DatasetParams,
    pub qsm: QsmConfig,
    pub train: Vec<u32>,
    pub test: Vec<u32>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = io::read_json(path)?;
        if m.version != io::SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                m.version
            )));
        }
        Ok(m)
    }
}

fn p3(a: [f64; 3]) -> Point3 {
    Point3::new(a[0], a[1], a[2])
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Deterministic train/test assignment of `ids`.
pub fn split_ids(root: u64, ids: &[u32], split: &SplitSpec) -> Result<(Vec<u32>, Vec<u32>)> {
    let (n_train, _) = split.counts(ids.len())?;
    let mut shuffled = ids.to_vec();
    let mut rng = seed::rng(seed::derive(root, "split", 0));
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }
    let mut train = shuffled[..n_train].to_vec();
    let mut test = shuffled[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Ground-truth skeleton of a branch: 100 evenly spaced centers with their radii.
pub fn truth_skeleton(model: &BranchModel) -> Result<Skeleton> {
    let len = model.length();
    let spheres = (0..SKELETON_POINTS)
        .map(|k| {
            let s = len * k as f64 / (SKELETON_POINTS - 1) as f64;
            SkeletalSphere::new(model.centerline(s), model.radius_at(s))
        })
        .collect::<Result<Vec<_>>>()?;
    Skeleton::new(spheres)
}

/// Writes clouds, skeletons, truth sidecars, trees and the manifest under `out`.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let (trees, samples) = generate_samples(cfg.seed, &cfg.dataset, &cfg.qsm)?;
    for (t, tree) in trees.iter().enumerate() {
        io::write_json(
            &out.join(format!("tree_{t:03}.json")),
            &SkeletonDoc::from_tree(tree),
        )?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let stem = format!("branch_{:04}", s.id);
        let e = ManifestEntry {
            id: s.id,
            tree_index: s.tree_index,
            partial_path: format!("{stem}_partial.ply"),
            complete_path: format!("{stem}_complete.ply"),
            skeleton_path: format!("{stem}_skeleton.json"),
            truth_path: format!("{stem}_truth.json"),
            tree_path: format!("tree_{:03}.json", s.tree_index),
            trunk_axis: arr(&s.trunk_axis),
            base: arr(&s.model.base()),
            seed: seed::derive(cfg.seed, "branch", s.id as u64),
        };
        io::write_cloud(&out.join(&e.partial_path), &s.partial)?;
        io::write_cloud(&out.join(&e.complete_path), &s.complete)?;
        io::write_json(
            &out.join(&e.skeleton_path),
            &SkeletonDoc::from_skeleton(&truth_skeleton(&s.model)?),
        )?;
        io::write_json(&out.join(&e.truth_path), &TruthDoc::from_traits(&s.truth))?;
        entries.push(e);
    }
    let ids: Vec<u32> = entries.iter().map(|e| e.id).collect();
    let (train, test) = split_ids(cfg.seed, &ids, &cfg.dataset.split)?;
    let manifest = Manifest {
        version: io::SCHEMA_VERSION,
        seed: cfg.seed,
        params: cfg.dataset.clone(),
        qsm: cfg.qsm,
        train,
        test,
        entries,
    };
    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummaryRow {
    pub id: u32,
    pub cd_l1_x1000: f64,
    pub steps: usize,
}

/// Completes every partial cloud of the manifest into `out`.
pub fn cmd_complete(
    manifest_path: &Path,
    cfg: &CompletionConfig,
    root_seed: u64,
    out: &Path,
) -> Result<Vec<CompletionSummaryRow>> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::InvalidParams("manifest has no entries".into()));
    }
    let dir = manifest_dir(manifest_path);
    fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let partial = io::read_cloud(&dir.join(&e.partial_path))?;
        let complete = io::read_cloud(&dir.join(&e.complete_path))?;
        let gt: SkeletonDoc = io::read_json(&dir.join(&e.skeleton_path))?;
        let gt_points = gt.to_skeleton()?.resample_polyline(SKELETON_POINTS);
        let mut c = cfg.clone();
        c.seed = seed::derive(root_seed, "completion", e.id as u64);
        c.output_count = c.output_count.max(partial.len());
        let r: CompletionResult =
            completion::complete(&partial, &c, Some(&p3(e.base)), Some(&gt_points))?;
        let stem = format!("branch_{:04}", e.id);
        io::write_cloud(&out.join(format!("{stem}_completed.ply")), &r.completed)?;
        io::write_json(
            &out.join(format!("{stem}_skeleton_est.json")),
            &SkeletonDoc::from_skeleton(&r.skeleton_est),
        )?;
        let mut trace = Vec::new();
        io::write_trace_csv(&mut trace, &r.loss_trace)?;
        fs::write(out.join(format!("{stem}_trace.csv")), trace)?;
        rows.push(CompletionSummaryRow {
            id: e.id,
            cd_l1_x1000: cd_l1_x1000(r.completed.points(), complete.points())?,
            steps: r.loss_trace.len(),
        });
    }
    let mut csv = String::from("branch_id,cd_l1_x1000\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.id, r.cd_l1_x1000));
    }
    fs::write(out.join("summary.csv"), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub raw_plans: Vec<PruningPlan>,
    pub completed_plans: Vec<PruningPlan>,
    /// Branch ids whose pruning action differs between raw and completed traits.
    pub decision_flips: Vec<u32>,
    pub failures: Vec<(u32, String)>,
}

/// Characterizes raw and completed clouds, writes the report, trait tables and
/// per-tree pruning maps into `out`.
pub fn cmd_evaluate(
    manifest_path: &Path,
    completed_dir: &Path,
    cfg: &RunConfig,
    out: &Path,
) -> Result<EvaluationReport> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::InvalidParams("manifest has no entries".into()));
    }
    let dir = manifest_dir(manifest_path);
    fs::create_dir_all(out)?;
    let mut truth = Vec::new();
    let mut raw = Vec::new();
    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for e in &manifest.entries {
        let t: TruthDoc = io::read_json(&dir.join(&e.truth_path))?;
        let t = t.to_traits(e.id);
        let axis = p3(e.trunk_axis);
        let base = p3(e.base);
        let partial = io::read_cloud(&dir.join(&e.partial_path))?;
        let stem = format!("branch_{:04}", e.id);
        let comp_cloud = io::read_cloud(&completed_dir.join(format!("{stem}_completed.ply")))?;
        let comp_sk: SkeletonDoc =
            io::read_json(&completed_dir.join(format!("{stem}_skeleton_est.json")))?;
        let r = branch_skeleton(&partial, cfg.completion.slice_count, &base).and_then(|sk| {
            characterize_branch(
                e.id,
                partial.points(),
                &sk,
                &axis,
                t.attachment_height_m,
                &cfg.qsm,
            )
        });
        let c = comp_sk.to_skeleton().and_then(|sk| {
            characterize_branch(
                e.id,
                comp_cloud.points(),
                &sk,
                &axis,
                t.attachment_height_m,
                &cfg.qsm,
            )
        });
        match (r, c) {
            (Ok(r), Ok(c)) => {
                truth.push(t);
                raw.push(r);
                completed.push(c);
            }
            (Err(err), _) | (_, Err(err)) => failures.push((e.id, err.to_string())),
        }
    }
    let traits = [Trait::Diameter, Trait::Angle, Trait::Length];
    let mut rows = Vec::new();
    if !truth.is_empty() {
        rows.extend(trait_reports("raw", "synthetic", &raw, &truth, &traits)?);
        rows.extend(trait_reports(
            "completed",
            "synthetic",
            &completed,
            &truth,
            &traits,
        )?);
    }
    let mut csv = Vec::new();
    io::write_report_csv(&mut csv, &rows)?;
    fs::write(out.join("report.csv"), csv)?;
    fs::write(out.join("report.txt"), io::format_report_table(&rows))?;
    for (name, recs) in [("truth", &truth), ("raw", &raw), ("completed", &completed)] {
        let mut buf = Vec::new();
        io::write_traits_csv(&mut buf, recs)?;
        fs::write(out.join(format!("traits_{name}.csv")), buf)?;
    }

    let mut raw_plans = Vec::new();
    let mut completed_plans = Vec::new();
    let mut decision_flips = Vec::new();
    let mut tree_indices: Vec<usize> = manifest.entries.iter().map(|e| e.tree_index).collect();
    tree_indices.dedup();
    for t in tree_indices {
        let ids: Vec<u32> = manifest
            .entries
            .iter()
            .filter(|e| e.tree_index == t)
            .map(|e| e.id)
            .collect();
        let pick = |recs: &[TraitRecord]| -> Vec<TraitRecord> {
            recs.iter()
                .filter(|r| ids.contains(&r.branch_id))
                .copied()
                .collect()
        };
        let (r, c) = (pick(&raw), pick(&completed));
        if r.is_empty() {
            continue;
        }
        let tree_path = manifest
            .entries
            .iter()
            .find(|e| e.tree_index == t)
            .unwrap()
            .tree_path
            .clone();
        let doc: SkeletonDoc = io::read_json(&dir.join(tree_path))?;
        let tree = doc.to_tree()?;
        let rp = plan_pruning(&r, cfg.thresholds)?;
        let cp = plan_pruning(&c, cfg.thresholds)?;
        for d in &rp.decisions {
            if cp.decision(d.branch_id).map(|x| x.action) != Some(d.action) {
                decision_flips.push(d.branch_id);
            }
        }
        for (name, plan) in [("raw", &rp), ("completed", &cp)] {
            let map = emit_pruning_map(plan, &tree)?;
            fs::write(
                out.join(format!("pruning_tree_{t:03}_{name}.svg")),
                &map.svg,
            )?;
            fs::write(
                out.join(format!("pruning_tree_{t:03}_{name}.json")),
                &map.json,
            )?;
        }
        raw_plans.push(rp);
        completed_plans.push(cp);
    }
    let report = EvaluationReport {
        rows,
        raw_plans,
        completed_plans,
        decision_flips,
        failures,
    };
    io::write_json(&out.join("evaluation.json"), &report)?;
    Ok(report)
}
