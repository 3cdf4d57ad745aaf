//! C ABI over branchkit.
//!
//! Objects cross the boundary as opaque handles created by `bk_*_new` style
//! functions and released with the matching `bk_*_free`. Every fallible call
//! returns a [`BkStatus`]; on failure `bk_last_error_message` describes the
//! error for the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use branchkit::completion::{self, CompletionConfig, CompletionResult};
use branchkit::losses::{self, ChamferNorm, LossWeights};
use branchkit::pruning::{self, Action, Thresholds};
use branchkit::qsm::{self, QsmConfig, TraitRecord};
use branchkit::synth::{self, BranchModel, Skeleton, TaperProfile, ViewConfig};
use branchkit::{io, Error, Point3, PointCloud};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Panic = 4,
}

/// Point cloud handle.
pub struct BkCloud(PointCloud);
/// Skeleton handle.
pub struct BkSkeleton(Skeleton);
/// Swept-tube branch model handle.
pub struct BkBranch(BranchModel);
/// Completion result handle.
pub struct BkCompletion(CompletionResult);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BkCompletionConfig {
    pub output_count: usize,
    pub steps: usize,
    pub step_size: f64,
    pub lambda_skeleton: f64,
    pub lambda_variance: f64,
    pub variance_activation_step: usize,
    pub slice_count: usize,
    pub repulsion_k: usize,
    /// Repulsion bandwidth in meters; zero or negative selects the default.
    pub repulsion_h: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkTraits {
    pub branch_id: u32,
    pub diameter_mm: f64,
    pub angle_deg: f64,
    pub length_cm: f64,
    pub attachment_height_m: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkAction {
    Keep = 0,
    Remove = 1,
    Shorten = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkDecision {
    pub branch_id: u32,
    pub action: BkAction,
    /// Target length for `Shorten`, otherwise zero.
    pub to_length_cm: f64,
    /// Removal order starting at 1; zero when the branch is not removed.
    pub order: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BkStatus {
    match e.exit_code() {
        3 => BkStatus::Numerical,
        _ => BkStatus::InvalidInput,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BkStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BkStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn points_from(xyz: *const f64, n: usize) -> Result<Vec<Point3>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if xyz.is_null() {
        return Err(Failure::Null("xyz"));
    }
    let s = std::slice::from_raw_parts(xyz, 3 * n);
    Ok(s.chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect())
}

unsafe fn vec3(p: *const f64, what: &'static str) -> Result<Point3, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Point3::new(s[0], s[1], s[2]))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure::Lib(Error::InvalidParams("path is not valid UTF-8".into())))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------------ clouds

/// Creates a cloud from `n` packed `x, y, z` triples.
#[no_mangle]
pub unsafe extern "C" fn bk_cloud_new(
    xyz: *const f64,
    n: usize,
    out_cloud: *mut *mut BkCloud,
) -> BkStatus {
    guard(|| {
        let o = out(out_cloud, "out_cloud")?;
        let cloud = PointCloud::new(points_from(xyz, n)?)?;
        *o = boxed(BkCloud(cloud));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bk_cloud_free(cloud: *mut BkCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bk_cloud_len(cloud: *const BkCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies up to `capacity` points as packed triples into `xyz` and stores the
/// number copied in `written`.
#[no_mangle]
pub unsafe extern "C" fn bk_cloud_copy_points(
    cloud: *const BkCloud,
    xyz: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> BkStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        let w = out(written, "written")?;
        let n = c.0.len().min(capacity);
        if n > 0 {
            if xyz.is_null() {
                return Err(Failure::Null("xyz"));
            }
            let dst = std::slice::from_raw_parts_mut(xyz, 3 * n);
            for (d, p) in dst.chunks_exact_mut(3).zip(c.0.points()) {
                d.copy_from_slice(&[p.x, p.y, p.z]);
            }
        }
        *w = n;
        Ok(())
    })
}

/// Reads a `.ply` (binary little endian) or `.xyz` cloud.
#[no_mangle]
pub unsafe extern "C" fn bk_cloud_read(
    file: *const c_char,
    out_cloud: *mut *mut BkCloud,
) -> BkStatus {
    guard(|| {
        let o = out(out_cloud, "out_cloud")?;
        *o = boxed(BkCloud(io::read_cloud(path(file)?)?));
        Ok(())
    })
}

/// Writes a cloud; the format follows the file extension.
#[no_mangle]
pub unsafe extern "C" fn bk_cloud_write(cloud: *const BkCloud, file: *const c_char) -> BkStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        io::write_cloud(path(file)?, &c.0)?;
        Ok(())
    })
}

// ---------------------------------------------------------------- branches

/// Branch through `n` spline knots with taper `r(s) = max(min_radius, base_radius + s tan(taper_angle_deg))`.
#[no_mangle]
pub unsafe extern "C" fn bk_branch_new(
    knots: *const f64,
    n: usize,
    base_radius: f64,
    taper_angle_deg: f64,
    min_radius: f64,
    id: u32,
    out_branch: *mut *mut BkBranch,
) -> BkStatus {
    guard(|| {
        let o = out(out_branch, "out_branch")?;
        let taper = TaperProfile::new(base_radius, taper_angle_deg, min_radius)?;
        *o = boxed(BkBranch(BranchModel::new(
            &points_from(knots, n)?,
            taper,
            id,
        )?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bk_branch_free(branch: *mut BkBranch) {
    if !branch.is_null() {
        drop(Box::from_raw(branch));
    }
}

/// Centerline arc length in meters, or NaN for NULL.
#[no_mangle]
pub unsafe extern "C" fn bk_branch_length(branch: *const BkBranch) -> f64 {
    branch.as_ref().map_or(f64::NAN, |b| b.0.length())
}

/// Area-uniform sample of the full tube surface.
#[no_mangle]
pub unsafe extern "C" fn bk_branch_sample_complete(
    branch: *const BkBranch,
    count: usize,
    seed: u64,
    out_cloud: *mut *mut BkCloud,
) -> BkStatus {
    guard(|| {
        let b = deref(branch, "branch")?;
        let o = out(out_cloud, "out_cloud")?;
        *o = boxed(BkCloud(synth::sample_complete(&b.0, count, seed)?));
        Ok(())
    })
}

/// Points visible from `viewpoint` (three doubles), resampled to `count`.
#[no_mangle]
pub unsafe extern "C" fn bk_branch_render_partial(
    branch: *const BkBranch,
    viewpoint: *const f64,
    count: usize,
    seed: u64,
    out_cloud: *mut *mut BkCloud,
) -> BkStatus {
    guard(|| {
        let b = deref(branch, "branch")?;
        let o = out(out_cloud, "out_cloud")?;
        let mut view = ViewConfig::new(vec3(viewpoint, "viewpoint")?);
        view.target_count = count;
        *o = boxed(BkCloud(synth::render_partial(&b.0, &view, seed)?));
        Ok(())
    })
}

/// Ground-truth traits of a branch measured on its analytic surface.
#[no_mangle]
pub unsafe extern "C" fn bk_branch_truth(
    branch: *const BkBranch,
    trunk_axis: *const f64,
    height_m: f64,
    out_traits: *mut BkTraits,
) -> BkStatus {
    guard(|| {
        let b = deref(branch, "branch")?;
        let o = out(out_traits, "out_traits")?;
        let axis = vec3(trunk_axis, "trunk_axis")?;
        *o = traits_to_c(&qsm::ground_truth_traits(
            &b.0,
            &axis,
            height_m,
            &QsmConfig::default(),
        )?);
        Ok(())
    })
}

// --------------------------------------------------------------- skeletons

/// Estimates a skeleton from a single-branch cloud.
#[no_mangle]
pub unsafe extern "C" fn bk_skeleton_estimate(
    cloud: *const BkCloud,
    slice_count: usize,
    out_skeleton: *mut *mut BkSkeleton,
) -> BkStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        let o = out(out_skeleton, "out_skeleton")?;
        *o = boxed(BkSkeleton(completion::estimate_skeleton(
            c.0.points(),
            slice_count,
        )?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bk_skeleton_free(skeleton: *mut BkSkeleton) {
    if !skeleton.is_null() {
        drop(Box::from_raw(skeleton));
    }
}

/// Number of skeletal spheres, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bk_skeleton_len(skeleton: *const BkSkeleton) -> usize {
    skeleton.as_ref().map_or(0, |s| s.0.len())
}

/// Copies up to `capacity` spheres as packed `x, y, z, r` quadruples.
#[no_mangle]
pub unsafe extern "C" fn bk_skeleton_copy_spheres(
    skeleton: *const BkSkeleton,
    xyzr: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> BkStatus {
    guard(|| {
        let s = deref(skeleton, "skeleton")?;
        let w = out(written, "written")?;
        let n = s.0.len().min(capacity);
        if n > 0 {
            if xyzr.is_null() {
                return Err(Failure::Null("xyzr"));
            }
            let dst = std::slice::from_raw_parts_mut(xyzr, 4 * n);
            for (d, sp) in dst.chunks_exact_mut(4).zip(s.0.spheres()) {
                d.copy_from_slice(&[sp.center.x, sp.center.y, sp.center.z, sp.radius]);
            }
        }
        *w = n;
        Ok(())
    })
}

// -------------------------------------------------------------- completion

#[no_mangle]
pub extern "C" fn bk_completion_config_default() -> BkCompletionConfig {
    let d = CompletionConfig::default();
    BkCompletionConfig {
        output_count: d.output_count,
        steps: d.steps,
        step_size: d.step_size,
        lambda_skeleton: d.weights.lambda_skeleton,
        lambda_variance: d.weights.lambda_variance,
        variance_activation_step: d.variance_activation_step,
        slice_count: d.slice_count,
        repulsion_k: d.repulsion_k,
        repulsion_h: 0.0,
        seed: d.seed,
    }
}

fn config_from_c(c: &BkCompletionConfig) -> Result<CompletionConfig, Error> {
    Ok(CompletionConfig {
        output_count: c.output_count,
        steps: c.steps,
        step_size: c.step_size,
        weights: LossWeights::new(c.lambda_skeleton, c.lambda_variance)?,
        variance_activation_step: c.variance_activation_step,
        slice_count: c.slice_count,
        repulsion_k: c.repulsion_k,
        repulsion_h: (c.repulsion_h > 0.0).then_some(c.repulsion_h),
        seed: c.seed,
    })
}

/// Completes a partial single-branch cloud. `base_hint` (three doubles) may be
/// NULL; when given, the estimated skeleton starts at the end nearest it.
#[no_mangle]
pub unsafe extern "C" fn bk_complete(
    partial: *const BkCloud,
    config: *const BkCompletionConfig,
    base_hint: *const f64,
    out_result: *mut *mut BkCompletion,
) -> BkStatus {
    guard(|| {
        let p = deref(partial, "partial")?;
        let cfg = config_from_c(deref(config, "config")?)?;
        let o = out(out_result, "out_result")?;
        let hint = if base_hint.is_null() {
            None
        } else {
            Some(vec3(base_hint, "base_hint")?)
        };
        *o = boxed(BkCompletion(completion::complete(
            &p.0,
            &cfg,
            hint.as_ref(),
            None,
        )?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bk_completion_free(result: *mut BkCompletion) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// New cloud handle holding the refined points.
#[no_mangle]
pub unsafe extern "C" fn bk_completion_cloud(
    result: *const BkCompletion,
    out_cloud: *mut *mut BkCloud,
) -> BkStatus {
    guard(|| {
        let r = deref(result, "result")?;
        *out(out_cloud, "out_cloud")? = boxed(BkCloud(r.0.completed.clone()));
        Ok(())
    })
}

/// New skeleton handle holding the estimated skeleton.
#[no_mangle]
pub unsafe extern "C" fn bk_completion_skeleton(
    result: *const BkCompletion,
    out_skeleton: *mut *mut BkSkeleton,
) -> BkStatus {
    guard(|| {
        let r = deref(result, "result")?;
        *out(out_skeleton, "out_skeleton")? = boxed(BkSkeleton(r.0.skeleton_est.clone()));
        Ok(())
    })
}

/// Number of recorded optimization steps, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bk_completion_trace_len(result: *const BkCompletion) -> usize {
    result.as_ref().map_or(0, |r| r.0.loss_trace.len())
}

/// Total loss after step `step`.
#[no_mangle]
pub unsafe extern "C" fn bk_completion_trace_total(
    result: *const BkCompletion,
    step: usize,
    out_total: *mut f64,
) -> BkStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let row =
            r.0.loss_trace
                .get(step)
                .ok_or_else(|| Error::InvalidParams(format!("step {step} out of range")))?;
        *out(out_total, "out_total")? = row.total;
        Ok(())
    })
}

// ------------------------------------------------------------------ losses

/// Symmetric Chamfer distance; `squared` selects squared distances instead of plain ones.
#[no_mangle]
pub unsafe extern "C" fn bk_chamfer(
    a: *const BkCloud,
    b: *const BkCloud,
    squared: bool,
    out_value: *mut f64,
) -> BkStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        let norm = if squared {
            ChamferNorm::L2Squared
        } else {
            ChamferNorm::L1
        };
        *out(out_value, "out_value")? = losses::chamfer(a.0.points(), b.0.points(), norm)?.value;
        Ok(())
    })
}

/// Variance of point-to-centerline distances against a skeleton's polyline.
#[no_mangle]
pub unsafe extern "C" fn bk_variance_loss(
    cloud: *const BkCloud,
    skeleton: *const BkSkeleton,
    out_value: *mut f64,
) -> BkStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        let s = deref(skeleton, "skeleton")?;
        let dense = completion::dense_skeleton(&s.0);
        *out(out_value, "out_value")? = losses::variance_loss(&[c.0.points()], &dense)?.value;
        Ok(())
    })
}

// ---------------------------------------------------------- traits, pruning

fn traits_to_c(t: &TraitRecord) -> BkTraits {
    BkTraits {
        branch_id: t.branch_id,
        diameter_mm: t.diameter_mm,
        angle_deg: t.angle_deg,
        length_cm: t.length_cm,
        attachment_height_m: t.attachment_height_m,
    }
}

/// Measures diameter, angle and length of a single-branch cloud along `skeleton`.
#[no_mangle]
pub unsafe extern "C" fn bk_characterize(
    cloud: *const BkCloud,
    skeleton: *const BkSkeleton,
    trunk_axis: *const f64,
    height_m: f64,
    branch_id: u32,
    out_traits: *mut BkTraits,
) -> BkStatus {
    guard(|| {
        let c = deref(cloud, "cloud")?;
        let s = deref(skeleton, "skeleton")?;
        let axis = vec3(trunk_axis, "trunk_axis")?;
        let t = qsm::characterize_branch(
            branch_id,
            c.0.points(),
            &s.0,
            &axis,
            height_m,
            &QsmConfig::default(),
        )?;
        *out(out_traits, "out_traits")? = traits_to_c(&t);
        Ok(())
    })
}

/// Plans pruning for `n` branches. `decisions` must hold `n` entries and is
/// filled in input order.
#[no_mangle]
pub unsafe extern "C" fn bk_plan_pruning(
    traits: *const BkTraits,
    n: usize,
    diameter_cutoff_cm: f64,
    length_cutoff_cm: f64,
    decisions: *mut BkDecision,
) -> BkStatus {
    guard(|| {
        if n > 0 && (traits.is_null() || decisions.is_null()) {
            return Err(Failure::Null(if traits.is_null() {
                "traits"
            } else {
                "decisions"
            }));
        }
        let input: Vec<TraitRecord> = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(traits, n)
                .iter()
                .map(|t| TraitRecord {
                    branch_id: t.branch_id,
                    diameter_mm: t.diameter_mm,
                    angle_deg: t.angle_deg,
                    length_cm: t.length_cm,
                    attachment_height_m: t.attachment_height_m,
                })
                .collect()
        };
        let plan = pruning::plan_pruning(
            &input,
            Thresholds {
                diameter_cutoff_cm,
                length_cutoff_cm,
            },
        )?;
        if n > 0 {
            let dst = std::slice::from_raw_parts_mut(decisions, n);
            for (d, p) in dst.iter_mut().zip(&plan.decisions) {
                let (action, to_length_cm) = match p.action {
                    Action::Keep => (BkAction::Keep, 0.0),
                    Action::Remove => (BkAction::Remove, 0.0),
                    Action::Shorten { to_length_cm } => (BkAction::Shorten, to_length_cm),
                };
                *d = BkDecision {
                    branch_id: p.branch_id,
                    action,
                    to_length_cm,
                    order: p.order.unwrap_or(0),
                };
            }
        }
        Ok(())
    })
}
