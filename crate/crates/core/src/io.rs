//! File formats: XYZ / binary PLY clouds, skeleton and tree JSON, CSV reports.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completion::TraceRow;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::qsm::{ReportRow, TraitRecord};
use crate::synth::tree::{attach_lateral, LateralBranch, Provenance};
use crate::synth::{BranchModel, SkeletalSphere, Skeleton, TaperProfile, TreeModel};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------- clouds

pub fn write_xyz<W: Write>(mut w: W, cloud: &PointCloud) -> Result<()> {
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn read_xyz<R: BufRead>(r: R) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 {
            return Err(Error::Format(format!(
                "line {}: expected 3 values, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
    }
    PointCloud::new(points)
}

/// Binary little-endian PLY with double `x y z` and, when present, `uint label`.
pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    if cloud.labels().is_some() {
        writeln!(w, "property uint label")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points().iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(labels) = cloud.labels() {
            w.write_all(&labels[i].to_le_bytes())?;
        }
    }
    Ok(())
}

fn ply_type_size(t: &str) -> Option<usize> {
    Some(match t {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

fn ply_read_value(t: &str, b: &[u8]) -> f64 {
    match t {
        "char" | "int8" => b[0] as i8 as f64,
        "uchar" | "uint8" => b[0] as f64,
        "short" | "int16" => i16::from_le_bytes([b[0], b[1]]) as f64,
        "ushort" | "uint16" => u16::from_le_bytes([b[0], b[1]]) as f64,
        "int" | "int32" => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        "uint" | "uint32" => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        "float" | "float32" => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        _ => f64::from_le_bytes(b[..8].try_into().unwrap()),
    }
}

pub fn read_ply<R: BufRead>(mut r: R) -> Result<PointCloud> {
    let mut line = String::new();
    let mut count = None;
    let mut props: Vec<(String, String)> = Vec::new();
    let mut in_vertex = false;
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("PLY header not terminated".into()));
        }
        let l = line.trim();
        if first {
            if l != "ply" {
                return Err(Error::Format("missing PLY magic".into()));
            }
            first = false;
            continue;
        }
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Format(format!("unsupported PLY format {fmt}")));
                }
            }
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(
                        n.parse::<usize>()
                            .map_err(|e| Error::Format(format!("vertex count: {e}")))?,
                    );
                } else if count.is_none() {
                    return Err(Error::Format(
                        "elements before vertex are not supported".into(),
                    ));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format(
                    "list properties on vertices are not supported".into(),
                ))
            }
            ["property", ty, name] if in_vertex => {
                if ply_type_size(ty).is_none() {
                    return Err(Error::Format(format!("unknown PLY type {ty}")));
                }
                props.push((ty.to_string(), name.to_string()));
            }
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let find = |n: &str| props.iter().position(|(_, p)| p == n);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Format("PLY vertices need x, y and z".into())),
    };
    let il = find("label");
    let sizes: Vec<usize> = props
        .iter()
        .map(|(t, _)| ply_type_size(t).unwrap())
        .collect();
    let stride: usize = sizes.iter().sum();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let mut buf = vec![0u8; stride];
    let mut points = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(if il.is_some() { count } else { 0 });
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("PLY body truncated".into()))?;
        let val = |i: usize| ply_read_value(&props[i].0, &buf[offsets[i]..offsets[i] + sizes[i]]);
        points.push(Point3::new(val(ix), val(iy), val(iz)));
        if let Some(i) = il {
            labels.push(val(i) as u32);
        }
    }
    if il.is_some() {
        PointCloud::with_labels(points, labels)
    } else {
        PointCloud::new(points)
    }
}

/// Reads PLY or XYZ, deciding by the file's first bytes.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let head = r.fill_buf()?;
    if head.starts_with(b"ply") {
        read_ply(r)
    } else {
        read_xyz(r)
    }
}

/// Writes PLY for a `.ply` extension and XYZ otherwise.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"))
    {
        write_ply(&mut w, cloud)?;
    } else {
        write_xyz(&mut w, cloud)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- skeleton / tree JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereDoc {
    pub c: [f64; 3],
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperDoc {
    pub angle_deg: f64,
    pub min_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDoc {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
    pub spheres: Vec<SphereDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<TaperDoc>,
    #[serde(default)]
    pub children: Vec<SkeletonDoc>,
}

fn p3(a: [f64; 3]) -> Point3 {
    Point3::new(a[0], a[1], a[2])
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl SkeletonDoc {
    pub fn from_skeleton(skeleton: &Skeleton) -> Self {
        Self {
            version: SCHEMA_VERSION,
            id: None,
            spheres: skeleton
                .spheres()
                .iter()
                .map(|s| SphereDoc {
                    c: arr(&s.center),
                    r: s.radius,
                })
                .collect(),
            taper: None,
            children: Vec::new(),
        }
    }

    pub fn to_skeleton(&self) -> Result<Skeleton> {
        self.check_version()?;
        let spheres = self
            .spheres
            .iter()
            .map(|s| SkeletalSphere::new(p3(s.c), s.r))
            .collect::<Result<Vec<_>>>()?;
        Skeleton::new(spheres)
    }

    fn check_version(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported skeleton schema version {}",
                self.version
            )));
        }
        Ok(())
    }

    fn taper_profile(&self) -> Result<TaperProfile> {
        let base = self
            .spheres
            .first()
            .ok_or_else(|| Error::DegenerateSkeleton("no spheres".into()))?
            .r;
        match self.taper {
            Some(t) => TaperProfile::new(base, t.angle_deg, t.min_r.min(base)),
            None => TaperProfile::with_base(base),
        }
    }

    fn branch(&self, default_id: u32) -> Result<BranchModel> {
        let centers: Vec<Point3> = self.spheres.iter().map(|s| p3(s.c)).collect();
        BranchModel::new(
            &centers,
            self.taper_profile()?,
            self.id.unwrap_or(default_id),
        )
    }

    /// Trunk from `spheres`, one lateral per child, each child's first center
    /// snapped onto the trunk surface.
    pub fn to_tree(&self) -> Result<TreeModel> {
        self.check_version()?;
        let trunk = self.branch(0)?;
        let mut branches: Vec<LateralBranch> = Vec::with_capacity(self.children.len());
        for (i, child) in self.children.iter().enumerate() {
            child.check_version()?;
            if !child.children.is_empty() {
                return Err(Error::Format(
                    "only one level of children is supported".into(),
                ));
            }
            let centers: Vec<Point3> = child.spheres.iter().map(|s| p3(s.c)).collect();
            branches.push(attach_lateral(
                &trunk,
                &centers,
                child.taper_profile()?,
                child.id.unwrap_or(i as u32 + 1),
            )?);
        }
        TreeModel::new(trunk, branches, Provenance::FromSkeleton)
    }

    /// Knots of every tube with the taper radius at each knot.
    pub fn from_tree(tree: &TreeModel) -> Self {
        let doc = |m: &BranchModel, children: Vec<SkeletonDoc>| {
            let knots = m.spline().knots();
            let spheres = knots
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let s = m.spline().arc_at(i as f64 / (knots.len() - 1) as f64);
                    SphereDoc {
                        c: arr(k),
                        r: m.radius_at(s),
                    }
                })
                .collect();
            SkeletonDoc {
                version: SCHEMA_VERSION,
                id: Some(m.id),
                spheres,
                taper: Some(TaperDoc {
                    angle_deg: m.taper().taper_angle_deg,
                    min_r: m.taper().min_radius,
                }),
                children,
            }
        };
        let children = tree
            .branches
            .iter()
            .map(|b| doc(&b.model, Vec::new()))
            .collect();
        doc(&tree.trunk, children)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- ground truth sidecar

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthDoc {
    pub diameter_mm: f64,
    pub angle_deg: f64,
    pub length_cm: f64,
    pub height_m: f64,
}

impl TruthDoc {
    pub fn from_traits(t: &TraitRecord) -> Self {
        Self {
            diameter_mm: t.diameter_mm,
            angle_deg: t.angle_deg,
            length_cm: t.length_cm,
            height_m: t.attachment_height_m,
        }
    }

    pub fn to_traits(&self, branch_id: u32) -> TraitRecord {
        TraitRecord {
            branch_id,
            diameter_mm: self.diameter_mm,
            angle_deg: self.angle_deg,
            length_cm: self.length_cm,
            attachment_height_m: self.height_m,
        }
    }
}

// ---------------------------------------------------------------- CSV

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "step,cd,rep,var,total")?;
    for r in trace {
        writeln!(w, "{},{},{},{},{}", r.step, r.cd, r.rep, r.var, r.total)?;
    }
    Ok(())
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "model,dataset,trait,MAE,MAPE,RMSE,n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.model,
            r.dataset,
            r.trait_name.name(),
            r.report.mae,
            r.report.mape,
            r.report.rmse,
            r.report.n
        )?;
    }
    Ok(())
}

/// Fixed-width rendering of a report table with units.
pub fn format_report_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<12} {:<10} {:<10} {:>10} {:>9} {:>10} {:>5}\n",
        "model", "dataset", "trait", "MAE", "MAPE(%)", "RMSE", "n"
    );
    for r in rows {
        let unit = r.trait_name.unit();
        out.push_str(&format!(
            "{:<12} {:<10} {:<10} {:>10} {:>9.2} {:>10} {:>5}\n",
            r.model,
            r.dataset,
            r.trait_name.name(),
            format!("{:.3} {unit}", r.report.mae),
            r.report.mape,
            format!("{:.3} {unit}", r.report.rmse),
            r.report.n
        ));
    }
    out
}

pub fn write_traits_csv<W: Write>(mut w: W, records: &[TraitRecord]) -> Result<()> {
    writeln!(
        w,
        "branch_id,diameter_mm,angle_deg,length_cm,attachment_height_m"
    )?;
    for t in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            t.branch_id, t.diameter_mm, t.angle_deg, t.length_cm, t.attachment_height_m
        )?;
    }
    Ok(())
}

pub fn read_traits_csv<R: BufRead>(r: R) -> Result<Vec<TraitRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::Format(format!(
                "traits line {}: expected 5 fields",
                i + 1
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("traits line {}: {e}", i + 1)))
        };
        out.push(TraitRecord {
            branch_id: f[0]
                .parse()
                .map_err(|e| Error::Format(format!("traits line {}: {e}", i + 1)))?,
            diameter_mm: num(f[1])?,
            angle_deg: num(f[2])?,
            length_cm: num(f[3])?,
            attachment_height_m: num(f[4])?,
        });
    }
    Ok(out)
}
