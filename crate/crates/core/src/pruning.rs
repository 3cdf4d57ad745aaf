//! Global pruning rules: remove thick branches (largest first, then from the
//! top down) and shorten long ones.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsm::TraitRecord;
use crate::synth::{BranchModel, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Remove,
    Shorten { to_length_cm: f64 },
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    DiameterRule,
    LengthRule,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub branch_id: u32,
    pub action: Action,
    pub rule: Rule,
    pub order: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub diameter_cutoff_cm: f64,
    pub length_cutoff_cm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            diameter_cutoff_cm: 2.0,
            length_cutoff_cm: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub decisions: Vec<PruneDecision>,
    pub thresholds: Thresholds,
}

impl PruningPlan {
    pub fn decision(&self, id: u32) -> Option<&PruneDecision> {
        self.decisions.iter().find(|d| d.branch_id == id)
    }

    /// Removal decisions in cutting order.
    pub fn removals(&self) -> Vec<&PruneDecision> {
        let mut r: Vec<&PruneDecision> = self
            .decisions
            .iter()
            .filter(|d| d.order.is_some())
            .collect();
        r.sort_by_key(|d| d.order);
        r
    }
}

/// Branches thicker than the diameter cutoff are removed: the thickest first
/// (ties by lowest id), then the rest from the highest attachment down (ties
/// by lowest id). Other branches longer than the length cutoff are shortened
/// to it. Decisions follow the input order.
pub fn plan_pruning(traits: &[TraitRecord], thresholds: Thresholds) -> Result<PruningPlan> {
    if traits.is_empty() {
        return Err(Error::InvalidParams("no branches to plan".into()));
    }
    let mut seen = HashSet::new();
    for t in traits {
        if !seen.insert(t.branch_id) {
            return Err(Error::DuplicateBranchId(t.branch_id));
        }
    }
    let diameter_cut_mm = thresholds.diameter_cutoff_cm * 10.0;
    let mut targets: Vec<&TraitRecord> = traits
        .iter()
        .filter(|t| t.diameter_mm > diameter_cut_mm)
        .collect();
    let mut order: Vec<u32> = Vec::with_capacity(targets.len());
    if let Some(first) = targets.iter().copied().max_by(|a, b| {
        a.diameter_mm
            .total_cmp(&b.diameter_mm)
            .then(b.branch_id.cmp(&a.branch_id))
    }) {
        order.push(first.branch_id);
        targets.retain(|t| t.branch_id != first.branch_id);
        targets.sort_by(|a, b| {
            b.attachment_height_m
                .total_cmp(&a.attachment_height_m)
                .then(a.branch_id.cmp(&b.branch_id))
        });
        order.extend(targets.iter().map(|t| t.branch_id));
    }
    let decisions = traits
        .iter()
        .map(|t| {
            if let Some(pos) = order.iter().position(|&id| id == t.branch_id) {
                PruneDecision {
                    branch_id: t.branch_id,
                    action: Action::Remove,
                    rule: Rule::DiameterRule,
                    order: Some(pos as u32 + 1),
                }
            } else if t.length_cm > thresholds.length_cutoff_cm {
                PruneDecision {
                    branch_id: t.branch_id,
                    action: Action::Shorten {
                        to_length_cm: thresholds.length_cutoff_cm,
                    },
                    rule: Rule::LengthRule,
                    order: None,
                }
            } else {
                PruneDecision {
                    branch_id: t.branch_id,
                    action: Action::Keep,
                    rule: Rule::None,
                    order: None,
                }
            }
        })
        .collect();
    Ok(PruningPlan {
        decisions,
        thresholds,
    })
}

/// A rendered pruning map: side-view SVG plus the plan as JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningMap {
    pub svg: String,
    pub json: String,
}

pub fn plan_to_json(plan: &PruningPlan) -> Result<String> {
    Ok(serde_json::to_string_pretty(plan)?)
}

pub fn plan_from_json(json: &str) -> Result<PruningPlan> {
    Ok(serde_json::from_str(json)?)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 180.0;
const CENTERLINE_SAMPLES: usize = 40;

fn color(d: Option<&PruneDecision>) -> &'static str {
    match d.map(|d| d.action) {
        Some(Action::Remove) => "#d62728",
        Some(Action::Shorten { .. }) => "#ff7f0e",
        Some(Action::Keep) => "#2ca02c",
        None => "#8c564b",
    }
}

fn centerline(model: &BranchModel) -> Vec<(f64, f64)> {
    (0..CENTERLINE_SAMPLES)
        .map(|i| {
            let p = model.centerline(model.length() * i as f64 / (CENTERLINE_SAMPLES - 1) as f64);
            (p.x, p.z)
        })
        .collect()
}

/// Side view (x horizontal, z up) of the tree with branches colored by action,
/// removal order next to each removed branch, and a legend listing removals
/// in ascending order from the top.
pub fn emit_pruning_map(plan: &PruningPlan, tree: &TreeModel) -> Result<PruningMap> {
    let models: Vec<&BranchModel> = std::iter::once(&tree.trunk)
        .chain(tree.branches.iter().map(|b| &b.model))
        .collect();
    for d in &plan.decisions {
        if !models.iter().any(|m| m.id == d.branch_id) {
            return Err(Error::UnknownBranchId(d.branch_id));
        }
    }
    let lines: Vec<(u32, Vec<(f64, f64)>)> = models.iter().map(|m| (m.id, centerline(m))).collect();
    let (mut xmin, mut xmax, mut zmin, mut zmax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (_, pts) in &lines {
        for &(x, z) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            zmin = zmin.min(z);
            zmax = zmax.max(z);
        }
    }
    let plot_w = WIDTH - LEGEND_WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let scale = (plot_w / (xmax - xmin).max(1e-9)).min(plot_h / (zmax - zmin).max(1e-9));
    let to_px = |x: f64, z: f64| {
        (
            MARGIN + (x - xmin) * scale,
            HEIGHT - MARGIN - (z - zmin) * scale,
        )
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (id, pts) in &lines {
        let decision = plan.decision(*id);
        let width = if *id == tree.trunk.id { 4 } else { 2 };
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, z)| {
                let (px, py) = to_px(x, z);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="branch" data-branch-id="{id}" points="{}" fill="none" stroke="{}" stroke-width="{width}"/>"#,
            path.join(" "),
            color(decision)
        );
        if let Some(order) = decision.and_then(|d| d.order) {
            let (x, z) = pts[pts.len() / 2];
            let (px, py) = to_px(x, z);
            let _ = writeln!(
                svg,
                r#"<text class="order-label" data-branch-id="{id}" x="{px:.2}" y="{:.2}" font-size="14" fill="black">{order}</text>"#,
                py - 6.0
            );
        }
    }
    let legend_x = WIDTH - LEGEND_WIDTH;
    let _ = writeln!(
        svg,
        r#"<text x="{legend_x}" y="{MARGIN}" font-size="14" font-weight="bold">Removal order</text>"#
    );
    for (i, d) in plan.removals().iter().enumerate() {
        let y = MARGIN + 20.0 * (i + 1) as f64;
        let _ = writeln!(
            svg,
            r#"<text class="legend-entry" data-order="{}" x="{legend_x}" y="{y}" font-size="12">{}: branch {}</text>"#,
            d.order.unwrap(),
            d.order.unwrap(),
            d.branch_id
        );
    }
    svg.push_str("</svg>\n");
    Ok(PruningMap {
        svg,
        json: plan_to_json(plan)?,
    })
}
