use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use branchkit::completion;
use branchkit::io::{self, SkeletonDoc};
use branchkit::losses::{self, ChamferNorm};
use branchkit::pipeline::{self, RunConfig};
use branchkit::pruning::{emit_pruning_map, plan_pruning, plan_to_json, Thresholds};
use branchkit::qsm::characterize_branch;
use branchkit::synth::{corrupt_gaps, jitter, occlude_lateral, occlude_side};
use branchkit::{Error, Point3, Result};

#[derive(Parser)]
#[command(
    name = "branchkit",
    version,
    about = "Synthetic branch point clouds, completion, trait measurement and pruning plans"
)]
struct Cli {
    /// Root seed; overrides the seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for single-cloud commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    Generate {
        /// Number of branches; overrides the config.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Damage a single cloud by occlusion, gaps and noise.
    Corrupt(CorruptArgs),
    /// Complete every partial cloud of a manifest, or a single cloud.
    Complete {
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Point nearest the branch base, `x,y,z`, for single-cloud mode.
        #[arg(long, value_parser = parse_point)]
        base: Option<Point3>,
    },
    /// Measure diameter, angle and length of a single-branch cloud.
    Characterize(CharacterizeArgs),
    /// Plan pruning from a traits CSV and optionally draw the map of a tree.
    Prune {
        #[arg(long)]
        traits: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Score raw and completed clouds of a manifest against ground truth.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory written by `complete`.
        #[arg(long)]
        completed: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Evaluate Chamfer, repulsion and variance losses between two clouds.
    LossEval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Skeleton JSON for the variance loss.
        #[arg(long)]
        skeleton: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = NormArg::L1)]
        norm: NormArg,
    },
    /// Generate, complete and score a dataset in memory.
    Benchmark {
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fraction of points removed by the occlusion cut.
    #[arg(long, default_value_t = 0.0)]
    occlusion: f64,
    /// Direction of the occluded side, `x,y,z`.
    #[arg(long, value_parser = parse_point, default_value = "1,0,0")]
    direction: Point3,
    /// Skeleton JSON; when given, the cut is made across the local centerline.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Gap center `x,y,z`; repeatable.
    #[arg(long = "gap", value_parser = parse_point)]
    gaps: Vec<Point3>,
    #[arg(long, default_value_t = 0.015)]
    gap_radius: f64,
    /// Standard deviation of Gaussian jitter, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct CharacterizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Skeleton JSON; estimated from the cloud when absent.
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long, value_parser = parse_point)]
    trunk_axis: Option<Point3>,
    /// Attachment height, meters.
    #[arg(long, default_value_t = 0.0)]
    height: f64,
    #[arg(long, default_value_t = 0)]
    id: u32,
    /// Point nearest the branch base, `x,y,z`.
    #[arg(long, value_parser = parse_point)]
    base: Option<Point3>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    diameter_cutoff_cm: Option<f64>,
    #[arg(long)]
    length_cutoff_cm: Option<f64>,
}

impl ThresholdArgs {
    fn apply(&self, base: Thresholds) -> Thresholds {
        Thresholds {
            diameter_cutoff_cm: self.diameter_cutoff_cm.unwrap_or(base.diameter_cutoff_cm),
            length_cutoff_cm: self.length_cutoff_cm.unwrap_or(base.length_cutoff_cm),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected three finite numbers `x,y,z`, got {s:?}")),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &cli.config {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.completion.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate { count } => {
            let mut cfg = cfg;
            if let Some(n) = count {
                cfg.dataset.count = *n;
            }
            let out = out_dir(cli);
            let m = pipeline::cmd_generate(&cfg, &out)?;
            eprintln!(
                "wrote {} branches ({} train / {} test) to {}",
                m.entries.len(),
                m.train.len(),
                m.test.len(),
                out.display()
            );
        }
        Command::Corrupt(a) => {
            let cloud = io::read_cloud(&a.input)?;
            let mut cloud = if a.occlusion > 0.0 {
                match &a.skeleton {
                    Some(p) => {
                        let doc: SkeletonDoc = io::read_json(p)?;
                        let centerline = doc.to_skeleton()?.resample_polyline(400);
                        occlude_lateral(&cloud, &centerline, &a.direction, a.occlusion)?
                    }
                    None => occlude_side(&cloud, &a.direction, a.occlusion)?,
                }
            } else {
                cloud
            };
            if !a.gaps.is_empty() {
                cloud = corrupt_gaps(&cloud, &a.gaps, a.gap_radius)?;
            }
            cloud.require_non_empty()?;
            let cloud = jitter(&cloud, a.noise, cfg.seed)?;
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| Error::InvalidParams("--out is required".into()))?;
            io::write_cloud(out, &cloud)?;
        }
        Command::Complete {
            manifest,
            input,
            base,
        } => {
            let out = out_dir(cli);
            if let Some(m) = manifest {
                let rows = pipeline::cmd_complete(m, &cfg.completion, cfg.seed, &out)?;
                let mean = rows.iter().map(|r| r.cd_l1_x1000).sum::<f64>() / rows.len() as f64;
                eprintln!(
                    "completed {} branches, mean CD-l1 x1000 = {mean:.4}",
                    rows.len()
                );
            } else if let Some(input) = input {
                let partial = io::read_cloud(input)?;
                let mut c = cfg.completion.clone();
                c.seed = cfg.seed;
                c.output_count = c.output_count.max(partial.len());
                let r = completion::complete(&partial, &c, base.as_ref(), None)?;
                fs::create_dir_all(&out)?;
                io::write_cloud(&out.join("completed.ply"), &r.completed)?;
                io::write_cloud(&out.join("coarse.ply"), &r.coarse)?;
                io::write_json(
                    &out.join("skeleton_est.json"),
                    &SkeletonDoc::from_skeleton(&r.skeleton_est),
                )?;
                let mut trace = Vec::new();
                io::write_trace_csv(&mut trace, &r.loss_trace)?;
                fs::write(out.join("trace.csv"), trace)?;
            }
        }
        Command::Characterize(a) => {
            let cloud = io::read_cloud(&a.input)?;
            let skeleton = match &a.skeleton {
                Some(p) => io::read_json::<SkeletonDoc>(p)?.to_skeleton()?,
                None => {
                    let hint = a.base.unwrap_or_else(|| {
                        cloud
                            .points()
                            .iter()
                            .copied()
                            .min_by(|p, q| p.z.total_cmp(&q.z))
                            .unwrap_or_default()
                    });
                    pipeline::branch_skeleton(&cloud, cfg.completion.slice_count, &hint)?
                }
            };
            let axis = match a.trunk_axis {
                Some(v) if v.norm() > 0.0 => v.normalize(),
                Some(_) => return Err(Error::InvalidParams("trunk axis must be non-zero".into())),
                None => Point3::z(),
            };
            let t =
                characterize_branch(a.id, cloud.points(), &skeleton, &axis, a.height, &cfg.qsm)?;
            let mut buf = Vec::new();
            io::write_traits_csv(&mut buf, &[t])?;
            emit(cli.out.as_deref(), &String::from_utf8_lossy(&buf))?;
        }
        Command::Prune {
            traits,
            tree,
            thresholds,
        } => {
            let records = io::read_traits_csv(std::io::BufReader::new(fs::File::open(traits)?))?;
            let plan = plan_pruning(&records, thresholds.apply(cfg.thresholds))?;
            match tree {
                Some(t) => {
                    let tree = io::read_json::<SkeletonDoc>(t)?.to_tree()?;
                    let map = emit_pruning_map(&plan, &tree)?;
                    let out = out_dir(cli);
                    fs::create_dir_all(&out)?;
                    fs::write(out.join("pruning_map.svg"), map.svg)?;
                    fs::write(out.join("pruning_plan.json"), map.json)?;
                }
                None => emit(cli.out.as_deref(), &(plan_to_json(&plan)? + "\n"))?,
            }
        }
        Command::Evaluate {
            manifest,
            completed,
            thresholds,
        } => {
            let mut cfg = cfg;
            cfg.thresholds = thresholds.apply(cfg.thresholds);
            let report = pipeline::cmd_evaluate(manifest, completed, &cfg, &out_dir(cli))?;
            print!("{}", io::format_report_table(&report.rows));
            println!("decision flips: {}", report.decision_flips.len());
            for (id, e) in &report.failures {
                eprintln!("branch {id}: {e}");
            }
        }
        Command::LossEval {
            pred,
            gt,
            skeleton,
            norm,
        } => {
            let p = io::read_cloud(pred)?;
            let g = io::read_cloud(gt)?;
            let norm = match norm {
                NormArg::L1 => ChamferNorm::L1,
                NormArg::L2 => ChamferNorm::L2Squared,
            };
            let chamfer = losses::chamfer(p.points(), g.points(), norm)?;
            let rep = losses::repulsion(
                p.points(),
                losses::DEFAULT_REPULSION_K,
                losses::default_bandwidth(p.points()),
            )?;
            let mut doc = json!({
                "chamfer": { "value": chamfer.value, "gradient_norm": chamfer.gradient_norm() },
                "cd_l1_x1000": losses::cd_l1_x1000(p.points(), g.points())?,
                "repulsion": { "value": rep.value, "gradient_norm": rep.gradient_norm() },
            });
            if let Some(s) = skeleton {
                let sk = io::read_json::<SkeletonDoc>(s)?.to_skeleton()?;
                let var = losses::variance_loss(&[p.points()], &completion::dense_skeleton(&sk))?;
                doc["variance"] =
                    json!({ "value": var.value, "gradient_norm": var.gradient_norm() });
            }
            emit(
                cli.out.as_deref(),
                &(serde_json::to_string_pretty(&doc)? + "\n"),
            )?;
        }
        Command::Benchmark { count } => {
            let mut cfg = cfg;
            if let Some(n) = count {
                cfg.dataset.count = *n;
            }
            let s = pipeline::run_benchmark(&cfg)?;
            print!("{}", io::format_report_table(&s.reports));
            println!(
                "branches {} paired {} | diameter MAE raw {:.3} mm, completed {:.3} mm | completed better on {:.1}% | mean CD-l1 x1000 {:.4}",
                s.outcomes.len(),
                s.paired,
                s.raw_diameter_mae,
                s.completed_diameter_mae,
                100.0 * s.completed_better_fraction,
                s.mean_cd_completed_x1000
            );
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)?;
                io::write_json(&out.join("benchmark.json"), &s)?;
                let mut csv = Vec::new();
                io::write_report_csv(&mut csv, &s.reports)?;
                fs::write(out.join("report.csv"), csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
