mod common;

use std::fs;
use std::path::Path;

use branchkit::io::{self, SkeletonDoc, TruthDoc};
use branchkit::pipeline::{branch_skeleton, split_ids, Manifest, Rounding, RunConfig, SplitSpec};
use branchkit::{completion::CompletionConfig, Point3};
use common::*;
use tempfile::TempDir;

/// A small, fast configuration for end-to-end runs.
fn small_config(dir: &Path, count: usize) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.dataset.count = count;
    cfg.dataset.complete_count = 3000;
    cfg.dataset.partial_count = 1500;
    cfg.dataset.grid_resolution = 128;
    cfg.completion = CompletionConfig {
        output_count: 2048,
        steps: 20,
        variance_activation_step: 10,
        ..Default::default()
    };
    let path = dir.join("config.json");
    io::write_json(&path, &cfg).unwrap();
    path
}

#[test]
fn generate_is_reproducible_and_complete() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 10);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (code, _, err) = run_cli(&[
            "--seed",
            "7",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.to_str().unwrap(),
            "generate",
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let ha = dir_hashes(&a);
    assert_eq!(ha, dir_hashes(&b));

    let m = Manifest::load(&a.join("manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 10);
    assert_eq!(m.train.len() + m.test.len(), 10);
    // every referenced artifact exists and parses back to a valid object
    for e in &m.entries {
        for cloud in [&e.partial_path, &e.complete_path] {
            assert!(!io::read_cloud(&a.join(cloud)).unwrap().is_empty());
        }
        let sk: SkeletonDoc = io::read_json(&a.join(&e.skeleton_path)).unwrap();
        assert_eq!(sk.to_skeleton().unwrap().len(), 100);
        let t: TruthDoc = io::read_json(&a.join(&e.truth_path)).unwrap();
        let t = t.to_traits(e.id);
        assert!(t.diameter_mm > 0.0 && t.length_cm > 0.0 && (0.0..=180.0).contains(&t.angle_deg));
        let tree: SkeletonDoc = io::read_json(&a.join(&e.tree_path)).unwrap();
        let tree = tree.to_tree().unwrap();
        assert!(tree.branches.iter().any(|b| b.model.id == e.id));
    }
    // the manifest references every file that was written
    let referenced: usize = m.entries.len() * 4
        + m.entries
            .iter()
            .map(|e| &e.tree_path)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
        + 1;
    assert_eq!(ha.len(), referenced);
}

#[test]
fn split_sizes_floor_round_and_explicit_counts() {
    let ids: Vec<u32> = (1..=1432).collect();
    let floor = SplitSpec::Fraction {
        train: 0.8,
        rounding: Rounding::Floor,
    };
    let round = SplitSpec::Fraction {
        train: 0.8,
        rounding: Rounding::Round,
    };
    let counts = SplitSpec::Counts {
        train: 1136,
        test: 296,
    };
    assert_eq!(floor.counts(1432).unwrap(), (1145, 287));
    assert_eq!(round.counts(1432).unwrap(), (1146, 286));
    assert_eq!(counts.counts(1432).unwrap(), (1136, 296));
    assert!(SplitSpec::Counts { train: 1, test: 1 }
        .counts(1432)
        .is_err());
    let (train, test) = split_ids(3, &ids, &counts).unwrap();
    assert_eq!((train.len(), test.len()), (1136, 296));
    let mut all: Vec<u32> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, ids);
    assert_eq!(split_ids(3, &ids, &counts).unwrap(), (train, test));
}

#[test]
fn empty_manifest_fails_with_bad_input_code() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 1);
    let data = tmp.path().join("data");
    let (code, _, _) = run_cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "generate",
    ]);
    assert_eq!(code, 0);
    let mut m = Manifest::load(&data.join("manifest.json")).unwrap();
    m.entries.clear();
    m.train.clear();
    m.test.clear();
    let empty = data.join("empty.json");
    io::write_json(&empty, &m).unwrap();
    let out = tmp.path().join("c");
    let (code, _, err) = run_cli(&[
        "--out",
        out.to_str().unwrap(),
        "complete",
        "--manifest",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = run_cli(&[
        "--out",
        out.to_str().unwrap(),
        "evaluate",
        "--manifest",
        empty.to_str().unwrap(),
        "--completed",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let (code, _, _) = run_cli(&[
        "complete",
        "--manifest",
        tmp.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_ne!(code, 0);
    let (code, _, _) = run_cli(&["no-such-command"]);
    assert_eq!(code, 2);
}

#[test]
fn full_pipeline_writes_parseable_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 6);
    cli_pipeline(tmp.path(), &cfg, 11);
    let completed = tmp.path().join("completed");
    let summary = fs::read_to_string(completed.join("summary.csv")).unwrap();
    let cds: Vec<f64> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(cds.len(), 6);
    assert!(cds.iter().all(|c| c.is_finite() && *c > 0.0));
    let trace = fs::read_to_string(completed.join("branch_0001_trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "step,cd,rep,var,total");
    assert_eq!(trace.lines().count(), 21);

    let eval = tmp.path().join("eval");
    let report = fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report
        .lines()
        .next()
        .unwrap()
        .starts_with("model,dataset,trait,MAE,MAPE,RMSE,n"));
    for needle in [
        "raw,synthetic,diameter",
        "raw,synthetic,angle",
        "completed,synthetic,diameter",
        "completed,synthetic,angle",
    ] {
        assert!(report.contains(needle), "{needle} missing from\n{report}");
    }
    let table = fs::read_to_string(eval.join("report.txt")).unwrap();
    assert!(table.contains("mm") && table.contains("deg"));
    let e: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("evaluation.json")).unwrap()).unwrap();
    assert!(e["decision_flips"].as_array().unwrap().len() <= 6);
    assert!(
        eval.join("pruning_tree_000_raw.svg").exists()
            && eval.join("pruning_tree_000_completed.json").exists()
    );
}

#[test]
fn identical_raw_and_completed_inputs_give_identical_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 4);
    let data = tmp.path().join("data");
    let (code, _, _) = run_cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "generate",
    ]);
    assert_eq!(code, 0);
    let m = Manifest::load(&data.join("manifest.json")).unwrap();
    // "completed" directory holding the raw partial clouds and their own skeletons
    let fake = tmp.path().join("same");
    fs::create_dir_all(&fake).unwrap();
    for e in &m.entries {
        let partial = io::read_cloud(&data.join(&e.partial_path)).unwrap();
        let sk = branch_skeleton(&partial, 30, &Point3::from(e.base)).unwrap();
        io::write_cloud(
            &fake.join(format!("branch_{:04}_completed.ply", e.id)),
            &partial,
        )
        .unwrap();
        io::write_json(
            &fake.join(format!("branch_{:04}_skeleton_est.json", e.id)),
            &SkeletonDoc::from_skeleton(&sk),
        )
        .unwrap();
    }
    let eval = tmp.path().join("eval");
    let (code, _, err) = run_cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
        "evaluate",
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--completed",
        fake.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let report = fs::read_to_string(eval.join("report.csv")).unwrap();
    let strip = |prefix: &str| -> Vec<String> {
        report
            .lines()
            .filter(|l| l.starts_with(prefix))
            .map(|l| l[prefix.len()..].to_string())
            .collect()
    };
    let (raw, completed) = (strip("raw,"), strip("completed,"));
    assert!(!raw.is_empty());
    assert_eq!(raw, completed);
    let e: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(e["decision_flips"].as_array().unwrap().len(), 0);
}

#[test]
fn single_cloud_commands_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), 1);
    let data = tmp.path().join("data");
    assert_eq!(
        run_cli(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
            "generate"
        ])
        .0,
        0
    );
    let complete = data.join("branch_0001_complete.ply");
    let skeleton = data.join("branch_0001_skeleton.json");
    let damaged = tmp.path().join("damaged.xyz");
    let (code, _, err) = run_cli(&[
        "--out",
        damaged.to_str().unwrap(),
        "corrupt",
        "--input",
        complete.to_str().unwrap(),
        "--occlusion",
        "0.4",
        "--skeleton",
        skeleton.to_str().unwrap(),
        "--noise",
        "0.0005",
    ]);
    assert_eq!(code, 0, "{err}");
    let n_complete = io::read_cloud(&complete).unwrap().len();
    let n_damaged = io::read_cloud(&damaged).unwrap().len();
    assert!(n_damaged < n_complete && n_damaged > n_complete / 2);

    let (code, out, err) = run_cli(&[
        "loss-eval",
        "--pred",
        damaged.to_str().unwrap(),
        "--gt",
        complete.to_str().unwrap(),
        "--skeleton",
        skeleton.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for key in ["chamfer", "repulsion", "variance"] {
        assert!(v[key]["value"].as_f64().unwrap().is_finite());
    }

    let (code, out, err) = run_cli(&[
        "characterize",
        "--input",
        complete.to_str().unwrap(),
        "--skeleton",
        skeleton.to_str().unwrap(),
        "--id",
        "1",
    ]);
    assert_eq!(code, 0, "{err}");
    let traits = tmp.path().join("traits.csv");
    fs::write(&traits, &out).unwrap();
    let (code, out, _) = run_cli(&[
        "prune",
        "--traits",
        traits.to_str().unwrap(),
        "--diameter-cutoff-cm",
        "0.1",
    ]);
    assert_eq!(code, 0);
    let plan = branchkit::pruning::plan_from_json(&out).unwrap();
    assert_eq!(plan.decisions[0].order, Some(1));

    let (code, _, _) = run_cli(&[
        "corrupt",
        "--input",
        complete.to_str().unwrap(),
        "--gap",
        "1,2",
    ]);
    assert_eq!(code, 2);
}
