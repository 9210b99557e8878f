//! End-to-end tests of the CLI surface: worked evaluation numbers, rerun
//! determinism, the error contracts, profiles, manifests, and thread caps.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use selectorlab::dataset::Dataset;
use selectorlab::io::{save_dataset_binary, save_dataset_csv, ScoreBundle};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_selectorlab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawning selectorlab")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(bin())
        .args(args)
        .env(key, value)
        .output()
        .expect("spawning selectorlab")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// Deterministic labeled dataset with a known error structure: class-coded
/// features in the plane, boundary noise in the logits, and a flipped-label
/// region the logits cannot see.
fn world(seed: u64, n: usize, name: &str) -> Dataset {
    let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let means = [[2.5, 0.0], [-2.5, 0.0], [0.0, 2.5]];
    let mut features = Array2::<f32>::zeros((n, 2));
    let mut logits = Array2::<f32>::zeros((n, 3));
    let mut labels = Vec::with_capacity(n);
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let y = (next() * 3.0) as usize % 3;
        let gauss = |next: &mut dyn FnMut() -> f64| {
            let u1 = next().max(1e-12);
            let u2 = next();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let z = [means[y][0] + gauss(&mut next), means[y][1] + gauss(&mut next)];
        features[[i, 0]] = z[0] as f32;
        features[[i, 1]] = z[1] as f32;
        let mut scores = [0.0f64; 3];
        for (c, mean) in means.iter().enumerate() {
            let d2 = (z[0] - mean[0]).powi(2) + (z[1] - mean[1]).powi(2);
            scores[c] = -0.5 * d2 + gauss(&mut next);
        }
        let mut pred = 0usize;
        for c in 1..3 {
            if scores[c] > scores[pred] {
                pred = c;
            }
        }
        for c in 0..3 {
            logits[[i, c]] = scores[c] as f32;
        }
        if (z[0] - 1.2).powi(2) + (z[1] - 1.2).powi(2) < 1.0 && next() < 0.8 {
            pred = (y + 1) % 3;
        }
        labels.push(y);
        predictions.push(pred);
    }
    Dataset::new(name, features, logits, labels, Some(predictions)).unwrap()
}

fn write_world(dir: &Path) -> (PathBuf, PathBuf) {
    let train = world(7, 900, "train");
    let test = world(8, 600, "test");
    let train_path = dir.join("train.scf");
    let test_path = dir.join("test.scf");
    save_dataset_binary(&train, &train_path).unwrap();
    save_dataset_binary(&test, &test_path).unwrap();
    (train_path, test_path)
}

#[test]
fn eval_reproduces_worked_three_sample_numbers() {
    let dir = tempfile::tempdir().unwrap();
    // Labels [0,0,1] with predictions all 0: correctness [T, T, F].
    let features = Array2::<f32>::zeros((3, 2));
    let logits = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    let ds = Dataset::new(
        "t3",
        features,
        logits,
        vec![0, 0, 1],
        Some(vec![0, 0, 0]),
    )
    .unwrap();
    let ds_path = dir.path().join("t3.scf");
    save_dataset_binary(&ds, &ds_path).unwrap();

    let mut bundle = ScoreBundle::default();
    bundle.push("demo", vec![3.0, 2.0, 1.0]).unwrap();
    // A strictly increasing transform of the same scores must land on an
    // identical ranking row.
    bundle
        .push("demo-exp", vec![3.0f64.exp(), 2.0f64.exp(), 1.0f64.exp()])
        .unwrap();
    let bundle_path = dir.path().join("demo.scb");
    bundle.save(&bundle_path).unwrap();

    let out_dir = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--test",
        ds_path.to_str().unwrap(),
        "--bundle",
        bundle_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("reports/demo.json")).unwrap(),
    )
    .unwrap();
    let aurc = report["aurc"].as_f64().unwrap();
    assert!((aurc - 1.0 / 9.0).abs() < 1e-15, "aurc = {aurc}");
    assert_eq!(report["naurc"].as_f64().unwrap(), 0.0);
    assert!((report["aurc_x100"].as_f64().unwrap() - 100.0 / 9.0).abs() < 1e-12);

    let transformed: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("reports/demo-exp.json")).unwrap(),
    )
    .unwrap();
    for key in ["aurc", "naurc", "oracle_aurc", "full_risk"] {
        assert_eq!(report[key], transformed[key], "{key} differs");
    }
}

#[test]
fn score_then_eval_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let run_dir = dir.path().join("run");
    let out = run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "msp,rlog,delta-mds,delta-knn,delta-mds-rlog,delta-knn-rlog",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--test",
        test_path.to_str().unwrap(),
        "--bundle",
        run_dir.join("scores.scb").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--svg",
    ]);
    assert_ok(&out);

    // Fused in-process path must agree exactly with the file pipeline.
    let test = selectorlab::io::load_dataset_binary(&test_path).unwrap();
    let bundle = ScoreBundle::load(&run_dir.join("scores.scb")).unwrap();
    let mask = test.correctness();
    for (name, values) in &bundle.columns {
        let report = selectorlab::eval::evaluate(values, &mask.mask).unwrap();
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(eval_dir.join(format!("reports/{name}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(json["aurc"].as_f64().unwrap().to_bits(), report.aurc.to_bits());
    }

    let ranking = std::fs::read_to_string(eval_dir.join("ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 7, "header + 6 scores");
    assert!(eval_dir.join("risk_coverage.svg").exists());

    // The combinations should not fall behind their parents on this world.
    let naurc_of = |name: &str| -> f64 {
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(eval_dir.join(format!("reports/{name}.json"))).unwrap(),
        )
        .unwrap();
        json["naurc"].as_f64().unwrap()
    };
    assert!(naurc_of("delta-mds-rlog") <= naurc_of("delta-mds") + 0.01);
    assert!(naurc_of("delta-mds-rlog") <= naurc_of("rlog") + 0.01);
    assert!(naurc_of("delta-knn-rlog") <= naurc_of("delta-knn") + 0.01);
    assert!(naurc_of("delta-knn-rlog") <= naurc_of("rlog") + 0.01);
}

// The CLI half of the determinism criterion: every command, rerun with the
// same seed, produces byte-identical primary outputs.
#[test]
fn acceptance_cli_rerun_byte_determinism() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());

    let spec = r#"{
        "dim": 1, "n": 400, "seed": 3, "prior_correct": 0.7,
        "correct_density": {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]},
        "wrong_density": {"type": "gaussian", "mean": [2.0], "cov": [[1.0]]}
    }"#;
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec).unwrap();

    let files_equal = |a: &Path, b: &Path| {
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(b).unwrap(),
            "{} differs from {}",
            a.display(),
            b.display()
        );
    };

    for pass in ["a", "b"] {
        let synth_dir = dir.path().join(format!("synth-{pass}"));
        assert_ok(&run(&[
            "synth",
            "--spec",
            spec_path.to_str().unwrap(),
            "--out",
            synth_dir.to_str().unwrap(),
        ]));
        let score_dir = dir.path().join(format!("score-{pass}"));
        assert_ok(&run(&[
            "score",
            "--train",
            train_path.to_str().unwrap(),
            "--test",
            test_path.to_str().unwrap(),
            "--scores",
            "msp,delta-knn-rlog",
            "--seed",
            "5",
            "--out",
            score_dir.to_str().unwrap(),
        ]));
        let eval_dir = dir.path().join(format!("eval-{pass}"));
        assert_ok(&run(&[
            "eval",
            "--test",
            test_path.to_str().unwrap(),
            "--bundle",
            score_dir.join("scores.scb").to_str().unwrap(),
            "--out",
            eval_dir.to_str().unwrap(),
            "--svg",
        ]));
        let sweep_dir = dir.path().join(format!("sweep-{pass}"));
        assert_ok(&run(&[
            "sweep",
            "--train",
            train_path.to_str().unwrap(),
            "--test",
            test_path.to_str().unwrap(),
            "--score",
            "delta-knn",
            "--k",
            "5,25",
            "--out",
            sweep_dir.to_str().unwrap(),
        ]));
        let verify_dir = dir.path().join(format!("verify-{pass}"));
        assert_ok(&run(&[
            "verify",
            "T1_msp",
            "T2_delta_mds",
            "--out",
            verify_dir.to_str().unwrap(),
        ]));
    }

    for rel in [
        "synth-PASS/data.scf",
        "synth-PASS/oracle.csv",
        "synth-PASS/hypothesis.csv",
        "synth-PASS/synth_meta.json",
        "score-PASS/scores.scb",
        "score-PASS/score_meta.json",
        "score-PASS/scores/msp.csv",
        "score-PASS/scores/delta-knn-rlog.csv",
        "eval-PASS/ranking.csv",
        "eval-PASS/risk_coverage.svg",
        "eval-PASS/reports/msp.json",
        "sweep-PASS/sweep.csv",
        "verify-PASS/verification.json",
    ] {
        let a = dir.path().join(rel.replace("PASS", "a"));
        let b = dir.path().join(rel.replace("PASS", "b"));
        files_equal(&a, &b);
    }
    println!(
        "criterion 11 (CLI): PASS ({:.2}s) - all commands byte-identical across reruns",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn verify_all_reports_six_theorems() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ver");
    let out = run(&["verify", "--all", "--out", out_dir.to_str().unwrap()]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for id in [
        "T1_msp",
        "T1_rlog",
        "T2_delta_mds",
        "T3_delta_knn",
        "L2_combination",
        "C_averaged_knn",
    ] {
        assert!(stdout.contains(&format!("{id}: PASS")), "missing {id}: {stdout}");
    }
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("verification.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["theorems"].as_array().unwrap().len(), 6);
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
}

#[test]
fn verify_single_theorem_reports_exact_rho() {
    let out = run(&["verify", "T2_delta_mds"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("rho_true_params=1.000000"),
        "true-parameter rho missing: {stdout}"
    );
}

#[test]
fn verify_rejects_unknown_theorem() {
    let out = run(&["verify", "T9_nonsense"]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown theorem"), "stderr: {stderr}");
}

#[test]
fn score_delta_mds_on_all_correct_train_advises_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let mut train = world(3, 300, "train");
    train.predictions = train.labels.clone();
    train.derived_predictions = false;
    let train_path = dir.path().join("all-correct.scf");
    save_dataset_binary(&train, &train_path).unwrap();
    let test = world(4, 100, "test");
    let test_path = dir.path().join("test.scf");
    save_dataset_binary(&test, &test_path).unwrap();

    let out = run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "delta-mds",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.to_lowercase().contains("fall back"),
        "stderr should advise a fallback: {stderr}"
    );
}

#[test]
fn score_rejects_unknown_score_names() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let out = run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "msp,frobnicate",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

#[test]
fn sweep_marks_best_cell_and_not_applicable_cells() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let sweep_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--score",
        "delta-mds",
        "--fraction",
        "0.004,0.5,1.0",
        "--out",
        sweep_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let table = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4, "header + 3 rows: {table}");
    let best_count = lines.iter().filter(|l| l.contains(",*,")).count();
    assert_eq!(best_count, 1, "exactly one best cell: {table}");
    // The tiny fraction leaves the wrong partition under-populated.
    assert!(
        lines[1].contains("not applicable"),
        "expected a not-applicable ablation row: {table}"
    );
}

#[test]
fn sweep_auto_lambda_matches_its_own_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());

    // Discover the balanced lambda, then sweep a grid containing it: the
    // auto row and the fixed row must coincide.
    let first = dir.path().join("sweep-auto");
    assert_ok(&run(&[
        "sweep",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--score",
        "delta-mds-rlog",
        "--lambda",
        "auto",
        "--out",
        first.to_str().unwrap(),
    ]));
    let table = std::fs::read_to_string(first.join("sweep.csv")).unwrap();
    let row = table.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let lambda_used = fields[4].to_string();
    let naurc_auto = fields[6].to_string();

    let second = dir.path().join("sweep-grid");
    assert_ok(&run(&[
        "sweep",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--score",
        "delta-mds-rlog",
        "--lambda",
        &format!("auto,{lambda_used}"),
        "--out",
        second.to_str().unwrap(),
    ]));
    let table = std::fs::read_to_string(second.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let naurc_of = |row: &str| row.split(',').nth(6).unwrap().to_string();
    assert_eq!(naurc_of(rows[0]), naurc_of(rows[1]), "{table}");
    assert_eq!(naurc_of(rows[0]), naurc_auto);
}

#[test]
fn manifest_names_and_csv_datasets_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let train = world(11, 400, "train");
    let test = world(12, 200, "test");
    save_dataset_csv(&train, &dir.path().join("train.csv")).unwrap();
    save_dataset_binary(&test, &dir.path().join("test.scf")).unwrap();
    let manifest = r#"{
        "datasets": [
            {"name": "train-main", "path": "train.csv"},
            {"name": "test-main", "path": "test.scf"}
        ],
        "mixes": [
            {"name": "test-mixed", "seed": 4, "sources": [
                {"dataset": "test-main", "fraction": 1.0},
                {"dataset": "test-main", "count": 50}
            ]}
        ]
    }"#;
    let manifest_path = dir.path().join("manifest.json");
    std::fs::write(&manifest_path, manifest).unwrap();

    let run_dir = dir.path().join("run");
    let out = run(&[
        "score",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--train",
        "train-main",
        "--test",
        "test-mixed",
        "--scores",
        "msp,rlog",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let bundle = ScoreBundle::load(&run_dir.join("scores.scb")).unwrap();
    assert_eq!(bundle.len(), 250, "full test plus a 50-sample draw");

    // Mixed test sets surface their per-sample source column.
    let provenance = std::fs::read_to_string(run_dir.join("provenance.csv")).unwrap();
    assert_eq!(provenance.lines().count(), 251, "header + 250 samples");
    assert!(provenance.lines().nth(1).unwrap().ends_with(",0"));
    assert!(provenance.lines().last().unwrap().ends_with(",1"));
}

#[test]
fn profile_presets_flow_into_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let run_dir = dir.path().join("run");
    let out = run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "delta-knn,delta-knn-rlog",
        "--profile",
        "vision-clip",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_dir.join("score_meta.json")).unwrap(),
    )
    .unwrap();
    let combo = &meta["scores"]["delta-knn-rlog"];
    assert_eq!(combo["lambda"].as_f64().unwrap(), 10.0);
    assert_eq!(combo["lambda_source"], "profile");
    assert_eq!(meta["profile"], "vision-clip");
    // The neighbor count default comes from the profile and lands in the
    // hyperparameter record.
    assert_eq!(meta["scores"]["delta-knn"]["k"].as_u64().unwrap(), 25);
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let run_a = dir.path().join("run-a");
    let run_b = dir.path().join("run-b");
    assert_ok(&run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "delta-knn,delta-mds",
        "--out",
        run_a.to_str().unwrap(),
    ]));
    assert_ok(&run_env(
        &[
            "score",
            "--train",
            train_path.to_str().unwrap(),
            "--test",
            test_path.to_str().unwrap(),
            "--scores",
            "delta-knn,delta-mds",
            "--out",
            run_b.to_str().unwrap(),
        ],
        "SELECTORLAB_THREADS",
        "1",
    ));
    assert_eq!(
        std::fs::read(run_a.join("scores.scb")).unwrap(),
        std::fs::read(run_b.join("scores.scb")).unwrap(),
        "single-threaded scores must match the parallel ones bit for bit"
    );
}

#[test]
fn group_by_aggregates_within_categories_first() {
    let dir = tempfile::tempdir().unwrap();
    let test = world(21, 300, "test");
    let test_path = dir.path().join("test.scf");
    save_dataset_binary(&test, &test_path).unwrap();

    let mut bundle = ScoreBundle::default();
    let scores: Vec<f64> = (0..300).map(|i| (i as f64 * 0.817).sin()).collect();
    bundle.push("demo", scores).unwrap();
    let bundle_path = dir.path().join("b.scb");
    bundle.save(&bundle_path).unwrap();

    let mut map = String::from("index,group\n");
    for i in 0..300 {
        map.push_str(&format!("{},{}\n", i, if i % 2 == 0 { "blur" } else { "noise" }));
    }
    let map_path = dir.path().join("groups.csv");
    std::fs::write(&map_path, &map).unwrap();

    let out_dir = dir.path().join("eval");
    assert_ok(&run(&[
        "eval",
        "--test",
        test_path.to_str().unwrap(),
        "--bundle",
        bundle_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--group-by",
        map_path.to_str().unwrap(),
    ]));
    let grouped = std::fs::read_to_string(out_dir.join("grouped.csv")).unwrap();
    assert!(grouped.contains("demo,blur,150,"));
    assert!(grouped.contains("demo,noise,150,"));
    assert!(grouped.contains("demo,(grouped mean),2,"));
}

#[test]
fn report_merges_eval_outputs_into_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let (train_path, test_path) = write_world(dir.path());
    let run_dir = dir.path().join("run");
    assert_ok(&run(&[
        "score",
        "--train",
        train_path.to_str().unwrap(),
        "--test",
        test_path.to_str().unwrap(),
        "--scores",
        "msp,rlog",
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let eval_dir = dir.path().join("eval");
    assert_ok(&run(&[
        "eval",
        "--test",
        test_path.to_str().unwrap(),
        "--bundle",
        run_dir.join("scores.scb").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    let report_dir = dir.path().join("report");
    assert_ok(&run(&[
        "report",
        "--inputs",
        eval_dir.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]));
    let ranking = std::fs::read_to_string(report_dir.join("ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 3, "header + 2 scores: {ranking}");
}
