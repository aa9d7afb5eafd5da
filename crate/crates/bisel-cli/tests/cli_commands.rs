//! End-to-end command tests on small synthetic inputs: exit codes, output
//! files, and byte-identical reruns.

use std::io::Write;
use std::path::Path;

use bisel_cli::run;

fn write_file(path: &Path, content: &str) {
    let mut f = std::fs::File::create(path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
}

/// Noiseless toy with a known support: y depends on f1, f2 (group 1) only.
fn toy_csv(path: &Path) {
    let mut rows = String::from("f1,f2,f3,f4,y\n");
    let vals = [
        [0.5, -1.2, 0.3, 0.8],
        [1.0, 0.4, -0.5, 0.2],
        [-0.7, 0.9, 1.1, -0.3],
        [0.2, -0.8, 0.6, 1.4],
        [-1.1, 0.3, -0.2, 0.5],
        [0.9, 1.2, 0.4, -0.9],
        [-0.4, -0.5, 0.7, 0.1],
        [1.3, 0.6, -0.8, -0.6],
        [0.1, -1.0, 0.9, 0.7],
        [-0.9, 0.8, 0.2, -1.2],
        [0.6, 0.1, -1.3, 0.9],
        [-0.2, -0.6, 0.5, -0.4],
        [0.8, 1.0, -0.1, 0.3],
        [-1.3, 0.2, 0.8, -0.7],
        [0.4, -0.9, -0.6, 1.1],
        [1.1, 0.7, 0.1, -0.2],
        [-0.6, -0.3, 1.2, 0.6],
        [0.3, 1.1, -0.9, -1.0],
        [-0.8, -1.1, 0.4, 0.8],
        [0.7, 0.5, -0.4, -0.5],
    ];
    for v in vals {
        let y = 2.0 * v[0] - 1.5 * v[1];
        rows.push_str(&format!("{},{},{},{},{}\n", v[0], v[1], v[2], v[3], y));
    }
    write_file(path, &rows);
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn fit_recovers_generating_support_on_noiseless_toy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let out = dir.path().join("out");
    let code = run(args(&[
        "bisel",
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--auto-groups",
        "2",
        "--loss",
        "huber",
        "--penalty",
        "mcp",
        "--lambda-grid",
        "0.05,0.2,0.8",
        "--theta-grid",
        "0.0,0.2",
        "--folds",
        "4",
        "--seed",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let coefs = bisel_cli::report::read_coefficients(&out.join("coefficients.csv")).unwrap();
    let features: Vec<&str> = coefs.iter().map(|(f, _, _)| f.as_str()).collect();
    assert!(features.contains(&"f1"), "{features:?}");
    assert!(features.contains(&"f2"), "{features:?}");
    assert!(!features.contains(&"f3"), "{features:?}");
    assert!(!features.contains(&"f4"), "{features:?}");
    assert!(out.join("cv_table.csv").exists());
    assert!(out.join("run_meta.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let common = [
        "--response",
        "y",
        "--auto-groups",
        "2",
        "--lambda-grid",
        "0.1,0.4",
        "--theta-grid",
        "0.0,0.3",
        "--folds",
        "4",
        "--seed",
        "11",
    ];
    for (out_a, out_b) in [("a", "b")] {
        let run_once = |out: &str| {
            let out_dir = dir.path().join(out);
            let mut argv = args(&["bisel", "fit", "--data", data.to_str().unwrap()]);
            argv.extend(args(&common));
            argv.extend(args(&["--out-dir", out_dir.to_str().unwrap()]));
            assert_eq!(run(argv), 0);
            out_dir
        };
        let a = run_once(out_a);
        let b = run_once(out_b);
        for file in ["coefficients.csv", "cv_table.csv", "run_meta.json"] {
            assert_eq!(
                read(&a.join(file)),
                read(&b.join(file)),
                "{file} differs between identical runs"
            );
        }
    }
}

#[test]
fn cv_writes_table_without_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let out = dir.path().join("out");
    let code = run(args(&[
        "bisel",
        "cv",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--auto-groups",
        "2",
        "--lambda-grid",
        "0.1,0.4",
        "--theta-grid",
        "0.0",
        "--folds",
        "4",
        "--seed",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    assert!(out.join("cv_table.csv").exists());
    assert!(!out.join("coefficients.csv").exists());
    let table = read(&out.join("cv_table.csv"));
    // header plus one row per (lambda, theta) cell
    assert_eq!(table.lines().count(), 1 + 2);
    assert!(table.starts_with("lambda,theta,score\n"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let code = run(args(&["bisel", "fit", "--bogus-flag", "1"]));
    assert_eq!(code, 1);
    let code = run(args(&["bisel", "definitely-not-a-command"]));
    assert_eq!(code, 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(args(&["bisel", "--help"])), 0);
    assert_eq!(run(args(&["bisel", "fit", "--help"])), 0);
}

#[test]
fn missing_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(args(&[
        "bisel",
        "fit",
        "--data",
        "/nonexistent/nope.csv",
        "--response",
        "y",
        "--auto-groups",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
}

#[test]
fn bad_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let cfg = dir.path().join("cfg.json");
    write_file(&cfg, r#"{"loss": "huber", "not_a_field": true}"#);
    let code = run(args(&[
        "bisel",
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--auto-groups",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]));
    assert_eq!(code, 1);
}

#[test]
fn simulate_smoke_test_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    write_file(
        &cfg,
        r#"{
  "sim": {
    "n": 40,
    "group_sizes": [4, 4, 6, 6, 5],
    "a": 0.8,
    "b": 0.5,
    "beta_star": [[3, 3, 3, 3], [3, 3, 3, 3]],
    "error_kind": {"kind": "gaussian"},
    "replications": 2,
    "seed": 9
  },
  "methods": [
    {"name": "LS-GLasso", "loss": {"kind": "least_squares"}, "penalty": {"kind": "lasso"},
     "stage": "one_stage"},
    {"name": "Huber-GMCP-HT", "loss": {"kind": "huber", "alpha": 1.345},
     "penalty": {"kind": "mcp", "b": 3.0}, "stage": "two_stage"}
  ],
  "grid": {
    "lam_values": [0.1, 0.5],
    "theta_values": [0.0, 0.25],
    "folds": 4,
    "trim_frac": 0.2,
    "score_kind": "trimmed_mse",
    "max_support_frac": null
  },
  "solver": {"max_iters": 500, "tol_obj": 1e-6, "tol_stat": 1e-4}
}"#,
    );
    let out = dir.path().join("out");
    let code = run(args(&[
        "bisel",
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let table = read(&out.join("table.csv"));
    assert!(table.starts_with("method,l2,l1,MS,GS,FPR,FNR,GFPR,GFNR\n"));
    assert_eq!(table.lines().count(), 3);
    let long = read(&out.join("table_long.csv"));
    // 8 metric rows per method plus the header
    assert_eq!(long.lines().count(), 1 + 2 * 8);

    // reruns are byte-identical
    let out2 = dir.path().join("out2");
    assert_eq!(
        run(args(&[
            "bisel",
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out2.to_str().unwrap(),
        ])),
        0
    );
    assert_eq!(read(&out.join("table.csv")), read(&out2.join("table.csv")));
    assert_eq!(
        read(&out.join("table_long.csv")),
        read(&out2.join("table_long.csv"))
    );
}

/// Small pipeline input: 12 informative-ish columns, smooth response.
fn pipeline_csv(path: &Path) {
    let mut rows = String::from(
        "g1,g2,g3,g4,g5,g6,g7,g8,g9,g10,g11,g12,y\n",
    );
    let mut state = 123456789u64;
    let mut unit = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) as f64) / (u32::MAX as f64) * 2.0 - 1.0
    };
    for _ in 0..30 {
        let g: Vec<f64> = (0..12).map(|_| unit()).collect();
        let y = (2.0 * g[0]).sin() + g[1] * g[1] - 0.5 * g[2] + 0.05 * unit();
        let cells: Vec<String> = g.iter().map(|v| v.to_string()).collect();
        rows.push_str(&format!("{},{}\n", cells.join(","), y));
    }
    write_file(path, &rows);
}

#[test]
fn pipeline_emits_split_errors_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("genes.csv");
    pipeline_csv(&data);
    let out = dir.path().join("out");
    let code = run(args(&[
        "bisel",
        "pipeline",
        "--data",
        data.to_str().unwrap(),
        "--response",
        "y",
        "--var-screen",
        "8",
        "--corr-screen",
        "4",
        "--n-basis",
        "4",
        "--holdout",
        "5",
        "--splits",
        "3",
        "--lambda-grid",
        "0.05,0.2,0.8",
        "--theta-grid",
        "0.0,0.1",
        "--folds",
        "4",
        "--seed",
        "21",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    let splits = read(&out.join("splits_mse.csv"));
    assert_eq!(splits.lines().count(), 1 + 3);
    assert!(splits.starts_with("split,mse\n"));
    let residuals = read(&out.join("residuals.csv"));
    assert_eq!(residuals.lines().count(), 1 + 30);
    let coefs = read(&out.join("coefficients.csv"));
    assert!(coefs.starts_with("feature,group,value\n"));
    // expanded feature names carry the source gene and basis index
    for line in coefs.lines().skip(1) {
        assert!(line.contains("__b"), "{line}");
    }
}

#[test]
fn pipeline_split_errors_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("genes.csv");
    pipeline_csv(&data);
    let run_once = |name: &str| {
        let out = dir.path().join(name);
        let code = run(args(&[
            "bisel",
            "pipeline",
            "--data",
            data.to_str().unwrap(),
            "--response",
            "y",
            "--var-screen",
            "6",
            "--corr-screen",
            "3",
            "--n-basis",
            "4",
            "--holdout",
            "6",
            "--splits",
            "2",
            "--lambda-grid",
            "0.1,0.5",
            "--theta-grid",
            "0.0",
            "--folds",
            "3",
            "--seed",
            "77",
            "--out-dir",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        out
    };
    let a = run_once("a");
    let b = run_once("b");
    for file in ["splits_mse.csv", "residuals.csv", "coefficients.csv", "run_meta.json"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
}
