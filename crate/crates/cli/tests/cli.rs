use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn degenlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .args(args)
        .env_remove("DEGENLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn constant_problem(name: &str, n: usize, forcing: Value, solver: Value) -> Value {
    json!({
        "name": name,
        "grid": { "d": 2, "nu": 1.0, "period": 1.0, "n_tangential": n, "n_vertical": n },
        "coefficients": { "constant": { "a": [[1.0, 0.2], [0.2, 0.8]], "b": [0.3, 1.2], "c": 0.5 } },
        "forcing": forcing,
        "solver": solver,
    })
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|c| *c == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn zero_forcing_gives_zero_solution() {
    let tmp = TempDir::new().unwrap();
    let config = json!({
        "problems": [constant_problem("zero", 16, json!({"kind": "zero"}), json!({"method": "fdm"}))],
    });
    let path = write_config(tmp.path(), &config);
    let out_dir = tmp.path().join("out");
    let out = degenlab(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let u = csv_column(&out_dir.join("zero.csv"), "u");
    assert_eq!(u.len(), 16 * 17);
    assert!(u.iter().all(|&v| v == 0.0));
    assert_eq!(read_json(&out_dir.join("summary.json"))["pass"], true);
}

#[test]
fn vanishing_vertical_drift_is_rejected_before_solving() {
    let tmp = TempDir::new().unwrap();
    let mut problem = constant_problem("p", 8, json!({"kind": "zero"}), json!({"method": "fdm"}));
    problem["coefficients"]["constant"]["b"] = json!([0.3, 0.0]);
    let path = write_config(tmp.path(), &json!({ "problems": [problem] }));
    let out_dir = tmp.path().join("out");
    let out = degenlab(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.join("p.csv").exists());
}

#[test]
fn schema_violations_exit_2() {
    let tmp = TempDir::new().unwrap();
    let mut problem = constant_problem("p", 8, json!({"kind": "zero"}), json!({"method": "fdm"}));
    problem["colour"] = json!("blue");
    let path = write_config(tmp.path(), &json!({ "problems": [problem] }));
    assert_eq!(
        code(&degenlab(&["run", "--config", path.to_str().unwrap()])),
        2
    );

    let problem = constant_problem(
        "p",
        8,
        json!({"kind": "zero"}),
        json!({"method": "fdm", "tol": 0.0}),
    );
    let path = write_config(tmp.path(), &json!({ "problems": [problem] }));
    assert_eq!(
        code(&degenlab(&["run", "--config", path.to_str().unwrap()])),
        2
    );

    let problem = constant_problem(
        "p",
        8,
        json!({"kind": "zero"}),
        json!({"method": "spectral"}),
    );
    let config = json!({ "problems": [problem], "probes": [{ "name": "xddu", "problem": "q", "radii": [0.1] }] });
    let path = write_config(tmp.path(), &config);
    assert_eq!(
        code(&degenlab(&["run", "--config", path.to_str().unwrap()])),
        2
    );
}

#[test]
fn solver_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    let solver = json!({"method": "fdm", "backend": "iterative", "max_iter": 1, "tol": 1e-15});
    let problem = constant_problem("p", 16, json!({"kind": "constant", "value": 1.0}), solver);
    let path = write_config(tmp.path(), &json!({ "problems": [problem] }));
    let out = tmp.path().join("p.csv");
    assert_eq!(
        code(&degenlab(&[
            "solve-fdm",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        3
    );
}

#[test]
fn failed_probe_exits_1_after_writing_reports() {
    let tmp = TempDir::new().unwrap();
    let problem = constant_problem(
        "p",
        32,
        json!({"kind": "band_limited", "max_mode": 2}),
        json!({"method": "spectral"}),
    );
    let config = json!({
        "problems": [problem],
        "probes": [{ "name": "schauder", "problem": "p", "r": 0.125, "r0": 0.25, "cap": 1e-6 }],
    });
    let path = write_config(tmp.path(), &config);
    let out_dir = tmp.path().join("out");
    let out = degenlab(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(read_json(&out_dir.join("summary.json"))["pass"], false);
    assert!(out_dir.join("probes.csv").exists());
}

fn demo_config() -> Value {
    let forcing = json!({"kind": "band_limited", "max_mode": 3});
    json!({
        "seed": 5,
        "problems": [
            constant_problem("spectral", 32, forcing.clone(), json!({"method": "spectral"})),
            constant_problem("fdm", 32, forcing, json!({"method": "fdm"})),
        ],
        "probes": [
            { "name": "schauder", "problem": "spectral", "r": 0.125, "r0": 0.25 },
            { "name": "global", "problem": "spectral" },
            { "name": "xddu", "problem": "spectral", "radii": [0.125, 0.25] },
            { "name": "xddu", "problem": "fdm", "radii": [0.125, 0.25], "center": [0.25] },
            { "name": "maxp", "problem": "fdm" },
        ],
    })
}

#[test]
fn runs_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &demo_config());
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let out = degenlab(&[
            "run",
            "--config",
            path.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        let a = std::fs::read(dirs[0].join(&name)).unwrap();
        let b = std::fs::read(dirs[1].join(&name)).unwrap();
        assert!(a == b, "{name:?} differs between runs");
    }
}

#[test]
fn compare_reports_differences_and_rejects_mismatched_grids() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &demo_config());
    let cfg = path.to_str().unwrap();
    let (spectral_csv, fdm) = (tmp.path().join("s.csv"), tmp.path().join("f.csv"));
    assert_eq!(
        code(&degenlab(&[
            "solve-spectral",
            "--config",
            cfg,
            "--problem",
            "spectral",
            "--out",
            spectral_csv.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&degenlab(&[
            "solve-fdm",
            "--config",
            cfg,
            "--problem",
            "fdm",
            "--out",
            fdm.to_str().unwrap()
        ])),
        0
    );

    let same = degenlab(&[
        "compare",
        spectral_csv.to_str().unwrap(),
        spectral_csv.to_str().unwrap(),
    ]);
    let same: Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(same["sup"], 0.0);
    assert_eq!(same["l2"], 0.0);

    let cross = degenlab(&[
        "compare",
        spectral_csv.to_str().unwrap(),
        fdm.to_str().unwrap(),
    ]);
    let cross: Value = serde_json::from_slice(&cross.stdout).unwrap();
    let sup = cross["sup"].as_f64().unwrap();
    let u_sup = csv_column(&spectral_csv, "u")
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(
        sup > 0.0 && sup < 0.05 * u_sup,
        "sup difference {sup} against |u| {u_sup}"
    );
    assert_eq!(cross["layers"].as_array().unwrap().len(), 33);

    let mut small = demo_config();
    small["problems"][1]["grid"]["n_tangential"] = json!(16);
    let path = write_config(tmp.path(), &small);
    let coarse = tmp.path().join("c.csv");
    let args = [
        "solve-fdm",
        "--config",
        path.to_str().unwrap(),
        "--problem",
        "fdm",
        "--out",
        coarse.to_str().unwrap(),
    ];
    assert_eq!(code(&degenlab(&args)), 0);
    assert_eq!(
        code(&degenlab(&[
            "compare",
            spectral_csv.to_str().unwrap(),
            coarse.to_str().unwrap()
        ])),
        2
    );
}

#[test]
fn matrix_dump_and_norms() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &demo_config());
    let (sol, matrix, report) = (
        tmp.path().join("u.csv"),
        tmp.path().join("a.txt"),
        tmp.path().join("r.json"),
    );
    let out = degenlab(&[
        "solve-fdm",
        "--config",
        path.to_str().unwrap(),
        "--problem",
        "fdm",
        "--out",
        sol.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--matrix",
        matrix.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let unknowns = read_json(&report)["report"]["unknowns"].as_u64().unwrap();
    assert_eq!(unknowns, 32 * 32);
    for line in std::fs::read_to_string(&matrix).unwrap().lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts.len(), 3);
        assert!(parts[0].parse::<u64>().unwrap() < unknowns);
        parts[2].parse::<f64>().unwrap();
    }

    let norms = degenlab(&["norms", sol.to_str().unwrap(), "--alpha", "0.5", "--k", "1"]);
    assert_eq!(
        code(&norms),
        0,
        "{}",
        String::from_utf8_lossy(&norms.stderr)
    );
    let report: Value = serde_json::from_slice(&norms.stdout).unwrap();
    let u_sup = csv_column(&sol, "u")
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    // serde_json parsing may be off by one ulp
    assert!((report["sup_norm"].as_f64().unwrap() - u_sup).abs() <= 2.0 * f64::EPSILON * u_sup);
    assert!(report["c_k_alpha"].as_f64().unwrap() > u_sup);
}

#[test]
fn batch_probe_writes_array_and_table() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &demo_config());
    let out = tmp.path().join("xddu.json");
    let run = degenlab(&[
        "probe",
        "--name",
        "xddu",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_json(&out).as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let single = tmp.path().join("maxp.json");
    let run = degenlab(&[
        "probe",
        "--name",
        "maxp",
        "--config",
        path.to_str().unwrap(),
        "--out",
        single.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    assert_eq!(read_json(&single)["name"], "maxp");
    assert_eq!(
        code(&degenlab(&[
            "probe",
            "--name",
            "bogus",
            "--config",
            path.to_str().unwrap(),
            "--out",
            "x"
        ])),
        2
    );
}

#[test]
fn kummer_eval_prints_wronskian() {
    let out = degenlab(&["kummer-eval", "1.5", "0", "1", "2"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let w = v["W"][0].as_f64().unwrap();
    let expected = -(2f64).exp() / std::f64::consts::PI.sqrt();
    assert!((w - expected).abs() < 1e-12 * expected.abs());
    let m = v["M"][0].as_f64().unwrap();
    let u = v["U"][0].as_f64().unwrap();
    assert!(m.is_finite() && u.is_finite());
    assert_eq!(code(&degenlab(&["kummer-eval", "1", "0", "-1", "2"])), 2);
}

#[test]
fn version_and_thread_cap() {
    let out = degenlab(&["--version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    let bad = Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .args(["kummer-eval", "1", "0", "1", "1"])
        .env("DEGENLAB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
    assert_eq!(
        code(&degenlab(&[
            "--threads",
            "2",
            "kummer-eval",
            "1",
            "0",
            "1",
            "1"
        ])),
        0
    );
}
