use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identities_pass_and_report_residuals() {
    let out = rmt(&["identities", "--fd-step", "1e-4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("closed_form_vs_conjugation"));
    assert!(text.contains("derivative_identities"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn identities_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("id.json");
    let out = rmt(&["identities", "--output", path_str(&json)]);
    assert_eq!(code(&out), 0);
    let v = read_json(&json);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "identities");
    for check in v["report"]["checks"].as_array().unwrap() {
        assert!(check["max_residual"].as_f64().unwrap() <= check["tolerance"].as_f64().unwrap());
    }
}

#[test]
fn coarse_finite_difference_step_fails() {
    assert_eq!(code(&rmt(&["identities", "--fd-step", "0.5"])), 1);
    assert_eq!(code(&rmt(&["identities", "--fd-step", "-1"])), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        code(&rmt(&["verify-forward", "--ensemble", "goe", "--dim", "1"])),
        2
    );
    assert_eq!(code(&rmt(&["verify-forward", "--ensemble", "nope"])), 2);
    assert_eq!(code(&rmt(&["verify-forward", "--n", "100"])), 2);
    assert_eq!(
        code(&rmt(&["characterize", "--input", "x.csv", "--dim", "3"])),
        2
    );
    assert_eq!(
        code(&rmt(&["characterize", "--input", "/nonexistent/x.csv"])),
        2
    );
    assert_eq!(
        code(&rmt(&[
            "sample",
            "--ensemble",
            "affine-goe",
            "--scale2",
            "-1",
            "--n",
            "5"
        ])),
        2
    );
    assert_eq!(code(&rmt(&["verify-forward", "--points", "40"])), 2);
    assert_eq!(
        code(&rmt(&["probe-cf", "--probe", "offdiag:2,1", "--n", "100"])),
        2
    );
}

#[test]
fn invalid_thread_override_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_rmt"))
        .args(["identities"])
        .env("RMT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("RMT_THREADS"));
    let out = Command::new(env!("CARGO_BIN_EXE_rmt"))
        .args(["identities"])
        .env("RMT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn goe_passes_forward_invariance() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("goe.json");
    let out = rmt(&[
        "verify-forward",
        "--ensemble",
        "goe",
        "--dim",
        "4",
        "--n",
        "100000",
        "--seed",
        "7",
        "--output",
        path_str(&json),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&json);
    assert_eq!(v["command"], "verify-forward");
    assert_eq!(v["report"]["overall_pass"], true);
    assert_eq!(v["report"]["records"].as_array().unwrap().len(), 15 * 20);
    assert!(v["timing_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn uniform_fails_forward_invariance_and_names_a_probe() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("u.json");
    let out = rmt(&[
        "verify-forward",
        "--ensemble",
        "uniform-sym",
        "--dim",
        "4",
        "--n",
        "100000",
        "--seed",
        "7",
        "--output",
        path_str(&json),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("probe offdiag("));
    let v = read_json(&json);
    assert_eq!(v["report"]["overall_pass"], false);
}

#[test]
fn sample_then_characterize_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("goe.csv");
    let from_file = dir.path().join("file.json");
    let in_memory = dir.path().join("mem.json");
    let common = ["--seed", "9", "--stream", "2"];

    let mut args = vec![
        "sample",
        "--ensemble",
        "goe",
        "--dim",
        "3",
        "--n",
        "20000",
        "--output",
        path_str(&csv),
    ];
    args.extend(common);
    assert_eq!(code(&rmt(&args)), 0);

    let mut args = vec![
        "characterize",
        "--input",
        path_str(&csv),
        "--output",
        path_str(&from_file),
    ];
    args.extend(common);
    let out = rmt(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let mut args = vec![
        "characterize",
        "--ensemble",
        "goe",
        "--dim",
        "3",
        "--n",
        "20000",
        "--output",
        path_str(&in_memory),
    ];
    args.extend(common);
    assert_eq!(code(&rmt(&args)), 0);

    let a = read_json(&from_file);
    let b = read_json(&in_memory);
    assert_eq!(a["report"], b["report"]);
    assert_eq!(a["report"]["verdict"]["kind"], "affine-goe");
    assert!(a["report"]["verdict"]["mu"].as_f64().unwrap().abs() < 0.05);
    assert!((a["report"]["verdict"]["sigma2"].as_f64().unwrap() - 1.0).abs() < 0.05);
}

#[test]
fn reports_are_byte_stable_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = rmt(&[
            "characterize",
            "--ensemble",
            "affine-goe",
            "--mu",
            "-0.5",
            "--scale2",
            "2",
            "--dim",
            "3",
            "--n",
            "10000",
            "--output",
            path_str(&p),
        ]);
        assert!(code(&out) <= 1);
        std::fs::read_to_string(&p).unwrap()
    };
    let strip = |s: String| {
        s.lines()
            .filter(|l| !l.contains("\"timing_ms\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(run("a.json")), strip(run("b.json")));
}

#[test]
fn symmetrized_haar_is_inconclusive_with_independence_flag() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("h.json");
    let out = rmt(&[
        "characterize",
        "--ensemble",
        "sym-haar",
        "--dim",
        "4",
        "--n",
        "100000",
        "--output",
        path_str(&json),
    ]);
    assert_eq!(code(&out), 1);
    let v = read_json(&json);
    assert_eq!(v["report"]["invariance"]["overall_pass"], true);
    assert_eq!(v["report"]["step1"]["independence_violated"], true);
    assert_eq!(v["report"]["verdict"]["kind"], "inconclusive");
}

#[test]
fn malformed_csv_reports_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "x1_1,x1_2,x2_2\n1.0,2.0,3.0\n1.0,oops,3.0\n").unwrap();
    let out = rmt(&["characterize", "--input", path_str(&csv)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));
}

#[test]
fn probe_cf_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cf.csv");
    let svg = dir.path().join("cf.svg");
    let out = rmt(&[
        "probe-cf",
        "--ensemble",
        "goe",
        "--dim",
        "3",
        "--n",
        "20000",
        "--probe",
        "offdiag:1,3",
        "--output",
        path_str(&csv),
        "--plot",
        path_str(&svg),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,re,im,radius,n");
    assert_eq!(lines.len(), 42);
    // the t = 0 row of an ECF is exactly 1
    let zero: Vec<f64> = lines[21].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!((zero[0], zero[1], zero[2]), (0.0, 1.0, 0.0));
    let plot = std::fs::read_to_string(&svg).unwrap();
    assert!(plot.starts_with("<svg") && plot.contains("stroke-dasharray"));
}
