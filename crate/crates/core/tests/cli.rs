//! End-to-end tests of the `dvf` binary: output shapes, exit codes,
//! determinism, and the solve/scan round trip.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dvf"))
}

fn tmp_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    fs::create_dir_all(&dir).expect("create tmp dir");
    dir
}

fn write_tmp(name: &str, content: &str) -> PathBuf {
    let path = tmp_dir().join(name);
    fs::write(&path, content).expect("write tmp file");
    path
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

const TWO_SITE_CONFIG: &str = r#"{
  "rank": {"r": 1, "s": 0},
  "q": {"re": 1.32, "im": 0.08},
  "sites": [
    {"w": {"re": 0.3, "im": -0.2}, "b": {"re": 0.9, "im": 0.1}},
    {"w": {"re": -0.4, "im": 0.1}, "b": {"re": 1.2, "im": -0.3}}
  ]
}"#;

#[test]
fn tableaux_lists_the_four_column_fillings() {
    let output = bin()
        .args(["tableaux", "--rank", "1,0", "--shape", "mu=1,1"])
        .output()
        .expect("run binary");
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(stdout_of(&output), "1\n2\n\n1\n3\n\n2\n3\n\n3\n3\n\ncount 4\n");
}

#[test]
fn verify_jt_example_passes() {
    let output = bin()
        .args(["verify-jt", "--rank", "0,1", "--shape", "mu=2,1", "--points", "20"])
        .output()
        .expect("run binary");
    assert_eq!(output.status.code(), Some(0), "stdout: {}", stdout_of(&output));
    assert!(stdout_of(&output).contains("PASS"));
}

#[test]
fn dump_prints_expansions() {
    let config01 = write_tmp(
        "m01.json",
        r#"{"rank":{"r":0,"s":1},"q":{"re":1.32,"im":0.08},"sites":[{"w":{"re":0.2,"im":-0.1},"b":{"re":0.7,"im":0.1}}]}"#,
    );
    let config10 = write_tmp(
        "m10.json",
        r#"{"rank":{"r":1,"s":0},"q":{"re":1.32,"im":0.08},"sites":[{"w":{"re":0.2,"im":-0.1},"b":{"re":0.7,"im":0.1}}]}"#,
    );
    let row2 = write_tmp("row2.json", r#"{"kind":"plain","mu":[2]}"#);
    let rect = write_tmp("rect.json", r#"{"kind":"deformed_rect","c":{"re":0.3,"im":0.15}}"#);
    let empty = write_tmp("empty.json", r#"{"kind":"plain","mu":[]}"#);

    let one_row = bin()
        .args(["eval", "--dump", "--config"])
        .arg(&config01)
        .arg("--dvf")
        .arg(&row2)
        .output()
        .expect("run binary");
    assert_eq!(one_row.status.code(), Some(0));
    let text = stdout_of(&one_row);
    assert_eq!(text.trim_end().lines().count(), 4, "one-row dump: {text}");
    assert!(text.contains("psi_1(u-1)"));

    let deformed = bin()
        .args(["eval", "--dump", "--config"])
        .arg(&config10)
        .arg("--dvf")
        .arg(&rect)
        .output()
        .expect("run binary");
    assert_eq!(deformed.status.code(), Some(0));
    let text = stdout_of(&deformed);
    assert_eq!(text.trim_end().lines().count(), 4, "deformed dump: {text}");
    assert!(text.contains("+c"), "shifts carry the parameter: {text}");

    let trivial = bin()
        .args(["eval", "--dump", "--config"])
        .arg(&config01)
        .arg("--dvf")
        .arg(&empty)
        .output()
        .expect("run binary");
    assert_eq!(stdout_of(&trivial), "1\n");
}

#[test]
fn eval_reports_term_count_metadata() {
    let config = write_tmp("meval.json", TWO_SITE_CONFIG);
    let spec = write_tmp("t1.json", r#"{"kind":"plain","mu":[1]}"#);
    let output = bin()
        .args(["eval", "--format", "json", "--points", "3", "--config"])
        .arg(&config)
        .arg("--dvf")
        .arg(&spec)
        .output()
        .expect("run binary");
    assert_eq!(output.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).expect("json output");
    assert_eq!(doc["term_count"], serde_json::json!(3));
    assert_eq!(doc["values"].as_array().map(|v| v.len()), Some(3));
    assert!(doc["values"][0]["value"]["re"].is_f64());
}

#[test]
fn fixture_suites_all_pass() {
    for name in ["appendix-a", "appendix-b", "sl21-deformed", "sl22-atypical"] {
        let output = bin()
            .args(["fixtures", "--name", name, "--points", "10"])
            .output()
            .expect("run binary");
        assert_eq!(
            output.status.code(),
            Some(0),
            "fixture {name} failed:\n{}",
            stdout_of(&output)
        );
    }
}

#[test]
fn reports_are_byte_deterministic() {
    let run = || {
        bin()
            .args([
                "verify-jt", "--rank", "1,1", "--shape", "mu=2,1", "--points", "5", "--seed",
                "7", "--format", "json",
            ])
            .output()
            .expect("run binary")
    };
    let first = run();
    let second = run();
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn tolerance_override_is_logged() {
    let output = bin()
        .args(["verify-jt", "--rank", "1,0", "--shape", "mu=1", "--points", "2", "--format", "json"])
        .env("DVF_TOL_OVERRIDE", "1e-3")
        .output()
        .expect("run binary");
    assert_eq!(output.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&output)).expect("json report");
    assert_eq!(doc["tolerance_override"], serde_json::json!(1e-3));
    assert_eq!(doc["checks"][0]["tolerance"], serde_json::json!(1e-3));

    let bad = bin()
        .args(["verify-jt", "--rank", "1,0", "--shape", "mu=1"])
        .env("DVF_TOL_OVERRIDE", "not-a-number")
        .output()
        .expect("run binary");
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_and_usage_errors_exit_two() {
    let garbage = write_tmp("garbage.json", "{ not json ");
    let spec = write_tmp("t1b.json", r#"{"kind":"plain","mu":[1]}"#);
    let output = bin()
        .args(["eval", "--config"])
        .arg(&garbage)
        .arg("--dvf")
        .arg(&spec)
        .output()
        .expect("run binary");
    assert_eq!(output.status.code(), Some(2));

    let missing = bin()
        .args(["tableaux", "--rank", "1,0"])
        .output()
        .expect("run binary");
    assert_eq!(missing.status.code(), Some(2));

    let unknown = bin().args(["frobnicate"]).output().expect("run binary");
    assert_eq!(unknown.status.code(), Some(2));

    let bad_shape = bin()
        .args(["tableaux", "--rank", "1,0", "--shape", "rho=2"])
        .output()
        .expect("run binary");
    assert_eq!(bad_shape.status.code(), Some(2));
}

#[test]
fn solve_then_scan_round_trip() {
    let config = write_tmp("chain_config.json", TWO_SITE_CONFIG);
    let roots = tmp_dir().join("chain_roots.json");
    let solve = bin()
        .args(["solve-bae", "--counts", "1,1", "--seeds", "64", "--tol", "1e-12", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&roots)
        .output()
        .expect("run binary");
    assert_eq!(solve.status.code(), Some(0), "solve: {}", stdout_of(&solve));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&roots).expect("roots file")).expect("roots json");
    assert!(doc["roots"]["1"].is_array());
    assert!(doc["max_residual"].as_f64().unwrap() < 1e-12);

    let spec = write_tmp(
        "chain_dvf.json",
        r#"{"kind":"deformed","mu":[1,1],"c":{"re":0.37,"im":0.21}}"#,
    );
    let report_path = tmp_dir().join("chain_report.json");
    let scan = bin()
        .args(["pole-scan", "--config"])
        .arg(&config)
        .arg("--roots")
        .arg(&roots)
        .arg("--dvf")
        .arg(&spec)
        .arg("--report")
        .arg(&report_path)
        .output()
        .expect("run binary");
    assert_eq!(scan.status.code(), Some(0), "scan: {}", stdout_of(&scan));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&report_path).expect("report file"),
    )
    .expect("report json");
    assert_eq!(report["summary"]["overall_pass"], serde_json::json!(true));
    assert!(report["checks"].as_array().map_or(false, |c| !c.is_empty()));

    // Nudge one root off the solution: the scan must fail with exit 1.
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&roots).expect("roots file")).expect("roots json");
    let re = doc["roots"]["2"][0]["re"].as_f64().unwrap();
    doc["roots"]["2"][0]["re"] = serde_json::json!(re + 1e-3);
    let bad_roots = write_tmp("chain_bad_roots.json", &doc.to_string());
    let bad_scan = bin()
        .args(["pole-scan", "--config"])
        .arg(&config)
        .arg("--roots")
        .arg(&bad_roots)
        .arg("--dvf")
        .arg(&spec)
        .output()
        .expect("run binary");
    assert_eq!(bad_scan.status.code(), Some(1), "scan: {}", stdout_of(&bad_scan));
}
