//! End-to-end runs of the `bflow` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bflow"))
        .args(args)
        .env_remove("BF_THREADS")
        .output()
        .expect("spawn bflow")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", name]
        .iter()
        .collect();
    p.display().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn exact_rotation_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let s = scenario("flat_exact_rot3.scn");
    let out = bflow(&["run", &s, "--out", a.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());

    let again = bflow(&["run", &s]);
    assert_eq!(again.status.code(), Some(0));
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, again.stdout, "reports differ between runs");

    let report: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["passed"], true);
    let ratio = check(&report, "contraction")["worst_ratio"]
        .as_f64()
        .unwrap();
    assert!((ratio - (-0.2f64).exp()).abs() <= 1e-6, "{ratio}");
    // declaration order is kept
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names.first(), Some(&"group_law"));
    assert_eq!(names.last(), Some(&"certify"));
    assert!(report.get("seconds").is_none());
}

#[test]
fn thread_count_does_not_change_reports() {
    let s = scenario("sphere_curvature.scn");
    let one = Command::new(env!("CARGO_BIN_EXE_bflow"))
        .args(["run", &s])
        .env("BF_THREADS", "1")
        .output()
        .unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_bflow"))
        .args(["run", &s])
        .env("BF_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.stdout, four.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_bflow"))
        .args(["run", &s])
        .env("BF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(bad.stdout.is_empty());
}

#[test]
fn failing_check_exits_one_with_report() {
    let out = bflow(&["run", &scenario("sphere_curvature.scn")]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["passed"], false);
    let c = check(&report, "curvature_scaling");
    assert_eq!(c["verdict"], "fail");
    assert_eq!(c["deviations"].as_array().unwrap().len(), 4);
}

#[test]
fn malformed_and_invalid_files_exit_two_without_report() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.scn", "name = \"x\"\n[manifold\n"),
        ("unknown_key.scn", "name = \"x\"\nchecks = [\"group_law\"]\ncolour = 3\n"),
        (
            "bad_check.scn",
            "name = \"x\"\nchecks = [\"nope\"]\n[manifold]\nkind = \"euclidean\"\ndim = 2\n",
        ),
        (
            "variance_on_sphere.scn",
            "name = \"x\"\nchecks = [\"variance_identity\"]\n[manifold]\nkind = \"sphere\"\ndim = 2\n\
             [action]\norder = 2\nseed = 1\n[sweep]\nshells = [0.1]\nsamples = 4\nseed = 1\n",
        ),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        let out = bflow(&["run", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(out.stdout.is_empty(), "{name}");
        assert!(!out.stderr.is_empty(), "{name}");
    }
    let missing = bflow(&["run", dir.path().join("absent.scn").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(bflow(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bflow(&["--help"]).status.code(), Some(0));
}

#[test]
fn syntax_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.scn");
    std::fs::write(&p, "name = \"x\"\n\nchecks = [\"group_law\"\n").unwrap();
    let out = bflow(&["run", p.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("s.scn:"), "{err}");
}

#[test]
fn certify_exit_codes() {
    let pass = bflow(&["certify", "--epsilon", "1/4000", "--tau", "1/5"]);
    assert_eq!(pass.status.code(), Some(0));
    let doc = json(&pass);
    assert_eq!(doc["passed"], true);
    let step3 = doc["step3"]["enclosure"][1].as_f64().unwrap();
    assert!(step3 <= 0.999);
    assert_eq!(doc["inputs"]["epsilon"]["exact"], "1/4000");

    let fail = bflow(&["certify", "--epsilon", "0.05"]);
    assert_eq!(fail.status.code(), Some(1));
    let doc = json(&fail);
    assert_eq!(doc["r_bound"]["verdict"], "fail");
    assert!(doc["r_bound"]["enclosure"][0].as_f64().unwrap() > 1.0 / 40.0);

    let frontier = bflow(&["certify", "--frontier"]);
    assert_eq!(frontier.status.code(), Some(0));
    let e = json(&frontier)["frontier"]["epsilon"].as_f64().unwrap();
    assert!(e >= 1.0 / 4000.0);

    assert_eq!(
        bflow(&["certify", "--epsilon", "1/0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        bflow(&["certify", "--target-k", "3/2"]).status.code(),
        Some(2)
    );
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn exported_trajectory_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = bflow(&[
        "export-trajectory",
        &scenario("flat_exact_rot3.scn"),
        "--point",
        "1,0",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["t", "x1", "x2", "speed"]);
    assert!(rows.len() > 100);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
    }
    for r in &rows {
        assert!((r[3] - (-r[0]).exp()).abs() <= 1e-8, "t = {}", r[0]);
    }
}

#[test]
fn exported_fixed_point_is_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let out = bflow(&[
        "export-trajectory",
        &scenario("flat_exact_rot3.scn"),
        "--point",
        "0,0",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = read_csv(&csv);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][3] <= 1e-10);

    let bad = bflow(&[
        "export-trajectory",
        &scenario("flat_exact_rot3.scn"),
        "--point",
        "1,x",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let wrong_dim = bflow(&[
        "export-trajectory",
        &scenario("flat_exact_rot3.scn"),
        "--point",
        "1,0,0",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_ne!(wrong_dim.status.code(), Some(0));
}
