use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use srbm::experiments::three_station_family;
use srbm::model::ModelFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srbm"))
}

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_body(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn analyze_network_reports_means() {
    let o = run(&["analyze", "--model", model("network.json").to_str().unwrap(), "--r", "0.2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("multiscaling means (2.500000, 22.321429, 179.687500)"), "{text}");
    assert!(text.contains("skew means         (2.500000, 12.500000, 62.500000)"), "{text}");
}

#[test]
fn analyze_non_p_names_the_failing_check() {
    let o = run(&["analyze", "--model", model("non_p.json").to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["classes"]["is_p"], false);
    assert_eq!(v["classes"]["witnesses"][0]["value"], -3.0);
}

#[test]
fn analyze_family_matches_expanded_model() {
    let dir = tempfile::tempdir().unwrap();
    let expanded = dir.path().join("expanded.json");
    let m = three_station_family().unwrap().make_model(0.3).unwrap();
    std::fs::write(&expanded, serde_json::to_string(&ModelFile::from_model(&m)).unwrap()).unwrap();
    let a = run(&["analyze", "--model", model("network.json").to_str().unwrap(), "--r", "0.3", "--json"]);
    let b = run(&["analyze", "--model", expanded.to_str().unwrap(), "--json"]);
    let (a, b): (serde_json::Value, serde_json::Value) =
        (serde_json::from_str(&stdout(&a)).unwrap(), serde_json::from_str(&stdout(&b)).unwrap());
    for key in ["classes", "u", "m", "r0", "guarantee", "skew_symmetric"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    for key in ["slackness", "multiscaling_means", "skew_means"] {
        for (x, y) in a[key].as_array().unwrap().iter().zip(b[key].as_array().unwrap()) {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{key}: {x} vs {y}");
        }
    }
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"d\": 2, \"gamma\": [[1]]").unwrap();
    assert_eq!(run(&["analyze", "--model", bad.to_str().unwrap()]).status.code(), Some(2));
    let family = model("tandem.json");
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&["simulate", "--model", family.to_str().unwrap(), "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["simulate", "--model", family.to_str().unwrap(), "--r", "1.5", "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        run(&["experiment", "fig-skew-compare", "--r-grid", "0.3", "--out", out]).status.code(),
        Some(2)
    );
}

#[test]
fn lcp_breakdown_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,-2],[-2,1]], "mu": [1,1]}"#).unwrap();
    let o = run(&["simulate", "--model", m.to_str().unwrap(), "--horizon", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_noiseless_path_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--model",
        model("identity.json").to_str().unwrap(),
        "--horizon",
        "5",
        "--dt",
        "0.1",
        "--noise-scale",
        "0",
        "--init",
        "0,0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_body(&dir.path().join("path.csv"));
    assert_eq!(rows.len(), 51);
    for row in &rows {
        assert_eq!(&row[1..3], &[0.0, 0.0]);
    }
    // Drift -1 pushes into the corner; the regulator absorbs dt per step.
    let last = rows.last().unwrap();
    assert!((last[3] - 5.0).abs() < 1e-12 && (last[4] - 5.0).abs() < 1e-12);
}

#[test]
fn simulate_one_d_summary_matches_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--model",
        model("one_d.json").to_str().unwrap(),
        "--horizon",
        "5000",
        "--dt",
        "0.005",
        "--scheme",
        "bridge-minimum",
        "--every",
        "1000",
        "--seed",
        "11",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let summary = csv_body(&dir.path().join("summary.csv"));
    let (mean, se) = (summary[0][1], summary[0][2]);
    assert!((mean - 0.5).abs() < 3.0 * se, "{mean} +- {se}");
    let meta = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(meta.starts_with("# srbm ") && meta.contains("seed=11") && meta.contains("config="));
}

#[test]
fn mlmc_csv_has_one_row_per_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "mlmc",
        "--model",
        model("network.json").to_str().unwrap(),
        "--r",
        "0.2",
        "--levels",
        "2",
        "--horizon",
        "100",
        "--paths",
        "8",
        "--replications",
        "2",
        "--init",
        "origin",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("mlmc.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "init_kind,L,T,gamma,cost,dim,estimate,ci_low,ci_high");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("origin,2,100,0.2,"));
}

#[test]
fn bar_check_theta_zero_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "bar-check",
        "--model",
        model("one_d.json").to_str().unwrap(),
        "--horizon",
        "200",
        "--theta",
        "0",
        "--theta",
        "-1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_body(&dir.path().join("bar_check.csv"));
    assert_eq!(rows[0][1], 0.0);
    assert_eq!(rows[0][4], 1.0);
    assert_eq!(rows[1][0], -1.0);
}
