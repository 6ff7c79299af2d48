//! End-to-end tests of the `postpred` binary: worked-example values through
//! the full pipeline, table round-trips, exit codes and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_postpred"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Every float field must re-parse and re-format to the identical string,
/// the documented 12-significant-digit round-trip.
fn assert_round_trip(table: &str) {
    for line in table.lines().skip(1) {
        for field in line.split(',') {
            if let Ok(v) = field.parse::<f64>() {
                if field.contains('e') {
                    assert_eq!(format!("{v:.11e}"), field, "field {field} round trip");
                }
            }
        }
    }
}

#[test]
fn estimate_reproduces_the_worked_gamma_values() {
    let dir = tempfile::tempdir().expect("temp dir");
    let samples = dir.path().join("pairs.csv");
    std::fs::write(&samples, "2,3\n").expect("write samples");
    let out_path = dir.path().join("run.csv");
    let output = run_bin(&[
        "estimate",
        "--family",
        "gamma:lambda=1",
        "--samples",
        samples.to_str().expect("utf8 path"),
        "--x1-grid",
        "1:1:1",
        "--t-grid",
        "0:1:2",
        "--out",
        out_path.to_str().expect("utf8 path"),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let regression = std::fs::read_to_string(&out_path).expect("regression table");
    assert_round_trip(&regression);
    let last = regression.lines().last().expect("data row");
    let reg: f64 = last.split(',').nth(1).expect("field").parse().expect("float");
    assert!((reg - 10.0 / 3.0).abs() < 1e-9, "regression {reg}");

    let density =
        std::fs::read_to_string(dir.path().join("run_density.csv")).expect("density table");
    assert_round_trip(&density);
    let at_zero: f64 = density
        .lines()
        .nth(1)
        .expect("row for x2 = 0")
        .split(',')
        .nth(2)
        .expect("density field")
        .parse()
        .expect("float");
    assert!((at_zero - 0.4).abs() < 1e-9, "density at 0 is {at_zero}");

    let cdf = std::fs::read_to_string(dir.path().join("run_cdf.csv")).expect("cdf table");
    assert_round_trip(&cdf);
    let at_one: f64 = cdf
        .lines()
        .nth(2)
        .expect("row for t = 1")
        .split(',')
        .nth(2)
        .expect("cdf field")
        .parse()
        .expect("float");
    let expected = 1.0 - 1.1f64.powi(-4);
    assert!((at_one - expected).abs() < 1e-9, "cdf at 1 is {at_one}");

    let err = stderr_of(&output);
    assert!(err.contains("engine agreement"), "cross-check note: {err}");
}

#[test]
fn coin_example_flows_through_both_exact_engines() {
    let dir = tempfile::tempdir().expect("temp dir");
    let samples = dir.path().join("flips.csv");
    std::fs::write(&samples, "1,1\n0,0\n").expect("write samples");
    let output = run_bin(&[
        "estimate",
        "--family",
        "coin",
        "--samples",
        samples.to_str().expect("utf8 path"),
        "--x1-grid",
        "0:1:2",
        "--t-grid",
        "0:1:2",
        "--engine",
        "both",
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("# table: regression"), "{text}");
    assert!(
        text.contains("1.00000000000e0,7.14285714286e-1"),
        "P(k2 = 1 | k1 = 1) = 5/7 missing: {text}"
    );
    assert!(
        text.contains("0.00000000000e0,4.28571428571e-1"),
        "regression 3/7 at k1 = 0 missing: {text}"
    );
    let err = stderr_of(&output);
    let reported: f64 = err
        .split("discrepancy ")
        .nth(1)
        .expect("agreement line")
        .split_whitespace()
        .next()
        .expect("value")
        .parse()
        .expect("float");
    assert!(reported < 1e-12, "both coin engines are exact: {err}");
}

#[test]
fn config_error_data_error_and_tolerance_breach_exit_codes() {
    let dir = tempfile::tempdir().expect("temp dir");

    let bad_conf = dir.path().join("bad.conf");
    std::fs::write(&bad_conf, "[run]\nshoe_size = 44\n").expect("write config");
    let output = run_bin(&["estimate", "--config", bad_conf.to_str().expect("utf8")]);
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
    assert!(stderr_of(&output).contains("shoe_size"));

    let bad_samples = dir.path().join("bad.csv");
    std::fs::write(&bad_samples, "2,3\nnot,numbers\n").expect("write samples");
    let output = run_bin(&[
        "estimate",
        "--family",
        "gamma",
        "--samples",
        bad_samples.to_str().expect("utf8"),
        "--x1-grid",
        "1:1:1",
    ]);
    assert_eq!(output.status.code(), Some(3), "{}", stderr_of(&output));
    assert!(stderr_of(&output).contains("line 2"));

    let coarse = dir.path().join("coarse.conf");
    std::fs::write(
        &coarse,
        "[integration]\nnode_count = 3\npanel_count = 1\nabs_tol = 1e-14\nrel_tol = 0.9\n",
    )
    .expect("write config");
    let samples = dir.path().join("pairs.csv");
    std::fs::write(&samples, "2,3\n").expect("write samples");
    let output = run_bin(&[
        "estimate",
        "--config",
        coarse.to_str().expect("utf8"),
        "--family",
        "gamma",
        "--samples",
        samples.to_str().expect("utf8"),
        "--x1-grid",
        "1:1:1",
        "--t-grid",
        "0:4:5",
        "--engine",
        "both",
    ]);
    assert_eq!(output.status.code(), Some(4), "{}", stderr_of(&output));
    assert!(stderr_of(&output).contains("disagree"));

    let output = run_bin(&["estimate", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn risk_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().expect("temp dir");
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    for path in [&first, &second] {
        let output = run_bin(&[
            "risk",
            "--family",
            "coin",
            "--n",
            "2",
            "--reps",
            "150",
            "--seed",
            "5",
            "--losses",
            "sq_tv,sq_error",
            "--competitors",
            "prior_predictive",
            "--out",
            path.to_str().expect("utf8"),
        ]);
        assert!(output.status.success(), "{}", stderr_of(&output));
    }
    let a = std::fs::read(&first).expect("first table");
    let b = std::fs::read(&second).expect("second table");
    assert_eq!(a, b, "same seed must give byte-identical tables");
    let text = String::from_utf8(a).expect("utf8 table");
    assert!(text.starts_with("estimator,loss,n,replications,failed,mean_risk"));
    assert_round_trip(&text);
}

#[test]
fn shipped_demo_families_validate_clean() {
    for family in ["two_point.family", "skewed_pair.family", "three_state.family"] {
        let path = workspace_path("demo").join(family);
        let spec = format!("finite:{}", path.display());
        let output = run_bin(&["validate", "--family", &spec, "--n", "2"]);
        assert!(
            output.status.success(),
            "{family}: {}",
            stderr_of(&output)
        );
        let text = stdout_of(&output);
        assert!(
            text.lines().skip(2).all(|l| l.is_empty() || l.ends_with(",pass")),
            "{family}: {text}"
        );
    }
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().expect("temp dir");
    let conf = dir.path().join("run.conf");
    let samples = dir.path().join("pairs.csv");
    std::fs::write(&samples, "2,3\n").expect("write samples");
    std::fs::write(
        &conf,
        format!(
            "[family]\nkind = gamma\n\n[run]\nsamples = {}\nx1_grid = 1:1:1\n",
            samples.display()
        ),
    )
    .expect("write config");
    let output = run_bin(&[
        "estimate",
        "--config",
        conf.to_str().expect("utf8"),
        "--x1-grid",
        "2:2:1",
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("2.00000000000e0,"), "flag grid wins: {text}");
    assert!(!text.contains("\n1.00000000000e0,"), "config grid gone: {text}");
}
