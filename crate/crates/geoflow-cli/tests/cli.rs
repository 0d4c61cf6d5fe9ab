//! End-to-end checks of the binary: the exit-code contract (0 success,
//! 1 assertion failure, 2 usage/validation error) for every subcommand,
//! plus output formats.

use std::path::PathBuf;
use std::process::{Command, Output};

fn geoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_curve(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn line_curve(dir: &tempfile::TempDir) -> PathBuf {
    write_curve(
        dir,
        "line.toml",
        "n = 2\ninterval = [0.0, 1.0]\ncomponents = [[0.0, 1.0]]\n",
    )
}

fn circle_curve(dir: &tempfile::TempDir) -> PathBuf {
    write_curve(
        dir,
        "circle.toml",
        concat!(
            "n = 3\ninterval = [0.0, 6.283185307179586]\ncomponents = [[0.0], [0.0]]\n\n",
            "[[waves]]\ncomponent = 0\namplitude = 1.0\nfrequency = 1.0\nphase = 0.0\n\n",
            "[[waves]]\ncomponent = 1\namplitude = 1.0\nfrequency = 1.0\nphase = -1.5707963267948966\n",
        ),
    )
}

#[test]
fn verify_lemma_exit_codes() {
    let out = geoflow(&["verify-lemma", "--l", "2:8", "--r", "1,-1,1/2", "--exact"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("l=8 r=1/2 identity=ok"));

    let out = geoflow(&["verify-lemma", "--l", "3", "--r", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("odd highest weight"));

    let out = geoflow(&["verify-lemma", "--l", "2", "--r", ""]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flags are usage errors (clap exits 2).
    let out = geoflow(&["verify-lemma", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn equi_records_and_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let line = line_curve(&dir);
    let out_path = dir.path().join("records.jsonl");
    let plot_path = dir.path().join("sweep.dat");
    let out = geoflow(&[
        "equi",
        "--curve",
        line.to_str().unwrap(),
        "--model",
        "sl2r",
        "--t",
        "4,8",
        "--samples",
        "20000",
        "--seed",
        "7",
        "--out",
        out_path.to_str().unwrap(),
        "--plot",
        plot_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let records = std::fs::read_to_string(&out_path).unwrap();
    let mut parsed = 0;
    for line in records.lines().filter(|l| l.starts_with('{')) {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in [
            "model",
            "curve",
            "t",
            "samples",
            "seed",
            "test_fn",
            "value",
            "std_error",
            "haar_value",
        ] {
            assert!(rec.get(field).is_some(), "record missing {field}");
        }
        parsed += 1;
    }
    assert_eq!(parsed, 10, "two sweeps of five bumps each");
    let plot = std::fs::read_to_string(&plot_path).unwrap();
    assert_eq!(plot.lines().count(), 11, "header plus ten rows");

    // Explicit base matrix: identity spelled out works, non-unimodular is
    // a validation error.
    let out = geoflow(&[
        "equi", "--curve", line.to_str().unwrap(), "--model", "sl2r", "--t", "4", "--samples",
        "2000", "--seed", "3", "--base", "1,0.5,0,1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = geoflow(&[
        "equi", "--curve", line.to_str().unwrap(), "--model", "sl2r", "--t", "4", "--samples",
        "2000", "--seed", "3", "--base", "2,0,0,1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Degenerate interval: validation error.
    let empty = write_curve(
        &dir,
        "empty.toml",
        "n = 2\ninterval = [1.0, 1.0]\ncomponents = [[0.0, 1.0]]\n",
    );
    let out = geoflow(&[
        "equi", "--curve", empty.to_str().unwrap(), "--model", "sl2r", "--t", "4", "--samples",
        "5000", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Negative control: the circle curve cannot converge to Haar.
    let circle = circle_curve(&dir);
    let out = geoflow(&[
        "equi",
        "--curve",
        circle.to_str().unwrap(),
        "--model",
        "sl2c",
        "--t",
        "8",
        "--samples",
        "20000",
        "--seed",
        "31",
        "--assert-converged",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn subsphere_witness_and_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let circle = circle_curve(&dir);
    let out = geoflow(&["subsphere", "--curve", circle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("contained"));
    assert!(text.contains("sphere center"));
    assert!(text.contains("radius 1.000000000"));

    let generic = write_curve(
        &dir,
        "generic.toml",
        "n = 3\ninterval = [0.0, 1.0]\ncomponents = [[0.0, 1.0], [0.0, 0.0, 1.0]]\n",
    );
    let out = geoflow(&[
        "subsphere",
        "--curve",
        generic.to_str().unwrap(),
        "--assert-contained",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = geoflow(&[
        "subsphere",
        "--curve",
        generic.to_str().unwrap(),
        "--assert-generic",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let out = geoflow(&["subsphere", "--curve", "/nonexistent/path.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invariants_excess_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let circle = circle_curve(&dir);
    let out = geoflow(&[
        "invariants",
        "--curve",
        circle.to_str().unwrap(),
        "--assert-excess",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("excess_dim = 1"));

    let generic = write_curve(
        &dir,
        "generic.toml",
        "n = 3\ninterval = [0.0, 1.0]\ncomponents = [[0.0, 1.0], [0.0, 0.0, 1.0]]\n",
    );
    let out = geoflow(&[
        "invariants",
        "--curve",
        generic.to_str().unwrap(),
        "--assert-excess",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = geoflow(&[
        "invariants",
        "--curve",
        generic.to_str().unwrap(),
        "--assert-excess",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kappa_exit_codes() {
    let out = geoflow(&[
        "kappa", "--n", "2", "--rep", "adjoint", "--t", "1", "--trials", "5000", "--seed", "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("kappa_hat"));

    let out = geoflow(&[
        "kappa", "--n", "2", "--rep", "adjoint", "--t", "0", "--trials", "100", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // An unreachable bound turns into an assertion failure.
    let out = geoflow(&[
        "kappa", "--n", "2", "--rep", "adjoint", "--t", "1", "--trials", "5000", "--seed", "4",
        "--min-kappa", "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn goodfn_detects_violations() {
    let out = geoflow(&[
        "goodfn", "--poly", "0,0,1", "--interval", "0,1", "--c", "1", "--alpha", "0.5",
        "--trials", "100", "--seed", "5", "--assert-good",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let out = geoflow(&[
        "goodfn", "--poly", "0,0,1", "--interval", "0,1", "--c", "1", "--alpha", "1",
        "--trials", "100", "--seed", "5", "--assert-good",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Zero polynomial is rejected.
    let out = geoflow(&[
        "goodfn", "--poly", "0", "--interval", "0,1", "--c", "1", "--alpha", "1", "--trials",
        "10", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn goodfn_on_curve_operator_entries() {
    let dir = tempfile::tempdir().unwrap();
    let generic = write_curve(
        &dir,
        "generic.toml",
        "n = 3\ninterval = [0.0, 1.0]\ncomponents = [[0.0, 1.0], [0.0, 0.0, 1.0]]\n",
    );
    let out = geoflow(&[
        "goodfn",
        "--curve",
        generic.to_str().unwrap(),
        "--entry",
        "0,3",
        "--c",
        "3",
        "--alpha",
        "0.25",
        "--trials",
        "100",
        "--seed",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("worst sublevel ratio"));
}
