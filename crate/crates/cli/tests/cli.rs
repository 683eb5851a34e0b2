use std::path::Path;
use std::process::{Command, Output};

fn parisi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parisi")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn first_value(out: &Output) -> f64 {
    stdout(out).lines().next().expect("a value line").trim().parse().expect("a number")
}

#[test]
fn eval_of_point_mass_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = parisi(&["eval", "--xi", "2:1.0", "--h", "0", "--measure", "0:1.0"], dir.path());
    assert!(out.status.success());
    assert!((first_value(&out) - 0.5).abs() < 1e-5);

    let out = parisi(&["eval", "--xi", "2:1.0", "--h", "0", "--measure", "0:1.0", "--include-log2"], dir.path());
    assert!((first_value(&out) - 0.5 - std::f64::consts::LN_2).abs() < 1e-5);
}

#[test]
fn rsb_matches_eval() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--xi", "2:1.0", "--h", "0.3", "--measure", "0:0.4,0.5:1"];
    let pde = first_value(&parisi(&[&["eval"][..], &args].concat(), dir.path()));
    let rsb = first_value(&parisi(&[&["rsb"][..], &args].concat(), dir.path()));
    assert!((pde - rsb).abs() < 5e-4, "{pde} vs {rsb}");
}

#[test]
fn solve_writes_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = parisi(&["solve", "--xi", "2:1.0", "--measure", "1:1.0", "--out", "u.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["config"]["subcommand"], "solve");
    assert!(summary["max_principle"]["holds"].as_bool().unwrap());

    let csv = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,u,ux,uxx"));
    let at_origin = lines
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[0] == 1.0 && r[1] == 0.0)
        .expect("node (1, 0)");
    assert_eq!(at_origin[2], 0.0);
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["eval", "--xi", "2:1.0", "--measure", "0.5:0.3"][..],
        &["eval", "--xi", "2:-", "--measure", "0:1"],
        &["eval", "--measure", "0:1"],
        &["solve", "--xi", "2:1", "--measure", "0:1", "--backend", "spectral"],
        &["solve", "--xi", "2:1", "--measure", "0:1", "--dt-max", "0.5"],
        &["convexity", "--xi", "2:1", "--measure", "0:1"],
        &["eval", "--xi", "2:1", "--measure", "0:1", "--config", "missing.toml"],
    ] {
        let out = parisi(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "xi = \"2:1.0\"\nh = 0.5\nmeasure = \"0:1.0\"\n").unwrap();
    let from_file = first_value(&parisi(&["eval", "--config", "run.toml"], dir.path()));
    let expected = 0.5 + 0.5_f64.cosh().ln();
    assert!((from_file - expected).abs() < 1e-5);

    let overridden = first_value(&parisi(&["eval", "--config", "run.toml", "--h", "0"], dir.path()));
    assert!((overridden - 0.5).abs() < 1e-5);

    std::fs::write(dir.path().join("bad.toml"), "xi = \"2:1.0\"\ncolour = 3\n").unwrap();
    assert_eq!(parisi(&["eval", "--config", "bad.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn json_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["eval", "--xi", "2:0.8,3:0.4", "--h", "0.2", "--measure", "0.2:0.3,0.7:1", "--json", "--out", "a.json"];
    let first = parisi(&args, dir.path());
    let second = parisi(&args, dir.path());
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let record: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(record["config"]["xi"], "2:0.8,3:0.4");
    assert!(record["value"].as_f64().is_some());
    let written = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(written.trim_ascii_end(), first.stdout.trim_ascii_end());
}

#[test]
fn minimize_on_one_atom_reports_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let out = parisi(
        &["minimize", "--xi", "2:0.25", "--atoms", "0,0.5", "--starts", "2", "--seed", "7", "--json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // High temperature: the minimizer is the point mass at zero, P = ξ(1)/2.
    let value = record["result"]["value"].as_f64().unwrap();
    assert!((value - 0.125).abs() < 1e-6, "{value}");
}
