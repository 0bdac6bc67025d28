use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roundabout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roundabout"))
        .args(args)
        .output()
        .expect("spawn roundabout")
}

fn ok(args: &[&str]) -> String {
    let out = roundabout(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn last_line(s: &str) -> &str {
    s.lines().rfind(|l| !l.trim().is_empty()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_prints_one_row() {
    let stdout = ok(&[
        "simulate",
        "--condition",
        "C1",
        "--seed",
        "7",
        "--horizon",
        "4000",
    ]);
    let fields: Vec<&str> = last_line(&stdout).split(',').collect();
    assert_eq!(fields.len(), 6, "{stdout}");
    assert_eq!(&fields[..3], ["C1", "mix", "7"]);
    assert!(fields[4].parse::<u64>().unwrap() > 0);
}

#[test]
fn compare_of_one_cell_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "compare",
        "--conditions",
        "C6",
        "--controllers",
        "jump",
        "--seeds",
        "1",
        "--base-seed",
        "5",
        "--horizon",
        "3000",
        "--out",
        out,
    ]);
    let runs = read(dir.path(), "runs.csv");
    let sim = ok(&[
        "simulate",
        "--condition",
        "C6",
        "--controller",
        "jump",
        "--seed",
        "5",
        "--horizon",
        "3000",
    ]);
    assert_eq!(last_line(&runs), last_line(&sim));
    for f in ["report.csv", "report.txt", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn replay_reproduces_outputs() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = first.path().to_str().unwrap();
    let b = second.path().to_str().unwrap();
    ok(&[
        "simulate",
        "--condition",
        "C9",
        "--controller",
        "mix-opt",
        "--seed",
        "3",
        "--horizon",
        "2000",
        "--trace",
        "--log",
        "--out",
        a,
    ]);
    let manifest = first.path().join("manifest.json");
    ok(&[
        "simulate",
        "--replay",
        manifest.to_str().unwrap(),
        "--trace",
        "--log",
        "--out",
        b,
    ]);
    for f in ["metrics.csv", "trace.csv", "log.csv"] {
        assert_eq!(read(first.path(), f), read(second.path(), f), "{f}");
    }

    ok(&[
        "compare",
        "--conditions",
        "C2,C3",
        "--controllers",
        "turn,va",
        "--seeds",
        "2",
        "--horizon",
        "1500",
        "--out",
        a,
    ]);
    ok(&[
        "compare",
        "--replay",
        manifest.to_str().unwrap(),
        "--out",
        b,
    ]);
    for f in ["runs.csv", "report.csv", "report.txt"] {
        assert_eq!(read(first.path(), f), read(second.path(), f), "{f}");
    }
}

#[test]
fn optimize_writes_a_usable_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "optimize",
        "--conditions",
        "C5",
        "--iterations",
        "3",
        "--particles",
        "4",
        "--horizon",
        "1500",
        "--out",
        out,
    ]);
    let history: Vec<f64> = read(dir.path(), "fitness_history.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(history.len(), 4);
    assert!(history.windows(2).all(|w| w[1] <= w[0]), "{history:?}");

    let mf = dir.path().join("mf.json");
    let stdout = ok(&[
        "simulate",
        "--condition",
        "C5",
        "--controller",
        "mix-opt",
        "--mf-file",
        mf.to_str().unwrap(),
        "--horizon",
        "1500",
    ]);
    assert!(last_line(&stdout).starts_with("C5,mix-opt,"));
}

#[test]
fn conditions_lists_rates() {
    let stdout = ok(&["conditions"]);
    let row = |name: &str| -> Vec<String> {
        stdout
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap()
            .split_whitespace()
            .map(str::to_string)
            .collect()
    };
    let header: Vec<&str> = stdout.lines().next().unwrap().split_whitespace().collect();
    let col = |flow: &str| header.iter().position(|h| *h == flow).unwrap();
    assert_eq!(row("C1")[col("1-S")], "0.108");
    assert_eq!(row("C8")[col("3-S")], "0.320");
}

#[test]
fn bad_input_fails() {
    assert!(!roundabout(&["simulate", "--condition", "C99"])
        .status
        .success());
    assert!(
        !roundabout(&["simulate", "--condition", "C1", "--controller", "nope"])
            .status
            .success()
    );
    assert!(
        !roundabout(&["simulate", "--scenario", "/nonexistent.json"])
            .status
            .success()
    );
    assert!(!roundabout(&["simulate", "--condition", "C1", "--trace"])
        .status
        .success());
}
