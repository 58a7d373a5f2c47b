use std::process::Command;

use statecov::experiment::CSV_HEADER;

fn statecov() -> Command {
    Command::new(env!("CARGO_BIN_EXE_statecov"))
}

#[test]
fn experiment_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let status = statecov().args(["experiment", "--n", "60", "--seed", "3", "--out"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let data: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 60);
    for line in &data {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 11);
        for f in &fields[1..] {
            f.parse::<f64>().unwrap();
            assert!(!f.contains('e') && !f.contains('E'), "{f}");
        }
    }
    assert!(text.lines().any(|l| l.starts_with("# status,Converged")));
}

#[test]
fn experiment_output_is_deterministic() {
    let run = || statecov().args(["experiment", "--n", "40", "--seed", "9"]).output().unwrap().stdout;
    let a = run();
    assert!(!a.is_empty());
    assert_eq!(a, run());
}

#[test]
fn iteration_cap_exits_two() {
    let out = statecov().args(["experiment", "--n", "50", "--max-outer", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_one() {
    let out = statecov().args(["experiment", "--n", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = statecov().args(["experiment", "--omega", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_prints_one_row_per_size() {
    let out = statecov().args(["bench", "--sizes", "50,100", "--reps", "1"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("50,") && lines[2].starts_with("100,"));
}
