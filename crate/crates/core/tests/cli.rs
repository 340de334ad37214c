use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cocd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocd")).args(args).output().expect("spawn cocd")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const QUAD: &str = r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "cocd", "budget": 2, "alpha": 0.1}, "steps": 3}"#;

#[test]
fn run_writes_initial_row_plus_one_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.json", QUAD);
    let out = dir.path().join("trace.csv");
    let o = cocd(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let header = String::from_utf8(cocd(&["header"]).stdout).unwrap();
    assert_eq!(text.lines().next(), Some(header.trim_end()));
    assert_eq!(text.lines().count(), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.json", QUAD);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = cocd(&["run", &cfg, "--seed", "7", "--verify-every", "1", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "cocd", "gamma": 1.5}, "steps": 3}"#,
    );
    let o = cocd(&["run", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma must lie in [0,1]"));

    let missing = dir.path().join("nope.json");
    assert_eq!(cocd(&["run", missing.to_str().unwrap()]).status.code(), Some(2));

    let mismatch_a = write(dir.path(), "a.json", QUAD);
    let mismatch_b = write(
        dir.path(),
        "b.json",
        r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "zosgd", "samples": 3}, "steps": 3}"#,
    );
    let o = cocd(&["compare", &mismatch_a, &mismatch_b]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget mismatch"));
}

#[test]
fn runtime_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.json",
        r#"{"objective": {"kind": "rosenbrock", "n": 4}, "optimizer": {"kind": "cocd", "budget": 2, "epsilon": 1e80}, "steps": 5}"#,
    );
    let o = cocd(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite objective value"));

    let ok = write(dir.path(), "q.json", QUAD);
    let out = Path::new(&ok).join("trace.csv");
    let o = cocd(&["run", &ok, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trace.csv"));
}

#[test]
fn verify_subcommand_passes() {
    let o = cocd(&["verify"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 5 && text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn sweep_and_bound_check_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "q.json",
        r#"{"objective": {"kind": "quadratic", "n": 16}, "optimizer": {"kind": "cocd", "alpha": 0.1},
            "steps": 20, "sampling": {"pairs": 2}}"#,
    );
    let out = dir.path().join("run.csv");
    let out = out.to_str().unwrap();
    let o = cocd(&["sweep", &cfg, "--axis", "budget", "--values", "2,4,8", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("sweep_budget.csv").exists());

    let o = cocd(&["bound-check", &cfg, "--budgets", "1,2,4,8,16", "--verify-every", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("excluded from fit") && stdout.contains("slope="));
    assert!(dir.path().join("bound_check.csv").exists());
}
