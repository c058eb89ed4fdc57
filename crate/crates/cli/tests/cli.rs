use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abcd")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = abcd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = abcd(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    err
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_solve_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("p.json");
    let trace = dir.path().join("t.csv");
    ok(&["gen", "--topology", "ws", "--n", "7", "--k", "3", "--rewire", "0.1", "--seed", "5", "--out", path(&problem)]);
    let text = fs::read_to_string(&problem).unwrap();
    assert!(text.starts_with("# abcd gen topology=ws n=7 k=3 ring_degree=4 rewire=0.1 seed=5"));

    let stdout = ok(&[
        "solve", "--problem", path(&problem), "--algo", "abcd-c", "--S", "8", "--M", "3", "--iters", "12", "--seed", "9",
        "--trace", path(&trace),
    ]);
    assert!(stdout.starts_with("utility="));
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.contains("algo=abcd-c S=8 M=3 iters=12 seed=9"));
    let rows = abcd_core::AnytimeTrace::from_csv(&csv).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.is_monotone());
    assert!(rows.records.iter().all(|r| r.employed_requests == 8 && r.onlooker_requests == 24));

    let again = ok(&[
        "solve", "--problem", path(&problem), "--algo", "abcd-c", "--S", "8", "--M", "3", "--iters", "12", "--seed", "9",
    ]);
    let again = abcd_core::AnytimeTrace::from_csv(&again).unwrap();
    assert_eq!(rows.first_divergence(&again), None);

    let oracle = ok(&["oracle", "--problem", path(&problem), "--resolution", "3"]);
    assert!(oracle.starts_with("# abcd oracle"));
    assert!(oracle.contains("utility=") && oracle.contains("assignment="));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["gen", "--topology", "ba", "--n", "12", "--m", "2", "--coeff-lo", "-1", "--coeff-hi", "1", "--seed", "4", "--out", path(out)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn bench_writes_traces_aggregate_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    fs::write(
        &plan,
        r#"{"topology": {"kind": "erdos-renyi", "p": 0.5, "n": 6}, "population_sizes": [4, 6], "elite_sizes": [2],
            "instances": 2, "repeats": 2, "budget": {"iterations": 5}, "base_seed": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&["bench", "--plan", path(&plan), "--out", path(&out)]);
    assert!(stdout.contains("16 runs"));
    assert!(stdout.contains("sign test"));
    assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 16);
    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("# plan="));
    for name in ["plot_abcd-e_iteration-vs-utility.csv", "plot_abcd-c_S-vs-utility.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert!(fail(&["solve", "--problem", path(&missing)]).contains("missing.json"));
    assert!(fail(&["gen", "--topology", "er", "--n", "5", "--out", path(&dir.path().join("x.json"))]).contains("--p"));
    fail(&["gen", "--topology", "er", "--n", "5", "--p", "1.5", "--out", path(&dir.path().join("x.json"))]);
    fail(&["solve", "--no-such-flag"]);

    let problem = dir.path().join("p.json");
    ok(&["gen", "--topology", "er", "--n", "40", "--p", "0.2", "--out", path(&problem)]);
    assert!(fail(&["oracle", "--problem", path(&problem), "--resolution", "11"]).contains("lower the resolution"));
    fail(&["solve", "--problem", path(&problem), "--S", "2", "--M", "3"]);
    fail(&["solve", "--problem", path(&problem), "--algo", "abcd-x"]);

    let plan = dir.path().join("plan.json");
    fs::write(&plan, r#"{"bogus": 1}"#).unwrap();
    fail(&["bench", "--plan", path(&plan), "--out", path(dir.path())]);
}
