use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsparse"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_summary_and_exits_zero() {
    let o = run(&[
        "solve",
        "--gen",
        "poisson2d:8",
        "--ranks",
        "2",
        "--threads",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("converged after"), "{s}");
    assert!(s.contains("MatMult"));
}

#[test]
fn matrix_file_and_rhs_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mtx");
    let b = dir.path().join("b.mtx");
    std::fs::write(
        &a,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 5\n1 1 4\n2 1 -1\n2 2 4\n3 2 -1\n3 3 4\n",
    )
    .unwrap();
    std::fs::write(
        &b,
        "%%MatrixMarket matrix array real general\n3 1\n1\n2\n3\n",
    )
    .unwrap();
    let log = dir.path().join("log.json");
    let o = run(&[
        "solve",
        "--matrix",
        a.to_str().unwrap(),
        "--rhs",
        b.to_str().unwrap(),
        "--solver",
        "gmres",
        "--rtol",
        "1e-12",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(log).unwrap()).unwrap();
    assert_eq!(v["environment"]["nnz"], 7);
    assert_eq!(v["solver"]["config"]["method"], "gmres");
}

#[test]
fn nonconvergence_exits_nonzero() {
    let o = run(&[
        "solve",
        "--gen",
        "poisson2d:16",
        "--max-iters",
        "2",
        "--pc",
        "none",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("NOT converged"));
}

#[test]
fn bad_inputs_fail_with_message() {
    for args in [
        &["solve", "--gen", "poisson2d:1"][..],
        &["solve", "--gen", "mystery:4"],
        &["solve", "--matrix", "/nonexistent/a.mtx"],
        &["solve", "--gen", "poisson2d:4", "--ranks", "0"],
        &[
            "solve",
            "--gen",
            "poisson2d:4",
            "--rtol",
            "0",
            "--atol",
            "0",
        ],
        &["comm-sweep", "--gen", "poisson2d:4", "--cores", "0"],
        &["triad", "--n", "0"],
        &["overhead", "--trials", "0"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).starts_with("error:"),
            "{args:?}"
        );
    }
    // Source flags are mutually exclusive and one is required.
    assert_ne!(run(&["solve"]).status.code(), Some(0));
    assert_ne!(
        run(&["solve", "--gen", "poisson2d:4", "--matrix", "x.mtx"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn comm_sweep_json() {
    let o = run(&["comm-sweep", "--gen", "tridiag:8", "--cores", "4", "--json"]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ghosts: Vec<u64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["ghost_volume"].as_u64().unwrap())
        .collect();
    assert_eq!(ghosts, [6, 2, 0]);
    let table = run(&[
        "comm-sweep",
        "--gen",
        "poisson2d:16",
        "--cores",
        "4",
        "--rcm",
    ]);
    assert!(table.status.success());
    assert_eq!(stdout(&table).lines().count(), 5);
}

#[test]
fn rcm_flag_logs_reduced_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("r.json");
    let o = run(&[
        "solve",
        "--gen",
        "tridiag:100",
        "--shuffle",
        "--seed",
        "9",
        "--rcm",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(log).unwrap()).unwrap();
    assert_eq!(v["environment"]["bandwidth"], 1);
    assert!(v["environment"]["input_bandwidth"].as_u64().unwrap() > 1);
}
