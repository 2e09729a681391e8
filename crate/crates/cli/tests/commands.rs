//! End-to-end runs of the `nlgrad` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn nlgrad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlgrad"))
        .args(args)
        .env("NLGRAD_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_c_defaults_write_one_row_per_node() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let svg = dir.path().join("h.svg");
    let o = nlgrad(&[
        "solve-c",
        "--c",
        "0",
        "--g",
        "const:-1",
        "--out",
        path(&out),
        "--svg",
        path(&svg),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,value"));
    assert_eq!(lines.count(), 2000);
    assert!(stdout(&o).contains("residual"));
    let svg = fs::read_to_string(&svg).unwrap();
    assert!(svg.contains(r#"width="800" height="500""#) && svg.contains("<polyline"));
}

#[test]
fn kernel_echoes_unit_mass() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("k.csv");
    let o = nlgrad(&[
        "kernel",
        "--s",
        "0.9",
        "--n-cells",
        "400",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let mass: f64 = line
        .split("sum(Q) h = ")
        .nth(1)
        .and_then(|rest| rest.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((mass - 1.0).abs() < 1e-12);
    assert!(line.contains("c_norm"));
    assert!(fs::read_to_string(&out).unwrap().starts_with("x,Q,w,d\n"));
}

#[test]
fn invalid_delta_fails_fast_without_output() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("never.csv");
    let o = nlgrad(&["solve-c", "--delta", "5", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--delta"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(nlgrad(&["kernel", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(nlgrad(&["solve-c", "--g", "cubic"]).status.code(), Some(1));
    let o = nlgrad(&["neumann", "--s", "1.2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("(0, 1)"));
    assert_eq!(nlgrad(&["--help"]).status.code(), Some(0));
}

#[test]
fn boundary_csv_round_trip_matches_const() {
    let dir = tempdir().unwrap();
    let g = dir.path().join("g.csv");
    // 400 cells on (-4, 4) leave 50 nodes per collar
    let rows: String = std::iter::once("x,value\n".to_string())
        .chain((0..100).map(|i| format!("{i},-1\n")))
        .collect();
    fs::write(&g, rows).unwrap();
    let from_csv = dir.path().join("a.csv");
    let from_const = dir.path().join("b.csv");
    let g_arg = format!("csv:{}", path(&g));
    let a = nlgrad(&[
        "solve-c",
        "--n-cells",
        "400",
        "--g",
        &g_arg,
        "--out",
        path(&from_csv),
    ]);
    let b = nlgrad(&[
        "solve-c",
        "--n-cells",
        "400",
        "--g",
        "const:-1",
        "--out",
        path(&from_const),
    ]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(fs::read(&from_csv).unwrap(), fs::read(&from_const).unwrap());

    fs::write(&g, "1\n2\n").unwrap();
    let o = nlgrad(&["solve-c", "--n-cells", "400", "--g", &g_arg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Gamma_delta"));
}

#[test]
fn localize_writes_rows_in_order_and_deterministically() {
    let dir = tempdir().unwrap();
    let first = dir.path().join("one.csv");
    let second = dir.path().join("two.csv");
    let args = |p: &Path| {
        vec![
            "localize".to_string(),
            "--s-list".into(),
            "0.9,0.5".into(),
            "--n-cells".into(),
            "400".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    for p in [&first, &second] {
        let a = args(p);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(nlgrad(&a).status.code(), Some(0));
    }
    let text = fs::read_to_string(&first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,l2_error,energy_gap,el_residual");
    assert!(lines[1].starts_with("9.0000000000000002e-1"));
    assert!(lines[2].starts_with("5.0000000000000000e-1"));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn neumann_smooth_n_and_poincare_succeed() {
    let dir = tempdir().unwrap();
    let ne = dir.path().join("ne.csv");
    let o = nlgrad(&["neumann", "--n-cells", "400", "--out", path(&ne)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&ne).unwrap().lines().count(), 2);

    let o = nlgrad(&["smooth-n", "--n-cells", "800"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("max |D w|"));

    let pc = dir.path().join("p.csv");
    let o = nlgrad(&["poincare", "--n-cells", "400", "--out", path(&pc)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&pc).unwrap();
    assert!(text.starts_with("mode,constant,lambda_min,iterations,last_change\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_nlgrad"))
        .args(["kernel", "--n-cells", "400"])
        .env("NLGRAD_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NLGRAD_THREADS"));
}
