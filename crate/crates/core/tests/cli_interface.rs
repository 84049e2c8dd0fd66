//! End-to-end checks of the command-line surface and the run/sweep drivers.

use std::process::Command;

use becsolve::cli::{run, sweep, InnerKind, PrecondKind, RunConfig, Scheme};
use becsolve::problems::ProblemKind;

fn small_config() -> RunConfig {
    RunConfig {
        problem: ProblemKind::HeatConst,
        scheme: Scheme::Bdf1,
        n: 8,
        m: 7,
        ..RunConfig::default()
    }
}

#[test]
fn identical_configs_produce_identical_results() {
    let cfg = small_config();
    let a = run(&cfg).unwrap().record;
    let b = run(&cfg).unwrap().record;
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.res, b.res);
    assert_eq!(a.error_inf, b.error_inf);
}

#[test]
fn preconditioned_and_unpreconditioned_solutions_agree() {
    // both runs at 1e-9 so conditioning slack keeps the gap under 10x the
    // default 1e-7 tolerance
    let mut bec = small_config();
    bec.tol = 1e-9;
    let mut none = bec.clone();
    none.preconditioner = PrecondKind::None;
    none.max_iters = 2000;
    none.restart = 200;
    let ub = run(&bec).unwrap().solution;
    let un = run(&none).unwrap().solution;
    let scale = ub.iter().map(|x| x * x).sum::<f64>().sqrt();
    let gap = ub
        .iter()
        .zip(&un)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(gap <= 1e-6 * scale, "solutions diverge: relative gap {:e}", gap / scale);
}

#[test]
fn sweep_with_empty_axes_is_a_single_run() {
    let cfg = small_config();
    let rows = sweep(&cfg, &[], &[]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n, cfg.n);
    assert_eq!(rows[0].m, cfg.m);
    let single = run(&cfg).unwrap().record;
    assert_eq!(rows[0].bec.iterations, single.iterations);
}

#[test]
fn multigrid_and_dense_inner_solvers_give_matching_metrics() {
    let mut mg = small_config();
    mg.problem = ProblemKind::HeatVar;
    mg.n = 8;
    mg.m = 15;
    mg.inner_solver = InnerKind::Multigrid;
    let mut dense = mg.clone();
    dense.inner_solver = InnerKind::Dense;
    let a = run(&mg).unwrap().record;
    let b = run(&dense).unwrap().record;
    let ratio = a.error_inf.unwrap() / b.error_inf.unwrap();
    assert!((0.5..=2.0).contains(&ratio), "error ratio {ratio}");
}

fn becsolve_cmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_becsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn binary_run_succeeds_on_small_problem() {
    let out = becsolve_cmd(&["run", "--n", "8", "--m", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("heat-const"), "unexpected output: {stdout}");
}

#[test]
fn binary_rejects_bad_epsilon_with_exit_code_2() {
    let out = becsolve_cmd(&["run", "--n", "8", "--m", "7", "--epsilon", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_rejects_incompatible_inner_solver_with_exit_code_2() {
    let out = becsolve_cmd(&[
        "run",
        "--problem",
        "convdiff",
        "--n",
        "8",
        "--m",
        "7",
        "--inner-solver",
        "fst",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn binary_verify_skips_degenerate_time_grids() {
    let out = becsolve_cmd(&[
        "verify",
        "--n-list",
        "1",
        "--m-list",
        "2",
        "--epsilon-list",
        "0.5",
        "--schemes",
        "1",
        "--skip-q1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("degenerate"), "missing skip notice: {stdout}");
}

#[test]
fn binary_verify_rejects_epsilon_above_one() {
    let out = becsolve_cmd(&[
        "verify",
        "--n-list",
        "3",
        "--m-list",
        "2",
        "--epsilon-list",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn field_dump_writes_parsable_grid() {
    let dir = std::env::temp_dir().join("becsolve-field-dump");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("field.csv");
    let out = becsolve_cmd(&[
        "run",
        "--n",
        "4",
        "--m",
        "7",
        "--field-dump",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,u"));
    let count = lines
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            assert_eq!(parts.len(), 3);
            for p in parts {
                p.parse::<f64>().unwrap();
            }
        })
        .count();
    assert_eq!(count, 49);
}
