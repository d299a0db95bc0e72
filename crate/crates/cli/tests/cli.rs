use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hdg_kdv::experiments::Snapshot;
use hdg_kdv::stepper::TimeScheme;
use hdg_kdv::verify::{ExperimentReport, LevelRecord};
use hdg_kdv::StabilizationParams;
use hdg_kdv_cli::config::{parse_dt_rule, parse_levels, RunConfig, RunKind};
use hdg_kdv_cli::output::{self, EnergyRow, ErrorRow, SnapshotRow};
use hdg_kdv_cli::CliError;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hdg-kdv"))
}

fn run_with_config(dir: &Path, body: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, body).unwrap();
    bin().arg("run").arg("--config").arg(&cfg).args(extra).output().unwrap()
}

fn level(level: u32, h: f64, e: [f64; 3], orders: Option<[f64; 3]>) -> LevelRecord {
    LevelRecord {
        level,
        num_elements: 1 << level,
        h,
        dt: 0.1 * h * h,
        e_u: e[0],
        e_q: e[1],
        e_p: e[2],
        e_ut: None,
        order_u: orders.map(|o| o[0]),
        order_q: orders.map(|o| o[1]),
        order_p: orders.map(|o| o[2]),
        order_ut: None,
        min_newton: 1,
        max_newton: 1,
    }
}

#[test]
fn csv_tables_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let report = ExperimentReport {
        k: 2,
        params: StabilizationParams::reference(),
        dt_rule: "preset".into(),
        scheme: TimeScheme::Midpoint,
        final_time: 0.1,
        levels: vec![
            level(1, 0.5, [1.0 / 3.0, 2.0f64.sqrt() * 1e-3, 7.123456789012345e-7], None),
            level(2, 0.25, [1e-300, 0.1 + 0.2, f64::MIN_POSITIVE], Some([2.9999999999999996, -0.5, 1e17])),
        ],
    };
    output::write_errors(dir.path(), &report).unwrap();
    let back: Vec<ErrorRow> = output::read_rows(&dir.path().join("errors.csv")).unwrap();
    assert_eq!(back, output::error_rows(&report));
    let header = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "k,level,h,e_u,order_u,e_q,order_q,e_p,order_p");

    let energy = vec![(0.0, 1.0 / 7.0), (1e-3, 0.142857142857)];
    output::write_energy(dir.path(), &energy).unwrap();
    let back: Vec<EnergyRow> = output::read_rows(&dir.path().join("energy.csv")).unwrap();
    assert_eq!(back.iter().map(|r| (r.t, r.l2_norm)).collect::<Vec<_>>(), energy);

    let snaps = vec![
        Snapshot { t: 0.0, x: vec![0.1, 0.2], u: vec![1.0, -2.5], q: vec![0.0, 1e-20], p: vec![3.0, 4.0] },
        Snapshot { t: 0.3, x: vec![0.1, 0.2], u: vec![5.0, 6.0], q: vec![7.0, 8.0], p: vec![9.0, 10.0] },
    ];
    output::write_snapshots(dir.path(), &snaps).unwrap();
    let back: Vec<SnapshotRow> = output::read_rows(&dir.path().join("snapshot_q.csv")).unwrap();
    let expect: Vec<(f64, f64, f64)> =
        snaps.iter().flat_map(|s| s.x.iter().zip(&s.q).map(move |(&x, &v)| (s.t, x, v))).collect();
    assert_eq!(back.iter().map(|r| (r.t, r.x, r.value)).collect::<Vec<_>>(), expect);
}

const ZERO_RUN: &str = r#"
[problem]
name = "zero"
a = 0.0
b = 2.0
beta = 3.0
m = 2

[discretization]
k = 2
num_elements = 6

[time]
scheme = "midpoint"
final_time = 0.05
dt = 0.01

[tau]
tau_f = "constant"
tau_f_value = 3.0

[output]
dir = "OUT"
snapshot_stride = 1
"#;

#[test]
fn missing_key_is_named() {
    let text = ZERO_RUN.replace("k = 2\n", "");
    let err = RunConfig::parse(&text).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("`k`"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let err = RunConfig::parse(&ZERO_RUN.replace("final_time = 0.05", "final_time = -1.0")).unwrap_err();
    assert!(err.to_string().contains("time.final_time"), "{err}");
    let err = RunConfig::parse(&ZERO_RUN.replace("tau_f_value = 3.0", "")).unwrap_err();
    assert!(err.to_string().contains("tau.tau_f_value"), "{err}");
    let err = RunConfig::parse(&ZERO_RUN.replace("m = 2", "m = 2\ncolour = 1")).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(dir.path(), &text, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`k`"));
}

#[test]
fn config_parsing_examples() {
    let cfg = RunConfig::parse(ZERO_RUN).unwrap();
    assert_eq!(cfg.kind(), RunKind::TimeSeries(6));
    assert_eq!(cfg.scheme().unwrap(), TimeScheme::Midpoint);
    assert_eq!(parse_levels("2..4").unwrap(), vec![2, 3, 4]);
    assert!(parse_levels("4..2").is_err());
    assert_eq!(parse_dt_rule("0.1*h^3").unwrap(), hdg_kdv::experiments::DtRule::H3(0.1));
    assert_eq!(parse_dt_rule("preset").unwrap(), hdg_kdv::experiments::DtRule::Preset);
    assert!(parse_dt_rule("h^4").is_err());
}

#[test]
fn zero_problem_writes_all_zero_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let body = ZERO_RUN.replace("OUT", out_dir.to_str().unwrap());
    let out = run_with_config(dir.path(), &body, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["u", "q", "p"] {
        let rows: Vec<SnapshotRow> = output::read_rows(&out_dir.join(format!("snapshot_{f}.csv"))).unwrap();
        // 6 snapshots of 6 elements, the same quadrature points on each
        assert!(!rows.is_empty() && rows.len() % 36 == 0, "{}", rows.len());
        assert!(rows.iter().all(|r| r.value == 0.0));
    }
    let energy: Vec<EnergyRow> = output::read_rows(&out_dir.join("energy.csv")).unwrap();
    assert_eq!(energy.len(), 6);
    assert!(energy.iter().all(|r| r.l2_norm == 0.0));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("problem = zero\n"), "{report}");
    assert!(report.contains("[checks]\nnone\n"));
}

const LINEAR_STUDY: &str = r#"
[problem]
name = "manufactured_trig"
a = 0.0
b = 1.0
beta = BETA
m = 2
wave = 2.0

[discretization]
k = 1
levels = [2, 3, 4]

[time]
final_time = 0.05
dt = "0.1*h^2"
init = "stage"

[tau]
tau_f = "constant"
tau_f_value = 3.0

[output]
dir = "OUT"
"#;

#[test]
fn linear_config_run_takes_one_newton_iteration_and_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("lin");
    let body = LINEAR_STUDY.replace("OUT", out_dir.to_str().unwrap()).replace("BETA", "0.0");
    let out = run_with_config(dir.path(), &body, &["--assert"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("newton iterations per step: 1..1"), "{report}");
    let rows: Vec<ErrorRow> = output::read_rows(&out_dir.join("errors.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].order_u.unwrap() >= 1.8);
}

#[test]
fn nonlinear_config_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = vec![];
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let body = LINEAR_STUDY.replace("OUT", out_dir.to_str().unwrap()).replace("BETA", "3.0");
        let out = run_with_config(dir.path(), &body, &["--assert"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        tables.push(fs::read(out_dir.join("errors.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn solver_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"
[problem]
name = "nonlinear_trig"

[discretization]
k = 1
num_elements = 8

[time]
final_time = 1.0
dt = 0.5
init = "l2"
newton_max_iters = 1

[tau]
tau_f = "constant"
tau_f_value = 3.0

[output]
dir = "{}"
"#,
        dir.path().join("fail").display()
    );
    let out = run_with_config(dir.path(), &body, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Newton"));
}

#[test]
fn threshold_failure_exits_with_4_only_under_assert() {
    let args = ["convergence", "--experiment", "1", "--k", "1", "--levels", "1..2", "--dt", "0.1", "--scheme", "be"];
    let out = bin().args(args).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL finest-level orders"));
    let out = bin().args(args).arg("--assert").output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn convergence_command_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["convergence", "--experiment", "2", "--k", "1", "--levels", "3..4", "--assert", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rows: Vec<ErrorRow> = output::read_rows(&dir.path().join("errors.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![3, 4]);
    assert!(rows[0].order_u.is_none() && rows[1].order_u.unwrap() > 1.8);
    // h = pi 2^-n
    assert!((rows[1].h - std::f64::consts::PI / 16.0).abs() < 1e-15);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.starts_with("[config]\nexperiment = 2\nk = 1\n"));
}

#[test]
fn check_tau_reports_four_predicates() {
    let out = bin().args(["check-tau", "--tau", "0", "-1", "1", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.matches("PASS").count(), 4, "{text}");

    // determinant zero: tau_qu+ + tau_qu- - tau_pu+ tau_qp- = 0 + 1 - 1 = 0
    let out = bin().args(["check-tau", "--tau", "0", "1", "1", "1", "--assert"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL cond_tau"));

    let out = bin().args(["check-tau", "--tau", "0", "1", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn projection_test_command() {
    let out = bin().args(["projection-test", "--k", "2", "--assert"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS projection orders"));
    let out = bin().args(["projection-test", "--k", "1", "--tau", "0", "1", "1", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
