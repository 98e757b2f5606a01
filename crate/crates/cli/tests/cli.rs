use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tandem-curb"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_bundled_config() {
    let o = run(&["validate"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("u^P - c^R = 87.5"));
}

#[test]
fn invalid_config_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("hk.toml")).unwrap().replace("beta = 100.0", "beta = 130.0");
    std::fs::write(&path, text).unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("β < α"));
}

#[test]
fn unknown_key_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("hk.toml")).unwrap() + "colour = 1\n";
    std::fs::write(&path, text).unwrap();
    assert_eq!(run(&["--config", path.to_str().unwrap(), "validate"]).status.code(), Some(1));
}

#[test]
fn regime_error_exits_with_2() {
    let o = run(&["--config", config("late_example.toml").to_str().unwrap(), "--late", "solve"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_reports_hong_kong_scenario() {
    let o = run(&["solve"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("scenario S5"));
    assert!(s.contains("RV [6:36:01, 7:58:28]"));
}

#[test]
fn late_solve_and_verify() {
    let cfg = config("late_l7.toml");
    let o = run(&["--config", cfg.to_str().unwrap(), "--late", "solve"]);
    assert!(stdout(&o).contains("scenario L7"));
    let o = run(&["--config", cfg.to_str().unwrap(), "--late", "verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn simulate_writes_queue_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    let o = run(&["--dt", "0.01", "--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_h,q_H,q_CR,q_CP"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((first[0] - (9.0 - 2.3997993329627567)).abs() < 1e-9);
    assert_eq!(&first[1..], &[0.0, 0.0, 0.0]);
}

#[test]
fn curves_csv_has_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    assert!(run(&["--out", out.to_str().unwrap(), "solve", "--curves"]).status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("time_h,A_H,D_H,A_CR,D_CR,A_CP,D_CP,w_H,w_CR,w_CP\n"));
}

#[test]
fn priced_verify_passes() {
    let o = run(&["verify", "--priced"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("fee_gap_vs_cost_gap"));
}

#[test]
fn price_writes_fee_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fees.csv");
    let o = run(&["--out", out.to_str().unwrap(), "price"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fee RV [0.00, 230.65]"));
    assert!(std::fs::read_to_string(out).unwrap().starts_with("time_h,fee_rv,fee_pv\n"));
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("synthetic.toml");
    let args = |out: &str| {
        vec![
            "--config".to_string(),
            cfg.to_str().unwrap().to_string(),
            "--out".into(),
            out.to_string(),
            "sweep".into(),
            "--axis".into(),
            "s_curb_rv:100:2400:8".into(),
            "--axis".into(),
            "s_curb_pv:100:2400:8".into(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert!(bin().args(args(p.to_str().unwrap())).status().unwrap().success());
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 65);
}

#[test]
fn sweep_rejects_malformed_axis() {
    let o = run(&["sweep", "--axis", "s_curb_rv:1:2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["sweep", "--axis", "s_curb_rv:1:2:1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn case_hk_prints_comparison() {
    let o = run(&["case-hk"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("published"));
    assert!(s.contains("social cost reduction  30.15%"));
}
