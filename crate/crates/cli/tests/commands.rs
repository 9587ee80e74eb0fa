use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn htube(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htube")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [("n_traj = 10\nbogus_key = 1\n", "bogus_key"), ("eta = \"big\"\n", "eta"), ("h_embed = 0.0\n", "h_embed")] {
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, text).unwrap();
        let o = htube(&["synthesize", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
        assert_eq!(o.status.code(), Some(1));
        let err = stdout_json(&o);
        assert_eq!(err["status"], "error");
        assert_eq!(err["key"], key);
    }
}

#[test]
fn missing_gait_file_is_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = htube(&["verify", "--gait", p(&dir.path().join("nope.json")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["error"], "Io");
}

#[test]
fn synthesize_verify_montecarlo_export() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let o = htube(&["synthesize", "--out", p(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(stdout_json(&o)["residual"].as_f64().unwrap() <= 1e-8);
    assert!(a.join("config.resolved.toml").exists());
    let o = htube(&["synthesize", "--out", p(&b)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("gait.json")).unwrap(), std::fs::read(b.join("gait.json")).unwrap());

    let gait = a.join("gait.json");
    let o = htube(&["verify", "--gait", p(&gait), "--out", p(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(a.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verified"], true);
    assert!(cert["gamma"].as_f64().unwrap() <= 1.0);
    let tube = std::fs::read_to_string(a.join("tube.csv")).unwrap();
    let rows = hybrid_tube::io::tube_from_csv(&tube).unwrap();
    assert!(rows.len() > 10);

    let certp = a.join("certificate.json");
    let o = htube(&["export", "--gait", p(&gait), "--cert", p(&certp), "--out", p(&b)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["rows"].as_u64().unwrap() as usize, rows.len());
    assert_eq!(std::fs::read_to_string(b.join("tube.csv")).unwrap(), tube);

    let cfg = dir.path().join("mc.toml");
    std::fs::write(&cfg, "n_traj = 12\nn_crossings = 4\n").unwrap();
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["montecarlo", "--config", p(&cfg), "--gait", p(&gait), "--cert", p(&certp), "--out", p(out), "--seed", "3"];
        args.extend_from_slice(extra);
        htube(&args)
    };
    let o = run(&a, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["escapes"], 0);
    assert!(std::fs::read_to_string(a.join("config.resolved.toml")).unwrap().contains("seed = 3"));
    let o = run(&b, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("montecarlo.json")).unwrap(), std::fs::read(b.join("montecarlo.json")).unwrap());

    let o = run(&dir.path().join("inflated"), &["--inflate", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout_json(&o)["escapes"].as_u64().unwrap() > 0);
}

#[test]
fn unstable_poles_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = htube(&["synthesize", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("unstable.toml");
    std::fs::write(&cfg, "poles = [0.0, 1.5, 0.2, 0.3]\n").unwrap();
    let o = htube(&["verify", "--config", p(&cfg), "--gait", p(&dir.path().join("gait.json")), "--out", p(&dir.path().join("v"))]);
    let code = o.status.code();
    assert!(code == Some(1) || code == Some(2), "{code:?}");
    if code == Some(1) {
        assert_eq!(stdout_json(&o)["error"], "SpectralRadiusTooLarge");
    }
}

#[test]
fn short_design_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = htube(&["synthesize", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = dir.path().join("design.toml");
    std::fs::write(&cfg, "n_grad = 2\nmax_rounds = 1\n").unwrap();
    let out = dir.path().join("d");
    let o = htube(&["design", "--config", p(&cfg), "--gait", p(&dir.path().join("gait.json")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let s = stdout_json(&o);
    assert!(s["enlargement"].as_f64().unwrap() >= 1.0);
    let hist = std::fs::read_to_string(out.join("phi_history.csv")).unwrap();
    let mut lines = hist.lines().skip(1);
    let first: Vec<f64> = lines.next().unwrap().split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0; 4]);
    let phis: Vec<f64> = hist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(phis.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.join("certificate.json").exists() && out.join("design.json").exists());
}
