use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uhgf-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn small_kl_config(dir: &Path) -> String {
    let cfg = dir.join("cfg.toml");
    std::fs::write(
        &cfg,
        "[kl_grid]\nalpha = 0.005\nratios = [1.0, 200.0]\ngammas = [-6.0, 0.0, 6.0]\n",
    )
    .unwrap();
    cfg.to_str().unwrap().to_owned()
}

#[test]
fn kl_grid_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = small_kl_config(dir.path());
    let o = sim(&["kl-grid", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("kl_grid.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("beta_over_alpha,gamma,classic_status,classic_kl,uhgf_kl")
    );
    assert_eq!(lines.count(), 6);
    assert!(csv.contains("200,-6,negative_precision,,"));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["cells"], 6);
    assert_eq!(summary["uhgf_successes"], 6);
    assert_eq!(summary["schema_version"], 1);
}

#[test]
fn kl_grid_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_kl_config(dir.path());
    let o = sim(&[
        "--format",
        "json",
        "kl-grid",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let cells = json(&dir.path().join("kl_grid.json"));
    assert_eq!(cells.as_array().unwrap().len(), 6);
    assert_eq!(cells[0]["classic_status"], "ok");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sim(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(sim(&["filter", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(sim(&[]).status.code(), Some(1));
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[series]\nnoise_sd = -1.0\n").unwrap();
    assert_eq!(
        sim(&["gen-series", "--config", bad.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, "[series\n").unwrap();
    assert_eq!(
        sim(&["gen-series", "--config", bad.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        sim(&["kl-grid", "--config", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sim(&["filter", "--input", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sim(&["scan", "--threads", "0", "--out", out]).status.code(), Some(2));
}

#[test]
fn gen_series_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(sim(&["gen-series", "--seed", seed, "--out", out.to_str().unwrap()])
            .status
            .success());
        read(&out.join("series.csv"))
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    assert_ne!(a, run("c", "12"));
    assert_eq!(a.lines().next(), Some("u,truth"));
    assert_eq!(a.lines().count(), 321);
}

#[test]
fn filter_on_ingested_series() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("series.csv");
    std::fs::write(&input, "1.0,0.0\n2.0,0.0\n-1.5,0.0\n").unwrap();
    let o = sim(&[
        "filter",
        "--mode",
        "classic",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = read(&dir.path().join("trajectory.csv"));
    let mut lines = traj.lines();
    assert_eq!(
        lines.next(),
        Some("step,node,mu_hat,pi_hat,mu,pi,b,x_star,classic_pi,flag")
    );
    assert_eq!(lines.count(), 6);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["mode"], "classic");
    assert_eq!(summary["steps_completed"], 3);
    assert!(summary["rmse_level1"].as_f64().is_some());
}

#[test]
fn filter_with_network_file() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.toml");
    std::fs::write(
        &net,
        r#"
[[nodes]]
kind = "input"
id = "obs"
input_variance = 4.0

[[nodes]]
kind = "state"
id = "level"
omega = -2.0

[[nodes]]
kind = "state"
id = "vol"
omega = -4.0

[[edges]]
parent = "level"
child = "obs"
kind = "value"

[[edges]]
parent = "vol"
child = "level"
kind = "volatility"
"#,
    )
    .unwrap();
    let o = sim(&[
        "filter",
        "--network",
        net.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["level1_node"], "level");
    assert_eq!(summary["completed"], true);

    std::fs::write(&net, "[[nodes]]\nkind = \"input\"\nid = \"u\"\ninput_variance = 1.0\n").unwrap();
    let o = sim(&[
        "filter",
        "--network",
        net.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_robust_preset_reports_failure_and_min_precision() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["compare", "--preset", "robust", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("classic: negative precision at step"), "{stdout}");
    assert!(stdout.contains("uhgf min precision x2"), "{stdout}");
    let summary = json(&dir.path().join("summary.json"));
    assert!(summary["classic"]["failure"]["step"].as_u64().is_some());
    assert_eq!(summary["uhgf"]["completed"], true);
    assert!(dir.path().join("trajectory_classic.csv").exists());
    assert!(read(&dir.path().join("trajectory_classic.csv"))
        .trim_end()
        .ends_with("negative_precision"));
}

#[test]
fn scan_outputs_identical_across_runs_at_one_thread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scan.toml");
    std::fs::write(
        &cfg,
        "[scan]\nomega1 = { start = -4.0, stop = 2.0, step = 2.0 }\nomega2 = { start = -1.0, stop = 2.0, step = 3.0 }\n",
    )
    .unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = sim(&[
            "scan",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        (read(&out.join("scan.csv")), read(&out.join("summary.json")))
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    let mut lines = a.0.lines();
    assert_eq!(lines.next(), Some("omega1,omega2,classic_ok,uhgf_ok,fail_step"));
    assert_eq!(lines.count(), 8);
    assert!(a.0.contains("2,-1,true,true,\n"));
}
