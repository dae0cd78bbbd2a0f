use leosched::policy::PolicyParams;
use leosched::simharness::config::ScenarioConfig;
use leosched::simharness::output::strip_comments;
use leosched::simharness::sweep::{protected_near_focal, regime_base};
use leosched::simharness::world::{rng_for, stream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_leosched"));
    c.env_remove("LEOSCHED_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, name: &str, protected: bool) -> PathBuf {
    let mut c = regime_base(3);
    c.num_slots = 5;
    if protected {
        c.protected.users.push(protected_near_focal(c.rf.plan.num_channels));
    }
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = strip_comments(&std::fs::read_to_string(path).unwrap());
    csv::Reader::from_reader(text.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn csv_header(path: &Path) -> csv::StringRecord {
    let text = strip_comments(&std::fs::read_to_string(path).unwrap());
    csv::Reader::from_reader(text.as_bytes()).headers().unwrap().clone()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let i = csv_header(path).iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    csv_rows(path).iter().map(|r| r[i].to_string()).collect()
}

fn values(path: &Path) -> Vec<f64> {
    let mut v: Vec<f64> = column(path, "axis_value").iter().map(|x| x.parse().unwrap()).collect();
    v.dedup();
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_metrics_with_header() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let out = d.path().join("out");
    let o = run(&["simulate", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let hash = ScenarioConfig::load(&cfg).unwrap().hash();
    assert!(text.starts_with("# leosched "));
    assert!(text.contains(&format!("# config_sha256 {hash}\n")));
    assert!(text.contains("# seed 3\n"));
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 1);
    assert!(out.join("completions.csv").exists());
    assert!(!out.join("trace.jsonl").exists());
}

#[test]
fn missing_seed_exits_2_naming_the_field() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["simulate", s(&cfg), "--out", s(d.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn bad_configs_exit_2() {
    let d = TempDir::new().unwrap();
    let missing = d.path().join("nope.json");
    assert_eq!(code(&run(&["simulate", s(&missing)])), 2);
    let cfg = small_config(d.path(), "c.json", false);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["power_scale"] = serde_json::json!(-1.0);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["validate-config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("power_scale"), "{}", stderr(&o));
    v["power_scale"] = serde_json::json!(1.0);
    v["traffic"]["no_such_field"] = serde_json::json!(1);
    std::fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["validate-config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("traffic"), "{}", stderr(&o));
}

#[test]
fn validate_config_accepts_a_good_file() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", true);
    let o = run(&["validate-config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok "));
}

#[test]
fn strategy_override_is_echoed() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let o = run(&["simulate", s(&cfg), "--strategy", "full_reuse", "--seed", "11", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(column(&d.path().join("metrics.csv"), "strategy"), vec!["full_reuse"]);
    assert_eq!(column(&d.path().join("metrics.csv"), "seed"), vec!["11"]);
    let echoed = ScenarioConfig::load(&d.path().join("config.json")).unwrap();
    assert_eq!(echoed.strategy.to_string(), "full_reuse");
    assert!(std::fs::read_to_string(d.path().join("metrics.csv")).unwrap().contains(&format!("# config_sha256 {}\n", echoed.hash())));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let out = d.path().join("env_out");
    let o = bin().args(["simulate", s(&cfg)]).env("LEOSCHED_OUT_DIR", &out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn unknown_axis_exits_2() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let o = run(&["sweep", "--config", s(&cfg), "--axis", "altitude", "--values", "1,2", "--out", s(d.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("altitude"), "{}", stderr(&o));
    let o = run(&["sweep", "--preset", "fig9", "--out", s(d.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_writes_tidy_csv_and_reruns_identically() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let a = d.path().join("a");
    let b = d.path().join("b");
    for out in [&a, &b] {
        let o = run(&["sweep", "--config", s(&cfg), "--axis", "neighbors", "--values", "0,2", "--seeds", "2", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let tidy = a.join("sweep_neighbors.csv");
    let header: Vec<String> = csv_header(&tidy).iter().map(String::from).collect();
    for col in ["axis_value", "strategy", "metric", "mean", "stderr", "seeds"] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    assert_eq!(std::fs::read(&tidy).unwrap(), std::fs::read(b.join("sweep_neighbors.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("sweep_neighbors_runs.csv")).unwrap(), std::fs::read(b.join("sweep_neighbors_runs.csv")).unwrap());
    // 2 values × 3 strategies × 2 seeds.
    assert_eq!(csv_rows(&a.join("sweep_neighbors_runs.csv")).len(), 12);
}

#[test]
fn fig3_preset_covers_two_to_eight_neighbours() {
    let d = TempDir::new().unwrap();
    let o = run(&["sweep", "--preset", "fig3", "--seeds", "1", "--strategies", "full_reuse", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["sweep_fig3_neighbors.csv", "sweep_fig3_neighbors_protected.csv"] {
        assert_eq!(values(&d.path().join(name)), vec![2.0, 4.0, 6.0, 8.0]);
        assert!(column(&d.path().join(name), "axis").iter().all(|a| a == "neighbors"));
    }
}

#[test]
fn fig5_preset_sweeps_uts_and_arrival_rate() {
    let d = TempDir::new().unwrap();
    let o = run(&["sweep", "--preset", "fig5", "--seeds", "1", "--strategies", "proposed", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let uts = d.path().join("sweep_fig5_uts.csv");
    let rate = d.path().join("sweep_fig5_arrival_rate.csv");
    assert!(column(&uts, "metric").iter().any(|m| m == "mean_latency_slots"));
    assert_eq!(values(&uts), vec![12.0, 24.0, 48.0]);
    let r = values(&rate);
    assert!(r.len() == 3 && r[0] < r[1] && r[1] < r[2], "{r:?}");
}

#[test]
fn train_with_zero_iterations_writes_the_initialisation() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let o = run(&["train", "--config", s(&cfg), "--iterations", "0", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = PolicyParams::load(&d.path().join("policy.json")).unwrap();
    let want = PolicyParams::init(&ScenarioConfig::load(&cfg).unwrap().policy.init, &mut rng_for(0, &[stream::POLICY_INIT]));
    assert_eq!(got, want);
    assert!(csv_rows(&d.path().join("train_log.csv")).is_empty());
}

#[test]
fn train_log_has_one_row_per_iteration() {
    let d = TempDir::new().unwrap();
    let o = run(&["train", "--bandit", "--iterations", "7", "--lr", "0.01", "--out", s(d.path()), "--params-out", "p/bandit.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(column(&d.path().join("train_log.csv"), "iteration"), (0..7).map(|i| i.to_string()).collect::<Vec<_>>());
    assert!(d.path().join("p/bandit.json").exists());
}

#[test]
fn trained_parameters_drive_simulate() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let o = run(&["train", "--config", s(&cfg), "--iterations", "2", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["simulate", s(&cfg), "--policy", s(&d.path().join("policy.json")), "--out", s(&d.path().join("sim"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echoed = std::fs::read_to_string(d.path().join("sim/config.json")).unwrap();
    assert!(echoed.contains("\"neural\""));
    let o = run(&["simulate", s(&cfg), "--policy", s(&d.path().join("missing.json"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn epfd_audit_exit_codes() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", true);
    let out = d.path().join("run");
    let o = run(&["simulate", s(&cfg), "--trace", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echoed = out.join("config.json");
    let trace = out.join("trace.jsonl");

    let o = run(&["epfd-audit", s(&echoed), s(&trace)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("min margin"));

    let mut lines: Vec<serde_json::Value> = std::fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    for row in lines[2]["satellites"][0]["power"].as_array_mut().unwrap() {
        for p in row.as_array_mut().unwrap() {
            *p = serde_json::json!(1e3);
        }
    }
    let bad = d.path().join("bad.jsonl");
    std::fs::write(&bad, lines.iter().map(|v| format!("{v}\n")).collect::<String>()).unwrap();
    let o = run(&["epfd-audit", s(&echoed), s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("VIOLATION slot 1"));

    let other = small_config(d.path(), "other.json", false);
    let o = run(&["epfd-audit", s(&other), s(&trace)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    std::fs::write(&bad, "{\"not\":\"a header\"}\n").unwrap();
    assert_eq!(code(&run(&["epfd-audit", s(&echoed), s(&bad)])), 2);
}

#[test]
fn audit_without_protected_users_says_so() {
    let d = TempDir::new().unwrap();
    let cfg = small_config(d.path(), "c.json", false);
    let o = run(&["simulate", s(&cfg), "--trace", "--out", s(d.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["epfd-audit", s(&d.path().join("config.json")), s(&d.path().join("trace.jsonl"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("no protected users"));
}
