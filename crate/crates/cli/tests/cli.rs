use std::process::{Command, Output};

use serde_json::Value;

fn grl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grl"))
        .args(args)
        .env_remove("GRL_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn exact_piterbarg_constant() {
    let v = json(&grl(&["constants", "exact", "--alpha", "1", "--a", "1"]));
    assert_eq!(v["result"]["value"], 2.0);
    assert_eq!(v["result"]["constant"], "P_1^1");
}

#[test]
fn exact_pickands_constant() {
    let v = json(&grl(&["constants", "exact", "--alpha", "2"]));
    let h2 = v["result"]["value"].as_f64().unwrap();
    assert!((h2 - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
}

#[test]
fn ratio_constant_for_long_memory_finite_horizon() {
    let v = json(&grl(&["asymptotics", "ratio-constant", "--H", "0.75", "--gamma", "0.3", "--T", "1"]));
    assert_eq!(v["result"]["result"]["value"], 1.0);
}

#[test]
fn brownian_tail_lands_near_the_exact_value() {
    let v = json(&grl(&[
        "tail", "--H", "0.5", "--c", "1", "--gamma", "0", "--T", "inf", "--u", "1", "--n", "100000", "--seed", "7",
    ]));
    let p = v["result"]["estimate"]["probability"].as_f64().unwrap();
    let exact = v["result"]["exact"].as_f64().unwrap();
    assert!((exact - (-2.0f64).exp()).abs() < 1e-15);
    // Truncation and the grid both bias downward.
    assert!(p < exact && p > 0.85 * exact, "p = {p}");
    assert_eq!(v["result"]["estimate"]["lower_bound"], true);
}

#[test]
fn header_records_version_seed_and_config() {
    let v = json(&grl(&["tail", "--T", "1", "--n", "2000", "--seed", "42"]));
    let h = &v["header"];
    assert_eq!(h["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(h["seed"], 42);
    assert_eq!(h["config"]["command"]["tail"]["n"], 2000);
    assert_eq!(h["config"]["command"]["tail"]["T"], 1.0);
}

#[test]
fn output_is_byte_identical_across_thread_counts() {
    let base = ["ratio", "--H", "0.7", "--gamma", "0.4", "--T", "2", "--n", "3000", "--seed", "9"];
    let one = grl(&[&base[..], &["--threads", "1"]].concat());
    let many = grl(&[&base[..], &["--threads", "3"]].concat());
    let auto = grl(&base);
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, auto.stdout);
}

#[test]
fn seed_falls_back_to_environment() {
    let with_flag = grl(&["simulate", "--T", "0.1", "--step", "0.01", "--seed", "5"]);
    let with_env = Command::new(env!("CARGO_BIN_EXE_grl"))
        .args(["simulate", "--T", "0.1", "--step", "0.01"])
        .env("GRL_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    assert_ne!(grl(&["simulate", "--T", "0.1", "--step", "0.01"]).stdout, with_flag.stdout);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = std::env::temp_dir().join(format!("grl-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[tail]\nu = 2.0\nn = 1500\nT = \"2\"\nno-doubling = true\n").unwrap();
    let v = json(&grl(&["tail", "--config", cfg.to_str().unwrap(), "--n", "1000"]));
    let t = &v["header"]["config"]["command"]["tail"];
    assert_eq!(v["header"]["seed"], 11);
    assert_eq!(t["u"], 2.0);
    assert_eq!(t["T"], 2.0);
    assert_eq!(t["n"], 1000);
    assert_eq!(t["no_doubling"], true);
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = std::env::temp_dir().join(format!("grl-cli-badcfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[tail]\nbogus = 1\n").unwrap();
    assert_eq!(grl(&["tail", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn simulate_csv_has_one_row_per_grid_point() {
    let out = grl(&["simulate", "--T", "0.5", "--step", "0.125", "--paths", "3", "--gamma", "0.5", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    assert_eq!(lines.next().unwrap(), "path,t,x,w");
    assert_eq!(lines.count(), 3 * 5);
}

#[test]
fn fieldlab_rank_one_matches_normal_tail() {
    let v = json(&grl(&["fieldlab", "--preset", "rank-one", "--ns", "4", "--nt", "4", "--u", "2", "--n", "40000"]));
    let row = &v["result"]["rows"][0];
    let (p, se, th) = (
        row["mc_probability"].as_f64().unwrap(),
        row["mc_std_error"].as_f64().unwrap(),
        row["theory"].as_f64().unwrap(),
    );
    assert!((p - th).abs() <= 3.0 * se, "{p} ± {se} vs {th}");
}

#[test]
fn fieldlab_without_constants_names_them() {
    let out = grl(&["fieldlab", "--n", "100"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("H_1.5") && err.contains("--simulate"), "{err}");
}

#[test]
fn exit_codes() {
    assert_eq!(grl(&["nonsense"]).status.code(), Some(2));
    assert_eq!(grl(&["tail", "--u"]).status.code(), Some(2));
    assert_eq!(grl(&["tail", "--format", "csv", "--n", "10"]).status.code(), Some(2));
    assert_eq!(grl(&["asymptotics", "psi0-inf", "--H", "0.7"]).status.code(), Some(2));
    assert_eq!(grl(&["tail", "--H", "1.5"]).status.code(), Some(3));
    assert_eq!(grl(&["constants", "exact", "--alpha", "1.5", "--a", "1"]).status.code(), Some(3));
    assert_eq!(grl(&["simulate", "--T", "100", "--step", "0.00001"]).status.code(), Some(4));
    assert_eq!(grl(&["fieldlab", "--preset", "rank-one", "--ns", "80", "--nt", "80"]).status.code(), Some(4));
    assert_eq!(grl(&["verify", "--criteria", "11"]).status.code(), Some(2));
}

#[test]
fn verify_reports_and_exits_by_outcome() {
    let ok = grl(&["verify", "--criteria", "4,7"]);
    assert_eq!(ok.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["result"]["reports"].as_array().unwrap().len(), 2);
    let stderr = String::from_utf8_lossy(&ok.stderr);
    assert!(stderr.contains("criterion  4") && stderr.contains("PASS"));

    // The u = 50 check in criterion 6 cannot hold; see the README.
    let red = grl(&["verify", "--criteria", "6"]);
    assert_eq!(red.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&red.stderr).contains("criteria 6"));
}
