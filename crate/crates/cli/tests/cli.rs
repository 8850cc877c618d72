use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ldp-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn ldp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn zero_waiting_time_is_an_input_error() {
    let out = scratch("zero-tau");
    let o = ldp(&["validate", "--model", &fixture("zero_tau.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly positive"));
}

#[test]
fn missing_model_is_an_input_error() {
    let o = ldp(&["validate", "--model", "/nonexistent/model.json", "--out", scratch("missing").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn rate_profile_writes_schema_tagged_csv_and_manifest() {
    let out = scratch("profile");
    let o = ldp(&["rate-profile", "--model", &fixture("poisson.json"), "--m-grid", "0,1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "rate_profile.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=rate-profile.v1"));
    assert!(lines.next().unwrap().starts_with("m,j,jbar,"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[2].parse::<f64>().unwrap(), 1.0);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "rate-profile");
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["artifacts"].as_array().unwrap().iter().any(|a| a == "rate_profile.csv"));
}

#[test]
fn entropy_oracle_agrees_on_two_atoms() {
    let out = scratch("oracle");
    let o = ldp(&["entropy-oracle", "--model", &fixture("two_atom.json"), "--m-grid", "0.5,1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = read(&out, "comparison.csv");
    let row: Vec<&str> = cmp.lines().nth(3).unwrap().split(',').collect();
    let expected = 0.75 * 3f64.ln() - 2f64.ln();
    assert!((row[1].parse::<f64>().unwrap() - expected).abs() < 1e-8);
    assert_eq!(row[5], "true");
}

#[test]
fn entropy_oracle_rejects_continuous_laws() {
    let o = ldp(&["entropy-oracle", "--model", &fixture("poisson.json"), "--out", scratch("oracle-cont").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn entropy_oracle_reports_infeasible_levels() {
    let out = scratch("oracle-inf");
    let o = ldp(&["entropy-oracle", "--model", &fixture("two_atom.json"), "--m-grid", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(read(&out, "oracle.csv").lines().nth(2).unwrap().contains(",inf,"));
}

#[test]
fn censored_tail_estimates_exit_with_three() {
    let out = scratch("censored");
    let o = ldp(&[
        "mc-tail", "--model", &fixture("poisson.json"), "--a", "3", "--t-grid", "20,40,60", "--n", "1000", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(read(&out, "mc_tail.csv").contains("true"));
}

#[test]
fn compare_accepts_identical_files_and_flags_differences() {
    let out = scratch("compare");
    let a = out.join("a");
    let b = out.join("b");
    for (dir, model) in [(&a, "poisson.json"), (&b, "exp_reward.json")] {
        let o = ldp(&["rate-profile", "--model", &fixture(model), "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let pa = a.join("rate_profile.csv");
    let pb = b.join("rate_profile.csv");
    let same = ldp(&["compare", pa.to_str().unwrap(), pa.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&same), 0);
    let doc: serde_json::Value = serde_json::from_str(&read(&out, "comparison.json")).unwrap();
    assert_eq!(doc["data"]["result"]["pass"], true);
    let differ = ldp(&["compare", pa.to_str().unwrap(), pb.to_str().unwrap(), "--columns", "j", "--abs", "1e-6"]);
    assert_eq!(code(&differ), 4);
    let loose = ldp(&["compare", pa.to_str().unwrap(), pb.to_str().unwrap(), "--columns", "m"]);
    assert_eq!(code(&loose), 0);
}

#[test]
fn compare_refuses_different_schemas() {
    let out = scratch("schemas");
    let o = ldp(&["rate-profile", "--model", &fixture("poisson.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = ldp(&["deviation-bound", "--model", &fixture("poisson.json"), "--a", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = ldp(&[
        "compare",
        out.join("rate_profile.csv").to_str().unwrap(),
        out.join("deviation_bound.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn compare_checks_tail_slope_against_bound() {
    let out = scratch("slope");
    let model = fixture("exp_reward.json");
    let dir = out.to_str().unwrap();
    let o = ldp(&["mc-tail", "--model", &model, "--a", "1", "--t-grid", "5,10,15,20", "--n", "100000", "--out", dir]);
    assert_eq!(code(&o), 0);
    let o = ldp(&["deviation-bound", "--model", &model, "--a", "1", "--out", dir]);
    assert_eq!(code(&o), 0);
    let o = ldp(&["compare", out.join("deviation_bound.json").to_str().unwrap(), out.join("mc_tail.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn approx_rate_needs_exactly_one_variant() {
    let o = ldp(&[
        "approx-rate", "--model", &fixture("exp_reward.json"), "--delta", "0.5", "--t-grid", "1,2,3", "--out",
        scratch("approx").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn hawkes_writes_cycles_and_tail_report() {
    let out = scratch("hawkes");
    let o = ldp(&[
        "hawkes", "--model", &fixture("hawkes_inhibiting.json"), "--a", "0.3", "--t-grid", "4,8,12", "--n", "5000",
        "--check-paths", "5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&read(&out, "hawkes.json")).unwrap();
    assert_eq!(doc["data"]["report"]["estimate_based"], true);
    assert_eq!(doc["data"]["ensemble_check"]["violations"].as_array().unwrap().len(), 0);
    assert!(read(&out, "hawkes_pairs.csv").lines().count() > 1000);
}

#[test]
fn simulate_writes_path_and_coupled_variants() {
    let out = scratch("simulate");
    let o = ldp(&[
        "simulate", "--model", &fixture("poisson.json"), "--t", "20", "--truncate", "0.5", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let coupled = read(&out, "coupled.csv");
    let rows: Vec<Vec<&str>> = coupled.lines().skip(2).map(|l| l.split(',').collect()).collect();
    let base: f64 = rows[0][2].parse().unwrap();
    let truncated: f64 = rows[1][2].parse().unwrap();
    assert_eq!(truncated, 0.5 * base);
}
