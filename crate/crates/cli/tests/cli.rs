use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decoco::faer::Mat;
use decoco::linalg::min_eigenvalue;
use decoco::sim::{generate, SimConfig};
use decoco::Dataset;
use serde_json::Value;
use tempfile::TempDir;

fn decoco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decoco"))
        .args(args)
        .env_remove("DECOCO_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("JSON report")
}

fn write_csv(dir: &TempDir, name: &str, data: &Dataset) -> PathBuf {
    let p = data.p();
    let mut text = String::from("y,d");
    for j in 1..=p {
        text.push_str(&format!(",z1_{j}"));
    }
    if data.has_replicates() {
        for j in 1..=p {
            text.push_str(&format!(",z2_{j}"));
        }
    }
    text.push('\n');
    for s in data.samples() {
        let mut cells = vec![s.y, s.d];
        cells.extend_from_slice(s.z1);
        if let Some(z2) = s.z2 {
            cells.extend_from_slice(z2);
        }
        let row: Vec<String> = cells.iter().map(|v| format!("{v:.16e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulated(dir: &TempDir, name: &str, cfg: &SimConfig) -> PathBuf {
    let (data, _) = generate(cfg, 0).unwrap();
    write_csv(dir, name, &data)
}

fn small(tau0: f64) -> SimConfig {
    SimConfig { n: 80, p: 12, s: 3, tau0, replications: 1, seed: 5, ..SimConfig::default() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_report_has_exactly_the_documented_keys() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(1.0));
    let out = dir.path().join("r.json");
    let o = decoco(&["estimate", "--data", s(&data), "--variant", "co", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("±"));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let mut keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["ci", "folds", "seed", "sigma2_hat", "std_error", "tau_hat_per_fold", "theta_hat", "variant"]);
    assert_eq!(report["folds"], 5);
    assert_eq!(report["seed"], 42);
    assert_eq!(report["variant"], "co");
    assert_eq!(report["tau_hat_per_fold"].as_array().unwrap().len(), 5);
    let ci = report["ci"].as_array().unwrap();
    let theta = report["theta_hat"].as_f64().unwrap();
    assert!(ci[0].as_f64().unwrap() <= theta && theta <= ci[1].as_f64().unwrap());
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(1.0));
    let o = decoco(&["estimate", "--data", s(&data), "--variant", "naive"]);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let theta = text.split("\"theta_hat\":").nth(1).unwrap().split(',').next().unwrap();
    let mantissa = theta.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{theta}");
    assert!(json(&o)["theta_hat"].as_f64().unwrap().is_finite());
}

#[test]
fn known_zero_error_matches_naive() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(0.0));
    let ca = json(&decoco(&["estimate", "--data", s(&data), "--variant", "ca", "--tau", "0"]));
    let naive = json(&decoco(&["estimate", "--data", s(&data), "--variant", "naive"]));
    let (a, b) = (ca["theta_hat"].as_f64().unwrap(), naive["theta_hat"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(1.0));
    let args = ["estimate", "--data", s(&data), "--variant", "co", "--seed", "9", "--preset", "desk"];
    let a = decoco(&args);
    let b = decoco(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["seed"], 9);
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(1.0));
    let o = Command::new(env!("CARGO_BIN_EXE_decoco"))
        .args(["estimate", "--data", s(&data), "--variant", "naive"])
        .env("DECOCO_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(json(&o)["seed"], 1234);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = simulated(&dir, "d.csv", &small(1.0));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,d,z1_1\n1,2,3\n4,oops,6\n").unwrap();
    let o = decoco(&["estimate", "--data", s(&bad), "--variant", "naive"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "y,d,z1_1\n1,2,3\n4,5\n").unwrap();
    let o = decoco(&["estimate", "--data", s(&ragged), "--variant", "naive"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = decoco(&["estimate", "--data", s(&good), "--variant", "ca"]);
    assert_eq!(o.status.code(), Some(3));

    let (single, _) = generate(&small(1.0), 0).unwrap();
    let single = write_csv(&dir, "single.csv", &single.without_replicates());
    let o = decoco(&["estimate", "--data", s(&single), "--variant", "co"]);
    assert_eq!(o.status.code(), Some(3));
    let o = decoco(&["tau", "--data", s(&single)]);
    assert_eq!(o.status.code(), Some(3));

    let flat = dir.path().join("flat.csv");
    let mut text = String::from("y,d,z1_1\n");
    for i in 0..20 {
        text.push_str(&format!("{i},0,{}\n", i % 3));
    }
    fs::write(&flat, text).unwrap();
    let o = decoco(&["estimate", "--data", s(&flat), "--variant", "naive"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn simulate_smoke_and_thread_invariance() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.json");
    fs::write(
        &config,
        r#"{"N": 40, "p": 8, "s": 2, "replications": 3, "estimator": {"lambda_selection": "cross_fit_folds"}}"#,
    )
    .unwrap();
    let one = dir.path().join("one.json");
    let eight = dir.path().join("eight.json");
    let a = decoco(&["simulate", "--config", s(&config), "--out", s(&one), "--threads", "1"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let table = String::from_utf8_lossy(&a.stdout);
    for v in ["oracle", "ca", "co", "naive"] {
        assert_eq!(table.lines().filter(|l| l.starts_with(v)).count(), 1, "{table}");
    }
    let b = decoco(&["simulate", "--config", s(&config), "--out", s(&eight), "--threads", "8"]);
    assert!(b.status.success());
    assert_eq!(fs::read(&one).unwrap(), fs::read(&eight).unwrap());

    let report: Value = serde_json::from_slice(&fs::read(&one).unwrap()).unwrap();
    let mut keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["config", "histograms", "rows"]);
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    for row in report["rows"].as_array().unwrap() {
        let mut k: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
        k.sort_unstable();
        assert_eq!(k, ["bias", "mse", "variance", "variant"]);
    }
    let h = &report["histograms"]["naive"];
    assert_eq!(h["edges"].as_array().unwrap().len(), 41);
    assert_eq!(h["counts"].as_array().unwrap().len(), 40);
    assert_eq!(report["config"]["N"], 40);
}

#[test]
fn single_replication_simulation() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"N": 30, "p": 6, "s": 2, "replications": 1}"#).unwrap();
    let report = json(&decoco(&["simulate", "--config", s(&config)]));
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["variance"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"N": 30, "p": 6, "s": 9}"#).unwrap();
    let o = decoco(&["simulate", "--config", s(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`s`"), "{}", stderr(&o));
    fs::write(&config, r#"{"N": 30, "q": 6}"#).unwrap();
    let o = decoco(&["simulate", "--config", s(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`q`"), "{}", stderr(&o));
}

#[test]
fn exported_datasets_round_trip() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"N": 20, "p": 5, "s": 2, "replications": 2, "seed": 77}"#).unwrap();
    let export = dir.path().join("data");
    let o = decoco(&["simulate", "--config", s(&config), "--export", s(&export)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = SimConfig { n: 20, p: 5, s: 2, replications: 2, seed: 77, ..SimConfig::default() };
    for rep in 0..2u64 {
        let (data, _) = generate(&cfg, rep).unwrap();
        let text = fs::read_to_string(export.join(format!("replication_{rep}.csv"))).unwrap();
        let rows: Vec<Vec<f64>> =
            text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 20);
        for (row, sample) in rows.iter().zip(data.samples()) {
            let mut expected = vec![sample.y, sample.d];
            expected.extend_from_slice(sample.z1);
            expected.extend_from_slice(sample.z2.unwrap());
            assert_eq!(row, &expected);
        }
    }
}

#[test]
fn tau_is_zero_for_identical_replicates() {
    let dir = TempDir::new().unwrap();
    let data = simulated(&dir, "d.csv", &small(0.0));
    let report = json(&decoco(&["tau", "--data", s(&data)]));
    assert_eq!(report["tau_hat"].as_f64().unwrap(), 0.0);
    assert!(report.get("ks_statistic").is_none());
    assert_eq!(report["eigenvalues"].as_array().unwrap().len(), 12);
}

#[test]
fn tau_recovers_the_error_variance() {
    let dir = TempDir::new().unwrap();
    let cfg = SimConfig { n: 500, p: 200, s: 5, tau0: 1.5, replications: 1, seed: 3, ..SimConfig::default() };
    let data = simulated(&dir, "d.csv", &cfg);
    let report = json(&decoco(&["tau", "--data", s(&data)]));
    let t = report["tau_hat"].as_f64().unwrap();
    assert!((t - 1.5).abs() <= 0.15, "{t}");
    assert!((report["kappa"].as_f64().unwrap() - 0.4).abs() < 1e-15);
}

#[test]
fn tau_spectrum_follows_the_fitted_law() {
    let dir = TempDir::new().unwrap();
    let cfg = SimConfig { n: 2000, p: 1000, s: 5, tau0: 1.0, replications: 1, seed: 4, ..SimConfig::default() };
    let data = simulated(&dir, "d.csv", &cfg);
    let report = json(&decoco(&["tau", "--data", s(&data), "--ks"]));
    let ks = report["ks_statistic"].as_f64().unwrap();
    assert!(ks <= 0.05, "{ks}");
}

fn project(dir: &TempDir, rows: &[Vec<f64>]) -> (Mat<f64>, f64, Output) {
    let path = dir.path().join("m.csv");
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&path, text).unwrap();
    let o = decoco(&["project-psd", "--matrix", s(&path)]);
    if !o.status.success() {
        return (Mat::zeros(0, 0), f64::NAN, o);
    }
    let out: Vec<Vec<f64>> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    let n = out.len();
    let m = Mat::from_fn(n, n, |i, j| out[i][j]);
    let gap: f64 = stderr(&o).trim().trim_start_matches("gap ").parse().unwrap();
    (m, gap, o)
}

#[test]
fn projection_examples() {
    let dir = TempDir::new().unwrap();
    let identity = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let (m, gap, _) = project(&dir, &identity);
    assert_eq!(gap, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(m[(i, j)], identity[i][j]);
        }
    }

    let (_, gap, _) = project(&dir, &[vec![1.0, 0.0], vec![0.0, -0.5]]);
    assert!((gap - 0.5).abs() <= 1e-4, "{gap}");

    let g: Vec<f64> = (0..100).map(|k| (k as f64 * 12.9898).sin()).collect();
    let rows: Vec<Vec<f64>> = (0..10).map(|i| (0..10).map(|j| 0.5 * (g[i * 10 + j] + g[j * 10 + i])).collect()).collect();
    let input = Mat::from_fn(10, 10, |i, j| rows[i][j]);
    assert!(min_eigenvalue(input.as_ref()).unwrap() < 0.0);
    let (m, _, _) = project(&dir, &rows);
    assert!(min_eigenvalue(m.as_ref()).unwrap() >= -1e-8);

    let (_, _, o) = project(&dir, &[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 2.0]]);
    assert_eq!(o.status.code(), Some(2));
}
