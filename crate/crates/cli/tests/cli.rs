use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kpm_cli::config;
use kpm_cli::manifest::RunManifest;
use kpm_core::McConfig;

fn kpm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpm"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(String::from)
        .collect()
}

#[test]
fn design_prints_order_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let samples: String = (1..=100).map(|i| format!("{i}\n")).collect();
    fs::write(dir.path().join("misses.csv"), samples).unwrap();
    let o = kpm(dir.path(), &["design", "--input", "misses.csv", "--kappa", "0.9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "90");
}

#[test]
fn design_reads_miss_column_of_runs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("# config_digest=abc\nrun,miss_m\n");
    for i in 0..10 {
        text += &format!("{i},{}\n", 10 - i);
    }
    fs::write(dir.path().join("runs.csv"), text).unwrap();
    let o = kpm(dir.path(), &["design", "--input", "runs.csv", "--kappa", "0.5"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "5");
}

#[test]
fn design_rejects_bad_kappa() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.csv"), "1\n2\n").unwrap();
    let o = kpm(dir.path(), &["design", "--input", "m.csv", "--kappa", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gamespace_grid_has_three_regions() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(dir.path(), &["gamespace", "--tau-points", "21", "--z-points", "41"]);
    assert!(o.status.success());
    let path = dir.path().join("out/gamespace.csv");
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "tau,z_bar,region,miss_value_m,miss_prob");
    let rows = data_rows(&path);
    assert_eq!(rows.len(), 21 * 41);
    for label in ["upper_regular", "singular", "lower_regular"] {
        assert!(rows.iter().any(|r| r.split(',').nth(2) == Some(label)), "{label}");
    }
    let manifest = RunManifest::read(&dir.path().join("out/manifest.json")).unwrap();
    assert!(text.starts_with(&format!("# config_digest={}", manifest.config_digest.unwrap())));
}

#[test]
fn example_reports_both_costs() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(dir.path(), &["example"]);
    assert!(o.status.success());
    let rows = data_rows(&dir.path().join("out/example.csv"));
    assert_eq!(rows.len(), 8);
    let chosen: Vec<&String> = rows.iter().filter(|r| r.ends_with(",true")).collect();
    assert_eq!(chosen.len(), 2);
    assert_ne!(chosen[0].split(',').nth(1), chosen[1].split(',').nth(1));
}

#[test]
fn example_reads_cloud_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cloud.csv"),
        "z_bar,tau,mode,weight\n5.0,3.0,0,0.25\n0.0,3.0,0,0.25\n0.0,3.0,1,0.25\n-5.0,3.0,1,0.25\n",
    )
    .unwrap();
    let o = kpm(dir.path(), &["example", "--cloud", "cloud.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("H1 upper regular") && out.contains("H4 lower regular"));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"scenario": {"speed": 3}}"#).unwrap();
    let o = kpm(dir.path(), &["mc", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kpm(dir.path(), &["mc", "--runs", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kpm(dir.path(), &["mc", "--target", "both"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kpm(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(dir.path(), &["design", "--input", "nope.csv", "--kappa", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_writes_runs_cdf_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(dir.path(), &["mc", "--runs", "2", "--particles", "50", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let manifest = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.base_seed, Some(7));
    let digest = manifest.config_digest.unwrap();
    for name in ["runs.csv", "cdf.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with(&format!("# config_digest={digest}")), "{name}");
        assert!(manifest.outputs.iter().any(|p| p.ends_with(name)));
    }
    assert_eq!(data_rows(&out.join("runs.csv")).len(), 2);
    let saved = config::load(&out.join("config.json")).unwrap();
    assert_eq!(config::digest(&saved).unwrap(), digest);
    assert_eq!(saved.filter.particles_per_mode, 50);
}

#[test]
fn run_dumps_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(dir.path(), &["run", "--particles", "50", "--variant", "ea", "--run-index", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("out/trajectory.csv"));
    assert!(rows.len() > 250, "{}", rows.len());
    assert!(stdout(&o).contains("miss"));
}

#[test]
fn sweep_emits_twelve_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpm(
        dir.path(),
        &["sweep", "--target", "nominal", "--runs", "1", "--particles", "20", "--subsample", "8"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("out/sskp_table.csv"));
    assert_eq!(rows.len(), 3);
    let cells: usize = rows.iter().map(|r| r.split(',').skip(3).take(4).filter(|f| !f.is_empty()).count()).sum();
    assert_eq!(cells, 12);
    assert_eq!(fs::read_dir(dir.path().join("out/runs")).unwrap().count(), 12);
}

#[test]
fn config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        r#"{"scenario": {"a_m_max_g": 30, "rho0": 12000.5}, "warhead": "small",
            "guidance": {"kind": "kpm", "horizon": 0.02}, "filter": {"jitter_scale": 0.05},
            "target": "smart", "n_runs": 17, "base_seed": 99}"#,
    )
    .unwrap();
    let first = config::load(&path).unwrap();
    let saved = dir.path().join("saved.json");
    config::save(&first, &saved).unwrap();
    let second = config::load(&saved).unwrap();
    assert_eq!(first, second);
    assert_eq!(config::canonical_json(&first).unwrap(), config::canonical_json(&second).unwrap());
    assert_eq!(config::digest(&first).unwrap(), config::digest(&second).unwrap());
}

#[test]
fn defaults_match_the_study() {
    let c = McConfig::default();
    let g = 9.80665;
    assert_eq!((c.scenario.v_m, c.scenario.v_t), (2500.0, 2500.0));
    assert_eq!(c.scenario.a_m_max, 45.0 * g);
    assert_eq!(c.scenario.a_t_max, 20.0 * g);
    assert_eq!((c.scenario.tau_m, c.scenario.tau_t), (0.2, 0.2));
    assert_eq!(c.scenario.sigma_nu, 0.5e-3);
    assert_eq!(c.scenario.f, 100.0);
    assert_eq!(c.p_switch, 0.001);
    assert_eq!(c.n_runs, 500);
    assert_eq!(c.filter.particles_per_mode, 1000);
}
