use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use precs_cli::config::Format;
use precs_cli::verify::Status;
use precs_cli::{
    run_sample, run_simulate, run_sweep, run_verify, CliError, Context, ExperimentConfig, Overrides,
};
use serde_json::{json, Value};
use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn example_json(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(example(name)).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn precs(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_precs"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("PRECS_THREADS")
        .output()
        .unwrap()
}

fn context(value: Value, out: &Path) -> Context {
    let mut config = ExperimentConfig::from_json(&value.to_string()).unwrap();
    Overrides {
        out: Some(out.to_path_buf()),
        ..Default::default()
    }
    .apply(&mut config);
    Context::new(config).unwrap()
}

#[test]
fn bundled_configs_parse() {
    for entry in fs::read_dir(example("")).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn unnormalized_branches_are_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("sample_boson.json");
    cfg["branches"][0]["c_re"] = json!(0.6f64.sqrt());
    let out = precs(
        &["sample"],
        &write_config(&tmp, "bad.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("branches"));
}

#[test]
fn unknown_keys_are_rejected_with_position() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("fig1_boson.json");
    cfg["grid"]["resolution"] = json!(64);
    let out = precs(
        &["simulate"],
        &write_config(&tmp, "unknown.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("unknown field `resolution`") && err.contains("line"),
        "{err}"
    );
}

#[test]
fn missing_config_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_precs"))
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tiny_cutoff_fails_verification() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("verify_boson.json");
    cfg["model"]["g"] = json!(2.0);
    cfg["grid"] = json!({"n1": 128, "n2": 128});
    cfg["verify"]["n_max_override"] = json!(10);
    let out = precs(
        &["verify"],
        &write_config(&tmp, "tiny.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fock_tail"));
    let report: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], json!(false));
    let tail = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "fock_tail")
        .unwrap();
    assert_eq!(tail["status"], json!("fail"));
}

#[test]
fn bundled_verify_configs_pass() {
    let tmp = TempDir::new().unwrap();
    for name in ["verify_boson.json", "verify_spin.json"] {
        let out = precs(&["verify"], &example(name), &tmp.path().join(name));
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn small_spin_reports_fidelity_and_the_symbol_offset() {
    // at J = 10 the Husimi symbol of h Jz is off by a factor J/(J+1), so the
    // Ĥ_Ξ identity misses the 1e-2 bound while everything else holds
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("verify_spin.json");
    cfg["model"]["j"] = json!(10.0);
    let report = run_verify(&context(cfg, tmp.path())).unwrap();
    let status = |name: &str| {
        report
            .checks
            .iter()
            .find(|c| c.name == name)
            .unwrap()
            .clone()
    };
    let fidelity = status("coherence_fidelity");
    assert_eq!(fidelity.status, Status::Pass);
    assert_eq!(fidelity.tolerance, 1e-6);
    let h = status("expectation_h_xi");
    assert_eq!(h.status, Status::Fail);
    assert!((h.measured - 1.0 / 11.0).abs() < 1e-2, "{}", h.measured);
    assert_eq!(report.failed(), vec!["expectation_h_xi"]);
    assert!(matches!(
        report.ensure_pass(),
        Err(CliError::VerifyFailed(_))
    ));
}

#[test]
fn sampling_before_decoherence_exits_4() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("sample_boson.json");
    cfg["sample"]["t"] = json!(0.3);
    let out = precs(
        &["sample"],
        &write_config(&tmp, "early.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not decohered"));
}

#[test]
fn sample_frequencies_and_records() {
    let tmp = TempDir::new().unwrap();
    let s = run_sample(&context(example_json("sample_boson.json"), tmp.path())).unwrap();
    assert_eq!(s.statistics.n_runs, 10_000);
    for (row, born) in s.statistics.rows.iter().zip([0.7, 0.3]) {
        assert!((row.frequency - born).abs() <= 0.014);
    }
    let text = fs::read_to_string(tmp.path().join("records.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10_000);
    let first: Value = serde_json::from_str(lines[0]).unwrap();
    for key in [
        "gamma_out",
        "pointer_value",
        "masses",
        "T",
        "seed",
        "reduced_state",
    ] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let stats: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("statistics.json")).unwrap()).unwrap();
    assert!(stats["statistics"]["generator"]
        .as_str()
        .unwrap()
        .contains("ChaCha20"));
}

#[test]
fn seed_override_changes_records() {
    let tmp = TempDir::new().unwrap();
    let cfg = example("sample_boson.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(precs(&["sample"], &cfg, &a).status.success());
    assert!(precs(&["sample"], &cfg, &b).status.success());
    assert!(precs(&["sample", "--seed", "7"], &cfg, &c).status.success());
    let read = |d: &Path| fs::read(d.join("records.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn fig1_snapshots_split_into_two_modes() {
    let tmp = TempDir::new().unwrap();
    let s = run_simulate(&context(example_json("fig1_boson.json"), tmp.path())).unwrap();
    let modes: Vec<usize> = s.snapshots.iter().map(|x| x.modes).collect();
    assert_eq!(modes, vec![1, 1, 2, 2, 2]);
    for k in 0..5 {
        let ppm = fs::read(tmp.path().join(format!("chi2_{k:03}.ppm"))).unwrap();
        assert!(ppm.starts_with(b"P6\n256 256\n255\n"));
        assert_eq!(ppm.len(), "P6\n256 256\n255\n".len() + 3 * 256 * 256);
        let csv = fs::read_to_string(tmp.path().join(format!("chi2_{k:03}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("idx,coord1,coord2,weight,value"));
        assert_eq!(csv.lines().count(), 1 + 256 * 256);
    }
    let traj = fs::read_to_string(tmp.path().join("trajectory_0_plus.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,coord1,coord2,phase"));
    let report: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("decoherence.json")).unwrap()).unwrap();
    assert_eq!(report["intervals"].as_array().unwrap().len(), 1);
    assert!(report["tau_d"].as_f64().is_some());
}

#[test]
fn format_flag_limits_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = precs(
        &["simulate", "--format", "json"],
        &example("fig1_boson.json"),
        tmp.path(),
    );
    assert!(out.status.success());
    let mut names: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, vec!["decoherence.json", "summary.json"]);
    assert!("svg".parse::<Format>().is_err());
}

#[test]
fn sweep_columns_and_monotone_ratio() {
    let tmp = TempDir::new().unwrap();
    let s = run_sweep(&context(example_json("fig2_sweep.json"), tmp.path())).unwrap();
    assert_eq!(s.rows.len(), 4);
    assert!(s
        .rows
        .windows(2)
        .all(|w| w[1].resolution_ratio < w[0].resolution_ratio));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("g,tau_d,resolution_ratio,max_born_error")
    );
    assert_eq!(csv.lines().count(), 5);
    for k in 0..4 {
        assert!(tmp.path().join(format!("sweep_{k:03}.ppm")).exists());
    }
}

#[test]
fn singleton_sweep() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("spin_sweep.json");
    cfg["sweep"]["values"] = json!([10.0]);
    cfg["grid"] = json!({"n1": 32, "n2": 32});
    let s = run_sweep(&context(cfg, tmp.path())).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert_eq!(
        fs::read_to_string(tmp.path().join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn non_monotone_sweep_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("fig2_sweep.json");
    cfg["sweep"]["values"] = json!([1.0, 4.0, 2.0]);
    let out = precs(
        &["sweep"],
        &write_config(&tmp, "sweep.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("monotone"));
}

#[test]
fn sweep_parameter_must_match_model() {
    let mut cfg = example_json("fig2_sweep.json");
    cfg["sweep"]["parameter"] = json!("j");
    assert!(matches!(
        ExperimentConfig::from_json(&cfg.to_string()),
        Err(CliError::Config(_))
    ));
}

#[test]
fn too_large_oracle_is_a_numeric_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_json("verify_boson.json");
    cfg["model"]["g"] = json!(40.0);
    let out = precs(
        &["verify"],
        &write_config(&tmp, "big.json", &cfg),
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}
