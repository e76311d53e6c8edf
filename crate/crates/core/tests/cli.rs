use std::path::{Path, PathBuf};
use std::process::Command;

use ehub::cli::{run, RunManifest, RunStatus};
use serde_json::Value;

fn quick_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quick.toml")
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn ok(args: &[&str]) {
    let mut all = vec!["ehub"];
    all.extend_from_slice(args);
    assert_eq!(run(all), 0, "{args:?}");
}

fn csv_rows(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count() - 1
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(&dir.join("manifest.json")).unwrap()
}

/// gen-data, train, forecast into `root`; returns the three output dirs.
fn pipeline(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = s(&quick_config());
    let (gd, models, fc) = (root.join("gd"), root.join("models"), root.join("fc"));
    ok(&["gen-data", "--config", &cfg, "--out", &s(&gd)]);
    let data = s(&gd.join("data.csv"));
    ok(&["train", "--config", &cfg, "--data", &data, "--seasons", "winter", "--out", &s(&models)]);
    ok(&[
        "forecast", "--config", &cfg, "--data", &data, "--models", &s(&models), "--at", "2021-01-20T00:00:00", "--M",
        "4", "--seed", "3", "--solve-out", "sol.json", "--out", &s(&fc),
    ]);
    (gd, models, fc)
}

#[test]
fn pipeline_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (gd, models, fc) = pipeline(tmp.path());
    assert_eq!(csv_rows(&gd.join("data.csv")), 720);
    let m = manifest(&gd);
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.inputs[&quick_config()], ehub::cli::manifest::sha256_file(&quick_config()).unwrap());
    assert_eq!(m.outputs["data.csv"], ehub::cli::manifest::sha256_file(&gd.join("data.csv")).unwrap());
    assert!(models.join("electric_winter.json").exists() && models.join("heat_winter.json").exists());
    assert_eq!(csv_rows(&fc.join("trajectories.csv")), 4 * 6);
    assert_eq!(csv_rows(&fc.join("mean.csv")), 6);

    let cert = tmp.path().join("cert");
    ok(&[
        "certify", "--solution", &s(&fc.join("sol.json")), "--scenarios", &s(&fc.join("trajectories.csv")), "--beta",
        "0.05", "--out", &s(&cert),
    ]);
    let c: Value = serde_json::from_str(&std::fs::read_to_string(cert.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(c["m"], 4);
    assert!(c["s_star"].as_u64().unwrap() >= 1);

    let sim = tmp.path().join("sim");
    ok(&[
        "simulate", "--config", &s(&quick_config()), "--data", &s(&gd.join("data.csv")), "--models", &s(&models),
        "--controllers", "pd,scenario", "--M", "1,3", "--seeds", "2", "--start", "2021-01-20", "--end",
        "2021-01-20T12:00:00", "--out", &s(&sim),
    ]);
    let summaries: Vec<_> = std::fs::read_dir(&sim)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with("_summary.json"))
        .collect();
    assert_eq!(summaries.len(), 3);
    assert_eq!(csv_rows(&sim.join("combined.csv")), 3);
    assert_eq!(csv_rows(&sim.join("scenario_m3_seed2_trace.csv")), 12);
}

#[test]
fn reruns_from_manifest_reproduce_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (gd, models, fc) = pipeline(tmp.path());
    for (dir, name) in [(&gd, "gd2"), (&models, "models2"), (&fc, "fc2")] {
        let again = tmp.path().join(name);
        ok(&["--from-manifest", &s(&dir.join("manifest.json")), "--out", &s(&again)]);
        let (a, b) = (manifest(dir), manifest(&again));
        assert!(!a.outputs.is_empty());
        assert_eq!(a.outputs, b.outputs, "{name}");
        assert_eq!(a.config_text, b.config_text);
    }
}

#[test]
fn changed_inputs_block_a_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::copy(quick_config(), &cfg).unwrap();
    let gd = tmp.path().join("gd");
    ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&gd)]);
    std::fs::write(&cfg, "schema_version = 1\n").unwrap();
    assert_eq!(run(["ehub", "--from-manifest", &s(&gd.join("manifest.json")), "--out", &s(&tmp.path().join("x"))]), 2);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "schema_version = 1\n[mpc]\nhorizon = 6\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ehub"))
        .args(["gen-data", "--config", &s(&cfg), "--out", &s(&tmp.path().join("o"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`data`"));

    std::fs::write(&cfg, "[data]\nhours = 48\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ehub"))
        .args(["gen-data", "--config", &s(&cfg), "--out", &s(&tmp.path().join("o"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}

#[test]
fn scenario_controller_needs_models() {
    let tmp = tempfile::tempdir().unwrap();
    let gd = tmp.path().join("gd");
    ok(&["gen-data", "--config", &s(&quick_config()), "--out", &s(&gd)]);
    let code = run([
        "ehub", "simulate", "--config", &s(&quick_config()), "--data", &s(&gd.join("data.csv")), "--controllers",
        "scenario", "--start", "2021-01-20", "--end", "2021-01-21", "--out", &s(&tmp.path().join("sim")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn training_range_outside_data_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let gd = tmp.path().join("gd");
    ok(&["gen-data", "--config", &s(&quick_config()), "--out", &s(&gd)]);
    let code = run([
        "ehub", "train", "--config", &s(&quick_config()), "--data", &s(&gd.join("data.csv")), "--from", "2020-12-01",
        "--to", "2021-01-10", "--out", &s(&tmp.path().join("m")),
    ]);
    assert_eq!(code, 1);
    let m = manifest(&tmp.path().join("m"));
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("data covers 2021-01-01T00:00:00 .. 2021-01-31T00:00:00"));
}

fn close(a: &Value, b: &Value, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= 1e-6 * (1.0 + x.abs().max(y.abs())) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs {y}"))
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).enumerate().try_for_each(|(i, (a, b))| close(a, b, &format!("{path}[{i}]")))
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => {
            x.iter().try_for_each(|(k, v)| close(v, y.get(k).ok_or(format!("{path}.{k} missing"))?, &format!("{path}.{k}")))
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs {b}")),
    }
}

#[test]
fn train_diagnostics_match_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = s(&quick_config());
    let gd = tmp.path().join("gd");
    let models = tmp.path().join("models");
    ok(&["gen-data", "--config", &cfg, "--out", &s(&gd)]);
    ok(&["train", "--config", &cfg, "--data", &s(&gd.join("data.csv")), "--seasons", "winter", "--out", &s(&models)]);
    let got: Value = serde_json::from_str(&std::fs::read_to_string(models.join("diagnostics.json")).unwrap()).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/train_diagnostics.json");
    if std::env::var_os("EHUB_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: Value = serde_json::from_str(&std::fs::read_to_string(&golden_path).unwrap()).unwrap();
    close(&want, &got, "$").unwrap();
}
