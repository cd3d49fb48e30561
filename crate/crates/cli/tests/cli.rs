use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn emitloc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emitloc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("failed to launch emitloc")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--D", "2", "--num-configs", "1", "--trials-per-config", "2", "--grid-step", "5", "--pdp-count", "50"];

fn small(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = extra.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn sweep_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = emitloc(&["sweep-snr", "--values", "10"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn sweep_stations_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let args = small(&[
        "sweep-stations", "--seed", "4", "--values", "4,5", "--estimators", "usage_cwc,baseline", "--csv", "r.csv",
        "--json", "r.json",
    ]);
    stdout(&emitloc(&args, dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "axis,estimator,rmse_m,crlb_m,n_trials");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("4,usage_cwc,"));
    assert!(lines[4].starts_with("5,baseline,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",2")));

    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["seed"], 4);
    assert_eq!(doc["config"]["D"], 2);
    assert_eq!(doc["config"]["sweep"]["axis"], "stations");
    assert_eq!(doc["points"].as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = small(&["sweep-snr", "--seed", "9", "--values", "20", "--M", "4", "--estimators", "baseline"]);
    let a = stdout(&emitloc(&args, dir.path()));
    let mut seq = args.clone();
    seq.push("--sequential");
    let b = stdout(&emitloc(&seq, dir.path()));
    assert_eq!(a, b);
    let other = small(&["sweep-snr", "--seed", "10", "--values", "20", "--M", "4", "--estimators", "baseline"]);
    assert_ne!(a, stdout(&emitloc(&other, dir.path())));
}

#[test]
fn config_file_is_loaded_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "K": 8,
        "D": 2,
        "num_configs": 1,
        "trials_per_config": 1,
        "estimators": ["baseline"],
        "crlb": false,
        "grid": { "center": {"x": 0.0, "y": 0.0, "z": 0.0}, "half_extent": 30.0, "step": 6.0,
                  "refine_levels": 0, "refine_factor": 5.0 },
        "sweep": { "axis": "delay_spread", "values": [2e-8] }
    });
    std::fs::write(dir.path().join("cfg.json"), cfg.to_string()).unwrap();
    let out = stdout(&emitloc(
        &["sweep-delayspread", "--config", "cfg.json", "--seed", "1", "--M", "4", "--json", "r.json"],
        dir.path(),
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.00000002,baseline,"), "{}", lines[1]);
    assert!(lines[1].contains(",,1"), "bound disabled: {}", lines[1]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["K"], 8);
    assert_eq!(doc["config"]["geometry"]["num_stations"], 4);
}

#[test]
fn invalid_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = emitloc(&["sweep-snr", "--seed", "1", "--trials-per-config", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = emitloc(&["sweep-snr", "--seed", "1", "--pdp", "analytic", "--channel", "cluster"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_then_localize() {
    let dir = tempfile::tempdir().unwrap();
    let gen = [
        "gen-data", "--seed", "3", "--snr-db", "30", "--M", "6", "--D", "4", "--out", "obs.bin", "--scenario-out",
        "sc.json", "--pdp-out", "pdp.json",
    ];
    stdout(&emitloc(&gen, dir.path()));
    for f in ["obs.bin", "obs.json", "sc.json", "pdp.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let header: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("obs.json")).unwrap()).unwrap();
    assert_eq!((header["M"].as_u64(), header["K"].as_u64(), header["D"].as_u64()), (Some(6), Some(16), Some(4)));
    assert_eq!(std::fs::metadata(dir.path().join("obs.bin")).unwrap().len(), 6 * 16 * 4 * 16);

    let out = stdout(&emitloc(
        &["localize", "--obs", "obs.bin", "--pdp", "pdp.json", "--stations", "sc.json"],
        dir.path(),
    ));
    let report: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["estimator"], "usage_cwc");
    assert!(report["error_m"].as_f64().unwrap() < 2.0, "{report}");

    // A bare station list works too, without an error figure.
    let sc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sc.json")).unwrap()).unwrap();
    std::fs::write(dir.path().join("st.json"), sc["stations"].to_string()).unwrap();
    let out = stdout(&emitloc(
        &["localize", "--obs", "obs.bin", "--pdp", "pdp.json", "--stations", "st.json", "--estimator", "baseline"],
        dir.path(),
    ));
    let report: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["estimator"], "baseline");
    assert!(report.get("error_m").is_none());
}

#[test]
fn localize_rejects_station_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let gen = [
        "gen-data", "--seed", "1", "--M", "4", "--D", "1", "--out", "o.bin", "--scenario-out", "sc.json",
        "--pdp-out", "p.json",
    ];
    stdout(&emitloc(&gen, dir.path()));
    std::fs::write(dir.path().join("st.json"), r#"[{"x":50,"y":0,"z":0},{"x":0,"y":50,"z":0}]"#).unwrap();
    let out = emitloc(&["localize", "--obs", "o.bin", "--pdp", "p.json", "--stations", "st.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("station positions"));
}
