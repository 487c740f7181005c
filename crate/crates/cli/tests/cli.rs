use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn seebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seebench"))
        .args(args)
        .env_remove("SEEBENCH_TOLERANCE_SCALE")
        .output()
        .expect("spawn seebench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(args: &[&str], out: &Path) -> Output {
    let mut all = vec!["simulate", "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    seebench(&all)
}

/// Radiation-less test of a chip in the given health state.
fn radiationless_config(dir: &Path, health: &str, reset_rate: f64) -> String {
    let path = dir.join(format!("rl-{health}.toml"));
    fs::write(
        &path,
        format!(
            r#"campaign = "bench"
total_duration = 600
beam_on = false

[phase_plan]
gpio = inf
beam_monitor = 0.0

[beam]
species = "atmospheric_neutron"
energy = 10.0
let = 0.0
nominal_flux = 1.0e6
background = {{ value = 0.0, uncertainty = 0.0 }}
spot = {{ shape = "square", side_mm = 70.0 }}

[dut]
initial_health = "{health}"
spontaneous_reset_rate = {reset_rate}
"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_preset_writes_run_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("st01");
    let o = simulate(&["--preset", "ST01", "--seed", "3"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["events.csv", "telemetry.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["irradiation_time"].as_f64(), Some(6027.0));
    assert_eq!(manifest["seed"].as_u64(), Some(3));
    assert_eq!(manifest["sel"].as_u64(), Some(0));
    assert!(fs::read_dir(&out).unwrap().all(|e| e.unwrap().path().extension().is_none_or(|x| x != "partial")));
}

#[test]
fn same_seed_gives_identical_logs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = simulate(&["--preset", "ST04", "--seed", "11", "--events-only"], out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("events.csv")).unwrap(), fs::read(b.join("events.csv")).unwrap());
    assert!(!a.join("telemetry.csv").exists());
}

#[test]
fn seed_range_fans_out() {
    let dir = TempDir::new().unwrap();
    let o = simulate(&["--preset", "ST02", "--seed", "5..8", "--events-only"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for s in 5..8 {
        assert!(dir.path().join(format!("seed-{s}/events.csv")).is_file());
    }
    assert!(!dir.path().join("seed-8").exists());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn invalid_config_is_a_usage_error_without_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "total_duration = 100\nwatchdog_timeout = -1.0\n[beam]\nspecies = \"kr84\"\nenergy = 750.0\nlet = 45.0\nnominal_flux = 1.0e3\n\
         background = { value = 20.0, uncertainty = 5.0 }\nspot = { shape = \"circle\", diameter_mm = 20.0 }\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = simulate(&["--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("watchdog_timeout"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_preset_and_flag_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(simulate(&["--preset", "XX"], dir.path()).status.code(), Some(1));
    assert_eq!(seebench(&["verify", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(seebench(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_and_report_a_run() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("st08");
    assert!(simulate(&["--preset", "ST08", "--seed", "1"], &run).status.success());
    let bundle = dir.path().join("bundle.json");
    let o = seebench(&["analyze", run.to_str().unwrap(), "--out", bundle.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&bundle).unwrap()).unwrap();
    let row = &b["rows"][0];
    assert_eq!(row["sample"], "ST08");
    let fluence = row["fluence"].as_f64().unwrap();
    assert!((fluence / 0.026e7 - 1.0).abs() < 0.01, "fluence {fluence}");

    let out = dir.path().join("report");
    let o = seebench(&["report", bundle.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ion = fs::read_to_string(out.join("ion_results.csv")).unwrap();
    assert_eq!(ion.lines().count(), 2);
    assert!(ion.lines().nth(1).unwrap().starts_with("ST08,"));
    assert!(fs::read_dir(out.join("series")).unwrap().count() >= 1);
}

#[test]
fn analyze_missing_run_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let o = seebench(&[
        "analyze",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("b.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_without_inputs_warns() {
    let dir = TempDir::new().unwrap();
    let o = seebench(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    assert!(dir.path().join("cross_sections.csv").is_file());
}

#[test]
fn classify_simulated_logs() {
    let dir = TempDir::new().unwrap();
    let ev = |name: &str| dir.path().join(name).join("events.csv").to_str().unwrap().to_string();

    assert!(simulate(&["--preset", "S9", "--events-only"], &dir.path().join("s9")).status.success());
    let o = seebench(&["classify", "--irradiation", &ev("s9")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("S9,broken,"), "{}", stdout(&o));

    assert!(simulate(&["--preset", "S13", "--events-only"], &dir.path().join("s13")).status.success());
    let fine = seebench(&["classify", "--irradiation", &ev("s13")]);
    assert!(stdout(&fine).contains("S13,fine,"), "{}", stdout(&fine));

    for (health, rate, want) in [("damaged", 0.02, "damaged"), ("broken", 0.0, "broken")] {
        let cfg = radiationless_config(dir.path(), health, rate);
        assert!(simulate(&["--config", &cfg], &dir.path().join(health)).status.success());
        let o = seebench(&["classify", "--irradiation", &ev("s13"), "--radiationless", &ev(health), "--json"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["status"], want);
        if want == "broken" {
            // pattern only after irradiation: break at the end of the beam
            assert_eq!(v["break_time"].as_f64(), Some(11361.0));
        }
    }
}

#[test]
fn verify_passes_and_tight_scale_fails() {
    let o = seebench(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));

    let tight = Command::new(env!("CARGO_BIN_EXE_seebench"))
        .arg("verify")
        .env("SEEBENCH_TOLERANCE_SCALE", "0.01")
        .output()
        .unwrap();
    assert_eq!(tight.status.code(), Some(3));

    let bad = Command::new(env!("CARGO_BIN_EXE_seebench"))
        .arg("verify")
        .env("SEEBENCH_TOLERANCE_SCALE", "wide")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn presets_are_listed() {
    let o = seebench(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["ST01", "ST08", "S3", "S15"] {
        assert!(text.contains(name), "{name} missing");
    }
    assert!(!text.contains("invalid"));
}
