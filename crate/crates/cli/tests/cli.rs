use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lwa-sim");

fn lwa_sim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn default_config(kind: &str) -> Value {
    let out = lwa_sim(&["--print-default-config", kind]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("default config is JSON")
}

/// Small music config that runs in well under a second.
fn quick_music(dir: &Path) -> Value {
    let mut c = default_config("music");
    c["scenario"]["n_bins"] = 32.into();
    c["overrides"] = serde_json::json!({ "snapshots": 16, "angle_grid": { "start_deg": 1, "stop_deg": 89, "step_deg": 0.5 } });
    c["output_dir"] = dir.join("out").to_string_lossy().into_owned().into();
    c
}

fn write_json(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

/// Exit code and the machine-readable error code from stderr.
fn failure(out: &Output) -> (i32, String) {
    let line = String::from_utf8_lossy(&out.stderr);
    let err: Value = serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("stderr is one JSON line: {line}"));
    assert_eq!(err["exit_code"].as_i64().map(|c| c as i32), out.status.code());
    (out.status.code().unwrap(), err["error"].as_str().unwrap().to_string())
}

#[test]
fn default_configs_round_trip_and_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["beampattern", "sumrate", "music"] {
        let c = default_config(kind);
        assert_eq!(c["experiment"], kind);
        let path = write_json(dir.path(), "c.json", &c);
        let parsed = lwa_core::experiments::ExperimentConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(serde_json::to_value(&parsed).unwrap(), c);
        parsed.validate().unwrap();
    }
}

#[test]
fn malformed_configs_get_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = quick_music(dir.path());
    let cases: Vec<(&str, Box<dyn Fn(&mut Value)>)> = vec![
        ("missing_field", Box::new(|c| {
            c["scenario"].as_object_mut().unwrap().remove("n_bins");
        })),
        ("unknown_key", Box::new(|c| c["scenario"]["colour"] = "red".into())),
        ("unknown_variant", Box::new(|c| c["experiment"] = "heatmap".into())),
        ("wrong_type", Box::new(|c| c["scenario"]["n_bins"] = "many".into())),
        ("band_order", Box::new(|c| c["scenario"]["f_max_hz"] = 1e11.into())),
        ("zero_bins", Box::new(|c| c["scenario"]["n_bins"] = 0.into())),
        ("zero_antennas", Box::new(|c| c["scenario"]["m_antennas"] = 0.into())),
        ("bad_geometry", Box::new(|c| c["scenario"]["geometry"]["plate_sep_m"] = (-1.0).into())),
        ("cutoff_in_band", Box::new(|c| c["scenario"]["f_min_hz"] = 1.5e11.into())),
        ("user_angle", Box::new(|c| c["scenario"]["users"]["fixed"][0]["angle_deg"] = 95.0.into())),
        ("duplicate_angle", Box::new(|c| c["scenario"]["users"]["fixed"][1]["angle_deg"] = 30.0.into())),
        ("bad_override", Box::new(|c| c["overrides"]["snapshots"] = 0.into())),
    ];
    let mut seen = std::collections::BTreeSet::new();
    for (want, mutate) in cases {
        let mut c = base.clone();
        mutate(&mut c);
        let path = write_json(dir.path(), "bad.json", &c);
        let out = lwa_sim(&["music", "--config", &path]);
        let (code, err) = failure(&out);
        assert_eq!((code, err.as_str()), (2, want), "case {want}");
        seen.insert(err);
    }
    assert_eq!(seen.len(), 12);

    fs::write(dir.path().join("broken.json"), "{\"experiment\": ").unwrap();
    let broken = dir.path().join("broken.json").to_string_lossy().into_owned();
    assert_eq!(failure(&lwa_sim(&["music", "--config", &broken])), (2, "parse_error".into()));
}

#[test]
fn command_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "c.json", &quick_music(dir.path()));
    assert_eq!(failure(&lwa_sim(&["sumrate", "--config", &path])), (2, "experiment_mismatch".into()));
    assert_eq!(failure(&lwa_sim(&["radar", "--config", &path])), (2, "unknown_experiment".into()));
    assert_eq!(failure(&lwa_sim(&["music", "--config", &path, "--set", "novalue"])), (2, "bad_set".into()));
    assert_eq!(failure(&lwa_sim(&["music"])), (2, "usage".into()));
    let missing = dir.path().join("absent.json").to_string_lossy().into_owned();
    assert_eq!(failure(&lwa_sim(&["music", "--config", &missing])), (4, "io".into()));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let path = write_json(dir.path(), "c.json", &quick_music(dir.path()));
    let out = lwa_sim(&["music", "--config", &path, "--out", &blocker.join("sub").to_string_lossy()]);
    assert_eq!(failure(&out), (4, "io".into()));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "c.json", &quick_music(dir.path()));
    let mut outputs = vec![];
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = lwa_sim(&["music", "--config", &path, "--out", &out_dir.to_string_lossy()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["status"], "ok");
        outputs.push(
            ["music.csv", "peaks.csv"]
                .map(|f| fs::read(out_dir.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_and_set_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_music(dir.path());
    c["scenario"]["users"] = serde_json::json!({ "random": { "count": 2, "angle_range_deg": [20, 70], "dist_range_m": [1, 3] } });
    let path = write_json(dir.path(), "c.json", &c);
    let read_peaks = |extra: &[&str], run: &str| {
        let out_dir = dir.path().join(run);
        let out_str = out_dir.to_string_lossy().into_owned();
        let mut args = vec!["music", "--config", &path, "--out", &out_str];
        args.extend_from_slice(extra);
        let out = lwa_sim(&args);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(3));
        fs::read_to_string(out_dir.join("peaks.csv")).unwrap()
    };
    let a = read_peaks(&["--seed", "1"], "s1");
    let b = read_peaks(&["--seed", "2"], "s2");
    let c2 = read_peaks(&["--set", "scenario.seed=1"], "s1b");
    assert_ne!(a, b);
    assert_eq!(a, c2);
}

#[test]
fn flagged_run_exits_three_and_keeps_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_music(dir.path());
    // Scan window around one source only: fewer peaks than sources.
    c["overrides"]["angle_grid"] = serde_json::json!({ "start_deg": 29.5, "stop_deg": 30.5, "step_deg": 0.05 });
    c["overrides"]["noiseless"] = true.into();
    let path = write_json(dir.path(), "c.json", &c);
    let out = lwa_sim(&["music", "--config", &path]);
    assert_eq!(failure(&out), (3, "numerical_flag".into()));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "flagged");
    assert!(dir.path().join("out/music.csv").exists());
}
