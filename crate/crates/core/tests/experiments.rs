use std::fs;
use std::path::Path;

use lwa_core::experiments::config::apply_set;
use lwa_core::experiments::{run, ExperimentConfig, ExperimentKind};
use lwa_core::lwa::beam_angle;
use serde_json::{json, Value};

fn config_with(kind: ExperimentKind, dir: &Path, sets: &[&str]) -> ExperimentConfig {
    let mut doc = serde_json::to_value(ExperimentConfig::default_for(kind)).unwrap();
    doc["output_dir"] = dir.to_string_lossy().into_owned().into();
    for s in sets {
        apply_set(&mut doc, s).unwrap();
    }
    ExperimentConfig::from_value(doc).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn defaults_validate_and_resolve_idempotently() {
    for kind in ExperimentKind::ALL {
        let c = ExperimentConfig::default_for(kind);
        c.validate().unwrap();
        let r = c.resolved();
        r.validate().unwrap();
        assert_eq!(r.resolved(), r);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), r);
    }
}

#[test]
fn apply_set_creates_paths_and_parses_values() {
    let mut doc = json!({ "a": { "b": 1 } });
    apply_set(&mut doc, "a.b=2.5").unwrap();
    apply_set(&mut doc, "a.c.d=[1,2]").unwrap();
    apply_set(&mut doc, "e=plain text").unwrap();
    assert_eq!(doc, json!({ "a": { "b": 2.5, "c": { "d": [1, 2] } }, "e": "plain text" }));
    assert_eq!(apply_set(&mut doc, "a..b=1").unwrap_err().code(), "bad_set");
    assert_eq!(apply_set(&mut doc, "e.x=1").unwrap_err().code(), "bad_set");
    assert_eq!(apply_set(&mut doc, "nothing").unwrap_err().code(), "bad_set");
}

#[test]
fn noiseless_music_finds_both_sources() {
    let dir = tempfile::tempdir().unwrap();
    let c = config_with(ExperimentKind::Music, dir.path(), &["overrides.noiseless=true"]);
    let report = run(&c).unwrap();
    assert!(report.flags.is_empty(), "{:?}", report.flags);
    let (header, rows) = read_csv(&dir.path().join("peaks.csv"));
    assert_eq!(header, ["peak_angle_deg", "true_angle_deg", "abs_error_deg"]);
    assert_eq!(rows.len(), 2);
    for (row, truth) in rows.iter().zip([30.0, 50.0]) {
        let peak: f64 = row[0].parse().unwrap();
        assert!((peak - truth).abs() <= 0.01, "peak {peak} vs {truth}");
    }
    let run_json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["tool"], "lwa-sim");
    assert_eq!(run_json["result"]["peaks_deg"].as_array().unwrap().len(), 2);
}

#[test]
fn single_user_beam_follows_frequency_scan() {
    let dir = tempfile::tempdir().unwrap();
    let c = config_with(
        ExperimentKind::Beampattern,
        dir.path(),
        &[
            "scenario.n_bins=64",
            r#"scenario.users={"fixed":[{"angle_deg":45,"dist_m":2}]}"#,
            "overrides.tune_geometry=false",
            r#"overrides.angle_grid={"start_deg":0.5,"stop_deg":89.5,"step_deg":0.25}"#,
        ],
    );
    run(&c).unwrap();
    let geom = c.geometry().unwrap();
    let (header, rows) = read_csv(&dir.path().join("beampattern.csv"));
    assert_eq!(header, ["angle_deg", "freq_ghz", "energy_db"]);
    let n_bins = 64;
    assert_eq!(rows.len() % n_bins, 0);

    // angle-major: row = angle * n_bins + bin
    let cells: Vec<[f64; 3]> = rows.iter().map(|r| [0, 1, 2].map(|i| r[i].parse().unwrap())).collect();
    let mut powered = 0;
    for n in 0..n_bins {
        let column: Vec<&[f64; 3]> = cells.iter().skip(n).step_by(n_bins).collect();
        let best = column.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
        if best[2] <= lwa_core::alloc::ENERGY_FLOOR_DB {
            continue;
        }
        powered += 1;
        let expect = beam_angle(&geom, best[1] * 1e9).unwrap();
        assert!((best[0] - expect).abs() <= 0.25 + 1e-6, "bin {n}: crest {} vs {expect}", best[0]);
    }
    assert!(powered > 0);
}

#[test]
fn small_sumrate_run_writes_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let c = config_with(
        ExperimentKind::Sumrate,
        dir.path(),
        &[
            "scenario.n_bins=32",
            "scenario.m_antennas=4",
            r#"scenario.users={"random":{"count":3,"angle_range_deg":[10,80],"dist_range_m":[1,5]}}"#,
            "overrides.draws=2",
            "overrides.snr_sweep_db=[0,20]",
            "overrides.tune_geometry=false",
        ],
    );
    let report = run(&c).unwrap();
    assert!(report.flags.is_empty(), "{:?}", report.flags);
    let (header, rows) = read_csv(&dir.path().join("sumrate.csv"));
    assert_eq!(header, ["snr_db", "scheme", "sum_rate_mean", "sum_rate_stderr"]);
    let schemes: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(schemes, ["lwa", "digital_zf", "hybrid_1rf", "lwa", "digital_zf", "hybrid_1rf"]);
    let mean = |i: usize| -> f64 { rows[i][2].parse().unwrap() };
    for j in 0..3 {
        assert!(mean(3 + j) > mean(j), "rate grows with SNR for {}", rows[j][1]);
    }
    assert!(mean(1) >= mean(2) && mean(4) >= mean(5), "digital at least hybrid");
}

#[test]
fn literal_zero_forcing_needs_enough_antennas() {
    let dir = tempfile::tempdir().unwrap();
    let c = config_with(
        ExperimentKind::Sumrate,
        dir.path(),
        &[
            "scenario.n_bins=16",
            "scenario.m_antennas=4",
            r#"scenario.users={"random":{"count":6,"angle_range_deg":[10,80],"dist_range_m":[1,5]}}"#,
            "overrides.draws=1",
            "overrides.snr_sweep_db=[10]",
            "overrides.tune_geometry=false",
            "overrides.zf_mode=all_users",
        ],
    );
    let err = run(&c).unwrap_err();
    assert_eq!((err.exit_code(), err.code()), (3, "numerical"));
}
