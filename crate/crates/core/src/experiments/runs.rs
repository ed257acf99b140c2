use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::alloc::{allocate, beampattern_field, sum_rate, tune_geometry, AssignPolicy, GeometrySearch};
use crate::baselines::{hybrid_single_rf_sum_rate, zf_scheduled_sum_rate, zf_sum_rate};
use crate::music::{covariance, freq_smoothed_covariance, music_spectrum, simulate_uplink, SteeringModel};
use crate::scene::{lwa_channel, mimo_channel, Scenario};

use super::config::{Estimator, ExperimentConfig, ExperimentKind, ZfMode};
use super::csv::{write_file, Cell, Table};
use super::{RunError, RunReport, TOOL_NAME};

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<(), RunError> {
    if config.experiment != kind {
        return Err(RunError::config(
            "experiment_mismatch",
            format!("config is for {}, not {kind}", config.experiment),
        ));
    }
    Ok(())
}

/// `run.json`: tool, version, the resolved config and, optionally, what the
/// run settled on (for example a tuned geometry).
fn write_run_json(config: &ExperimentConfig, result: Option<Value>) -> Result<PathBuf, RunError> {
    let mut doc = json!({
        "tool": TOOL_NAME,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    if let Some(result) = result {
        doc["result"] = result;
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("config serializes");
    text.push('\n');
    write_file(&config.output_dir, "run.json", &text)
}

/// Scenario with the waveguide either taken from the config or tuned.
fn lwa_scenario(config: &ExperimentConfig, base: &Scenario, policy: AssignPolicy) -> crate::Result<Scenario> {
    if config.overrides.tune_geometry.unwrap_or(false) {
        let search = GeometrySearch::from(config.overrides.geometry_search.as_ref().expect("resolved"));
        let tuned = tune_geometry(base, &search, policy)?;
        base.with_geometry(tuned.geom)
    } else {
        Ok(base.clone())
    }
}

/// Beam energy over (angle, frequency) for the default user drop, plus the
/// per-user rates of the allocation that produced it.
pub fn run_beampattern(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    expect_kind(config, ExperimentKind::Beampattern)?;
    let config = &config.resolved();
    let o = &config.overrides;
    let policy: AssignPolicy = o.policy.expect("resolved").into();
    let angles = o.angle_grid.expect("resolved").angles()?;

    let scenario = lwa_scenario(config, &config.scenario(0)?, policy)?;
    let channel = lwa_channel(&scenario)?;
    let noise = scenario.noise_variance();
    let plan = allocate(&channel, policy, scenario.total_power(), noise)?;
    let rates = sum_rate(&channel, &plan, noise);
    let field = beampattern_field(&scenario.geom, &scenario.grid, &plan, &angles)?;

    let mut bp = Table::new(&["angle_deg", "freq_ghz", "energy_db"]);
    for (i, &phi) in field.angles_deg.iter().enumerate() {
        for (n, &f) in field.freqs_hz.iter().enumerate() {
            bp.row(&[Cell::F(phi), Cell::F(f / 1e9), Cell::F(field.energy_db[(i, n)])]);
        }
    }
    let mut users = Table::new(&["user", "angle_deg", "dist_m", "rate_bits_per_bin"]);
    for (u, r) in scenario.users.iter().zip(&rates.per_user) {
        users.row(&[Cell::U(u.id), Cell::F(u.angle_deg), Cell::F(u.distance_m), Cell::F(*r)]);
    }

    let dir = &config.output_dir;
    Ok(RunReport {
        files: vec![
            bp.write(dir, "beampattern.csv")?,
            users.write(dir, "users.csv")?,
            write_run_json(
                config,
                Some(json!({
                    "geometry": {
                        "plate_sep_m": scenario.geom.plate_sep,
                        "slit_len_m": scenario.geom.slit_len,
                        "leak_alpha_np_per_m": scenario.geom.leak_alpha,
                    },
                    "sum_rate_bits_per_bin": rates.total,
                })),
            )?,
        ],
        flags: vec![],
    })
}

pub const SCHEMES: [&str; 3] = ["lwa", "digital_zf", "hybrid_1rf"];

struct DrawResult {
    /// `rates[snr][scheme]`, schemes in [`SCHEMES`] order.
    rates: Vec<[f64; 3]>,
    flags: Vec<String>,
}

fn sumrate_draw(config: &ExperimentConfig, draw: u64) -> Result<DrawResult, RunError> {
    let o = &config.overrides;
    let policy: AssignPolicy = o.policy.expect("resolved").into();
    let base = config.scenario(draw)?;
    let mimo = mimo_channel(&base)?;
    let mut out = DrawResult {
        rates: vec![],
        flags: vec![],
    };
    for &snr in o.snr_sweep_db.as_ref().expect("resolved") {
        let sc = base.with_snr_db(snr);
        let (budget, noise) = (sc.total_power(), sc.noise_variance());

        let lwa_sc = lwa_scenario(config, &sc, policy)?;
        let channel = lwa_channel(&lwa_sc)?;
        let plan = allocate(&channel, policy, budget, noise)?;
        let lwa = sum_rate(&channel, &plan, noise).total;

        let zf = match o.zf_mode.expect("resolved") {
            ZfMode::Scheduled => zf_scheduled_sum_rate(&mimo, budget, noise)?,
            ZfMode::AllUsers => zf_sum_rate(&mimo, budget, noise)?,
        };
        if zf.flagged() {
            out.flags.push(format!(
                "draw {draw}, snr {snr} dB: {} of {} bins rank-deficient under zero-forcing",
                zf.rank_deficient_bins.len(),
                mimo.n_bins()
            ));
        }
        let hybrid = hybrid_single_rf_sum_rate(&mimo, budget, noise)?;
        out.rates.push([lwa, zf.sum_rate, hybrid.sum_rate]);
    }
    Ok(out)
}

/// Sum rate against SNR for the LWA and both array baselines, averaged over
/// independent user drops.
pub fn run_sumrate(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    expect_kind(config, ExperimentKind::Sumrate)?;
    let config = &config.resolved();
    let o = &config.overrides;
    let sweep = o.snr_sweep_db.clone().expect("resolved");
    let draws = o.draws.expect("resolved") as u64;

    let results = (0..draws)
        .into_par_iter()
        .map(|d| sumrate_draw(config, d))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = Table::new(&["snr_db", "scheme", "sum_rate_mean", "sum_rate_stderr"]);
    for (s, &snr) in sweep.iter().enumerate() {
        for (j, scheme) in SCHEMES.iter().enumerate() {
            let values: Vec<f64> = results.iter().map(|r| r.rates[s][j]).collect();
            let (mean, stderr) = mean_stderr(&values);
            table.row(&[Cell::F(snr), Cell::S(scheme), Cell::F(mean), Cell::F(stderr)]);
        }
    }
    let dir = &config.output_dir;
    Ok(RunReport {
        files: vec![table.write(dir, "sumrate.csv")?, write_run_json(config, None)?],
        flags: results.into_iter().flat_map(|r| r.flags).collect(),
    })
}

/// Sample mean and standard error of the mean (zero for one value).
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// MUSIC pseudo-spectrum of one uplink measurement and its peaks.
pub fn run_music(config: &ExperimentConfig) -> Result<RunReport, RunError> {
    expect_kind(config, ExperimentKind::Music)?;
    let config = &config.resolved();
    let o = &config.overrides;
    let angles = o.angle_grid.expect("resolved").angles()?;
    let scenario = config.scenario(0)?;
    let model = SteeringModel::new(scenario.geom, scenario.grid)?;
    let noiseless = o.noiseless.expect("resolved");
    let pilots = o.pilots.expect("resolved").into();

    let r = match o.estimator.expect("resolved") {
        Estimator::Snapshots => {
            let x = simulate_uplink(&scenario, o.snapshots.expect("resolved"), pilots, 0, noiseless)?;
            covariance(&x)?
        }
        Estimator::Smoothed => {
            let x = simulate_uplink(&scenario, 1, pilots, 0, noiseless)?;
            freq_smoothed_covariance(&x.column(0).into_owned(), o.subband_len.expect("resolved"))?
        }
    };
    let res = music_spectrum(&r, &model, o.k_sources.expect("resolved"), &angles)?;

    let mut spectrum = Table::new(&["angle_deg", "pseudo_spectrum_db"]);
    for (a, db) in res.angle_grid.iter().zip(res.spectrum_db()) {
        spectrum.row(&[Cell::F(*a), Cell::F(db)]);
    }
    let truth: Vec<f64> = scenario.users.iter().map(|u| u.angle_deg).collect();
    let mut peaks = Table::new(&["peak_angle_deg", "true_angle_deg", "abs_error_deg"]);
    for &p in &res.peaks {
        let t = nearest(&truth, p);
        peaks.row(&[Cell::F(p), Cell::F(t), Cell::F((p - t).abs())]);
    }

    let mut flags = vec![];
    if res.shortfall {
        flags.push(format!(
            "found {} of {} spectrum peaks",
            res.peaks.len(),
            res.assumed_sources
        ));
    }
    let dir = &config.output_dir;
    Ok(RunReport {
        files: vec![
            spectrum.write(dir, "music.csv")?,
            peaks.write(dir, "peaks.csv")?,
            write_run_json(config, Some(json!({ "peaks_deg": res.peaks })))?,

        ],
        flags,
    })
}

/// Element of `values` closest to `x` (first on ties).
fn nearest(values: &[f64], x: f64) -> f64 {
    values
        .iter()
        .copied()
        .fold(f64::NAN, |best, v| if best.is_nan() || (v - x).abs() < (best - x).abs() { v } else { best })
}
