//! Scenario definition and line-of-sight channel synthesis.
//!
//! Both front-ends see the same users over the same subcarriers:
//!
//! * LWA: `h[k][n] = G(f_n, theta_k) * friis(f_n, d_k)`
//! * ULA baseline: `g[k][m][n] = friis(f_n, d_k) * exp(-j 2 pi f_n m delta cos(theta_k) / c)`
//!
//! Each architecture's channel is rescaled independently so that its mean
//! squared magnitude is one. With `P_tot = N` and noise variance
//! `10^(-snr_db/10)` per bin, a flat allocation then runs at `snr_db` on
//! average, whatever the aperture.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lwa::{self, FrequencyGrid, WaveguideGeometry, SPEED_OF_LIGHT};
use crate::noise::{label, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct User {
    pub id: usize,
    /// Degrees from the waveguide / array axis.
    pub angle_deg: f64,
    pub distance_m: f64,
}

impl User {
    pub fn new(id: usize, angle_deg: f64, distance_m: f64) -> Result<Self> {
        if !(angle_deg > 0.0 && angle_deg < 90.0) {
            return Err(Error::InvalidScenario(format!(
                "user {id}: angle {angle_deg} deg outside (0, 90)"
            )));
        }
        if !(distance_m.is_finite() && distance_m > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "user {id}: distance {distance_m} m must be positive"
            )));
        }
        Ok(Self {
            id,
            angle_deg,
            distance_m,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: FrequencyGrid,
    pub geom: WaveguideGeometry,
    pub users: Vec<User>,
    pub snr_db: f64,
    pub seed: u64,
    /// Array size of the MIMO baselines.
    pub m_antennas: usize,
}

impl Scenario {
    pub fn new(
        grid: FrequencyGrid,
        geom: WaveguideGeometry,
        users: Vec<User>,
        snr_db: f64,
        seed: u64,
        m_antennas: usize,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidScenario("at least one user is required".into()));
        }
        for (i, a) in users.iter().enumerate() {
            if users[..i].iter().any(|b| b.angle_deg == a.angle_deg) {
                return Err(Error::InvalidScenario(format!(
                    "user angles must be distinct, {} deg repeats",
                    a.angle_deg
                )));
            }
        }
        if !snr_db.is_finite() {
            return Err(Error::InvalidScenario(format!("snr_db must be finite, got {snr_db}")));
        }
        if m_antennas == 0 {
            return Err(Error::InvalidScenario("m_antennas must be at least 1".into()));
        }
        check_band(&geom, &grid)?;
        Ok(Self {
            grid,
            geom,
            users,
            snr_db,
            seed,
            m_antennas,
        })
    }

    /// Same scenario re-bound to another waveguide; fails when the new
    /// cutoff is not below the band.
    pub fn with_geometry(&self, geom: WaveguideGeometry) -> Result<Self> {
        check_band(&geom, &self.grid)?;
        Ok(Self {
            geom,
            ..self.clone()
        })
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            snr_db,
            ..self.clone()
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_bins(&self) -> usize {
        self.grid.len()
    }

    /// Per-bin noise variance `10^(-snr_db/10)`.
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db)
    }

    /// Total transmit power: one unit per bin.
    pub fn total_power(&self) -> f64 {
        self.grid.len() as f64
    }
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn check_band(geom: &WaveguideGeometry, grid: &FrequencyGrid) -> Result<()> {
    let fc = geom.cutoff_frequency();
    if !(fc < grid.f_min()) {
        return Err(Error::BelowCutoff {
            freq_hz: grid.f_min(),
            cutoff_hz: fc,
        });
    }
    Ok(())
}

/// Random user drop: angles uniform on `angle_range_deg`, distances uniform
/// on `dist_range_m`, redrawn on the (measure-zero) event of a repeated angle.
pub fn place_users(
    seed: u64,
    count: usize,
    angle_range_deg: (f64, f64),
    dist_range_m: (f64, f64),
    stream_index: u64,
) -> Result<Vec<User>> {
    let mut rng = RngStream::new(seed, label::PLACEMENT, stream_index);
    let mut users: Vec<User> = Vec::with_capacity(count);
    while users.len() < count {
        let angle = rng.uniform_range(angle_range_deg.0, angle_range_deg.1);
        let dist = rng.uniform_range(dist_range_m.0, dist_range_m.1);
        if users.iter().any(|u| u.angle_deg == angle) {
            continue;
        }
        users.push(User::new(users.len(), angle, dist)?);
    }
    Ok(users)
}

/// Free-space amplitude gain `c / (4 pi d f)`.
pub fn friis_gain(freq: f64, dist: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * PI * dist * freq)
}

/// Channel matrix of the LWA front-end, `K x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LwaChannel {
    pub gains: DMatrix<Complex64>,
    /// Factor applied to the raw gains by normalization.
    pub scale: f64,
}

impl LwaChannel {
    pub fn n_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.gains.ncols()
    }

    pub fn power(&self, user: usize, bin: usize) -> f64 {
        self.gains[(user, bin)].norm_sqr()
    }
}

/// Unnormalized LWA gains. `path_loss = false` drops the Friis factor.
pub fn lwa_channel_raw(
    geom: &WaveguideGeometry,
    grid: &FrequencyGrid,
    users: &[User],
    path_loss: bool,
) -> Result<DMatrix<Complex64>> {
    let freqs = grid.centers();
    let mut h = DMatrix::zeros(users.len(), freqs.len());
    for (n, &f) in freqs.iter().enumerate() {
        let beta = lwa::phase_constant(geom, f)?;
        let k0 = lwa::wavenumber(f);
        for (k, u) in users.iter().enumerate() {
            let delta = beta - k0 * u.angle_deg.to_radians().cos();
            let g = lwa::gain_from_mismatch(geom, delta);
            h[(k, n)] = if path_loss {
                g * friis_gain(f, u.distance_m)
            } else {
                g
            };
        }
    }
    Ok(h)
}

fn normalize(values: &mut [Complex64]) -> Result<f64> {
    let mean = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / values.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidScenario(format!(
            "cannot normalize a channel with mean power {mean}"
        )));
    }
    let scale = mean.sqrt().recip();
    for v in values.iter_mut() {
        *v *= scale;
    }
    Ok(scale)
}

/// LWA channel normalized to unit mean power over `(k, n)`.
pub fn lwa_channel(scenario: &Scenario) -> Result<LwaChannel> {
    let mut gains = lwa_channel_raw(&scenario.geom, &scenario.grid, &scenario.users, true)?;
    let scale = normalize(gains.as_mut_slice())?;
    Ok(LwaChannel { gains, scale })
}

/// Channel of the `M`-element uniform linear array, one `K x M` matrix per
/// bin, normalized to unit mean power over `(k, m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannel {
    pub per_bin: Vec<DMatrix<Complex64>>,
    pub scale: f64,
}

impl MimoChannel {
    pub fn n_bins(&self) -> usize {
        self.per_bin.len()
    }

    pub fn n_users(&self) -> usize {
        self.per_bin.first().map_or(0, |h| h.nrows())
    }

    pub fn n_antennas(&self) -> usize {
        self.per_bin.first().map_or(0, |h| h.ncols())
    }
}

/// Half-wavelength spacing at the top of the band.
pub fn ula_spacing(grid: &FrequencyGrid) -> f64 {
    SPEED_OF_LIGHT / (2.0 * grid.f_max())
}

pub fn mimo_channel_raw(grid: &FrequencyGrid, users: &[User], m_antennas: usize) -> Vec<DMatrix<Complex64>> {
    let spacing = ula_spacing(grid);
    grid.centers()
        .into_iter()
        .map(|f| {
            DMatrix::from_fn(users.len(), m_antennas, |k, m| {
                let u = &users[k];
                let phase = -2.0 * PI * f * (m as f64 * spacing * u.angle_deg.to_radians().cos())
                    / SPEED_OF_LIGHT;
                Complex64::from_polar(friis_gain(f, u.distance_m), phase)
            })
        })
        .collect()
}

pub fn mimo_channel(scenario: &Scenario) -> Result<MimoChannel> {
    let mut per_bin = mimo_channel_raw(&scenario.grid, &scenario.users, scenario.m_antennas);
    let total: f64 = per_bin
        .iter()
        .flat_map(|h| h.iter())
        .map(|v| v.norm_sqr())
        .sum();
    let count = per_bin.iter().map(|h| h.len()).sum::<usize>() as f64;
    let mean = total / count;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidScenario(format!(
            "cannot normalize a channel with mean power {mean}"
        )));
    }
    let scale = mean.sqrt().recip();
    for h in per_bin.iter_mut() {
        *h *= Complex64::new(scale, 0.0);
    }
    Ok(MimoChannel { per_bin, scale })
}
