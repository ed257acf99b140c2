//! Direction finding with a single leaky-wave element.
//!
//! Each frequency bin sees the sources through a different aperture gain, so
//! a wideband measurement plays the role of an array snapshot and MUSIC can
//! be run over frequency instead of space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::eigh;
use crate::lwa::{self, FrequencyGrid, WaveguideGeometry};
use crate::noise::{label, RngStream};
use crate::scene::{noise_variance, Scenario};

/// Frequency-domain steering model of one LWA.
///
/// Measurements are assumed calibrated: the free-space slope common to all
/// directions has been divided out, leaving only the aperture gain.
#[derive(Debug, Clone)]
pub struct SteeringModel {
    pub geom: WaveguideGeometry,
    pub grid: FrequencyGrid,
    freqs: Vec<f64>,
    betas: Vec<f64>,
}

impl SteeringModel {
    pub fn new(geom: WaveguideGeometry, grid: FrequencyGrid) -> Result<Self> {
        let freqs = grid.centers();
        let betas = freqs
            .iter()
            .map(|&f| lwa::phase_constant(&geom, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geom,
            grid,
            freqs,
            betas,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    /// `[G(f_1, theta), ..., G(f_N, theta)]` before normalization.
    pub fn raw(&self, angle_deg: f64) -> Result<DVector<Complex64>> {
        check_angle(angle_deg)?;
        let cos = angle_deg.to_radians().cos();
        Ok(DVector::from_iterator(
            self.n_bins(),
            self.freqs.iter().zip(&self.betas).map(|(&f, &beta)| {
                lwa::gain_from_mismatch(&self.geom, beta - lwa::wavenumber(f) * cos)
            }),
        ))
    }

    /// Unit-norm steering vector.
    pub fn steering(&self, angle_deg: f64) -> Result<DVector<Complex64>> {
        unit(self.raw(angle_deg)?)
    }

    /// Steering vector paired with [`freq_smoothed_covariance`]: the raw
    /// sliding subvectors of length `subband_len` averaged, then normalized.
    /// The aperture gain is not shift-invariant in frequency, so this is an
    /// approximation.
    pub fn smoothed_steering(&self, angle_deg: f64, subband_len: usize) -> Result<DVector<Complex64>> {
        check_subband(subband_len, self.n_bins())?;
        let raw = self.raw(angle_deg)?;
        let count = self.n_bins() - subband_len + 1;
        let mut avg = DVector::zeros(subband_len);
        for s in 0..count {
            avg += raw.rows(s, subband_len);
        }
        unit(avg)
    }

    /// Steering vector of dimension `dim`: the full model when `dim = N`,
    /// the smoothed one otherwise.
    pub fn steering_of_dim(&self, angle_deg: f64, dim: usize) -> Result<DVector<Complex64>> {
        if dim == self.n_bins() {
            self.steering(angle_deg)
        } else {
            self.smoothed_steering(angle_deg, dim)
        }
    }
}

fn check_angle(angle_deg: f64) -> Result<()> {
    if !(angle_deg > 0.0 && angle_deg < 90.0) {
        return Err(Error::AngleOutOfRange {
            angle_deg,
            range: "(0, 90)",
        });
    }
    Ok(())
}

fn check_subband(subband_len: usize, n: usize) -> Result<()> {
    if !(2..=n).contains(&subband_len) {
        return Err(Error::InvalidArgument(format!(
            "subband length must be in [2, {n}], got {subband_len}"
        )));
    }
    Ok(())
}

fn unit(v: DVector<Complex64>) -> Result<DVector<Complex64>> {
    let norm = v.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::NoGain);
    }
    Ok(v.unscale(norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PilotScheme {
    /// i.i.d. unit-power QPSK.
    #[default]
    RandomQpsk,
    /// Rows of the `T`-point DFT, `exp(j 2 pi k t / T)`; mutually orthogonal
    /// while `K <= T`.
    Orthogonal,
}

/// Pilot matrix `K x T`.
pub fn pilots(scheme: PilotScheme, n_sources: usize, n_snapshots: usize, seed: u64, trial: u64) -> DMatrix<Complex64> {
    match scheme {
        PilotScheme::RandomQpsk => {
            let mut rng = RngStream::new(seed, label::PILOTS, trial);
            let mut s = DMatrix::zeros(n_sources, n_snapshots);
            for t in 0..n_snapshots {
                for k in 0..n_sources {
                    s[(k, t)] = rng.qpsk();
                }
            }
            s
        }
        PilotScheme::Orthogonal => DMatrix::from_fn(n_sources, n_snapshots, |k, t| {
            Complex64::from_polar(1.0, 2.0 * PI * (k * t) as f64 / n_snapshots as f64)
        }),
    }
}

/// Raw steering vectors of `angles` as columns (`N x K`), scaled so the
/// mean power per (source, bin) is one. This is what fixes the per-bin SNR.
pub fn source_matrix(model: &SteeringModel, angles_deg: &[f64]) -> Result<DMatrix<Complex64>> {
    if angles_deg.is_empty() {
        return Err(Error::InvalidArgument("at least one source angle is required".into()));
    }
    let cols = angles_deg.iter().map(|&a| model.raw(a)).collect::<Result<Vec<_>>>()?;
    let a = DMatrix::from_columns(&cols);
    let mean = a.norm_squared() / a.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::NoGain);
    }
    Ok(a.unscale(mean.sqrt()))
}

/// Uplink measurements `X = A S + sigma W` (`N x T`) for the users of
/// `scenario`. `trial` selects independent pilot and noise streams;
/// `noiseless` drops `W`.
pub fn simulate_uplink(
    scenario: &Scenario,
    n_snapshots: usize,
    scheme: PilotScheme,
    trial: u64,
    noiseless: bool,
) -> Result<DMatrix<Complex64>> {
    if n_snapshots == 0 {
        return Err(Error::InvalidArgument("at least one snapshot is required".into()));
    }
    let model = SteeringModel::new(scenario.geom, scenario.grid)?;
    let angles: Vec<f64> = scenario.users.iter().map(|u| u.angle_deg).collect();
    let a = source_matrix(&model, &angles)?;
    let s = pilots(scheme, angles.len(), n_snapshots, scenario.seed, trial);
    let mut x = a * s;
    if !noiseless {
        let sigma = noise_variance(scenario.snr_db).sqrt();
        let mut rng = RngStream::new(scenario.seed, label::NOISE, trial);
        for t in 0..n_snapshots {
            for n in 0..x.nrows() {
                x[(n, t)] += rng.complex_gaussian() * sigma;
            }
        }
    }
    Ok(x)
}

fn hermitian_part(r: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&r + r.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Sample covariance `X X^H / T`.
pub fn covariance(x: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("covariance of zero snapshots".into()));
    }
    Ok(hermitian_part(x * x.adjoint() / Complex64::new(x.ncols() as f64, 0.0)))
}

/// Covariance of one wideband snapshot averaged over all sliding subbands
/// of length `subband_len`.
pub fn freq_smoothed_covariance(x: &DVector<Complex64>, subband_len: usize) -> Result<DMatrix<Complex64>> {
    check_subband(subband_len, x.len())?;
    let count = x.len() - subband_len + 1;
    let mut r = DMatrix::zeros(subband_len, subband_len);
    for s in 0..count {
        let sub = x.rows(s, subband_len);
        r += sub * sub.adjoint();
    }
    Ok(hermitian_part(r / Complex64::new(count as f64, 0.0)))
}

/// Floor on `||E_n^H a||^2`, keeping the spectrum finite at exact nulls.
const PROJECTION_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct MusicResult {
    pub angle_grid: Vec<f64>,
    /// `1 / ||E_n^H a(theta)||^2`, linear.
    pub pseudo_spectrum: Vec<f64>,
    /// Refined peak angles, ascending.
    pub peaks: Vec<f64>,
    pub assumed_sources: usize,
    /// Fewer than `assumed_sources` local maxima were found.
    pub shortfall: bool,
}

impl MusicResult {
    /// Spectrum in dB relative to its maximum.
    pub fn spectrum_db(&self) -> Vec<f64> {
        let top = self.pseudo_spectrum.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        self.pseudo_spectrum.iter().map(|p| 10.0 * (p / top).log10()).collect()
    }
}

/// MUSIC pseudo-spectrum of `r` over `angle_grid` (uniform, degrees).
///
/// `r` is either the full `N x N` covariance or a smoothed one of size
/// `L < N`, in which case the matching smoothed steering model is used.
pub fn music_spectrum(
    r: &DMatrix<Complex64>,
    model: &SteeringModel,
    k_sources: usize,
    angle_grid: &[f64],
) -> Result<MusicResult> {
    let dim = r.nrows();
    if dim > model.n_bins() {
        return Err(Error::InvalidArgument(format!(
            "covariance of size {dim} exceeds the {} bins of the model",
            model.n_bins()
        )));
    }
    if !(k_sources >= 1 && k_sources < dim) {
        return Err(Error::InvalidArgument(format!(
            "assumed source count must be in [1, {}), got {k_sources}",
            dim
        )));
    }
    if angle_grid.is_empty() {
        return Err(Error::EmptySearchGrid);
    }
    for &a in angle_grid {
        check_angle(a)?;
    }
    let eig = eigh(r)?;
    let noise_sub = eig.vectors.columns(k_sources, dim - k_sources).into_owned();
    let noise_adj = noise_sub.adjoint();

    let pseudo_spectrum = angle_grid
        .par_iter()
        .map(|&theta| {
            let a = model.steering_of_dim(theta, dim)?;
            let proj = (&noise_adj * a).norm_squared();
            Ok(1.0 / proj.max(PROJECTION_FLOOR))
        })
        .collect::<Result<Vec<f64>>>()?;

    let peaks = pick_peaks(angle_grid, &pseudo_spectrum, k_sources);
    Ok(MusicResult {
        angle_grid: angle_grid.to_vec(),
        shortfall: peaks.len() < k_sources,
        pseudo_spectrum,
        peaks,
        assumed_sources: k_sources,
    })
}

/// The `count` largest strict interior local maxima, refined by a parabola
/// through the dB values at the peak and its neighbours. Ascending.
fn pick_peaks(angles: &[f64], spectrum: &[f64], count: usize) -> Vec<f64> {
    let db: Vec<f64> = spectrum.iter().map(|p| 10.0 * p.log10()).collect();
    let mut maxima: Vec<usize> = (1..db.len().saturating_sub(1))
        .filter(|&i| db[i] > db[i - 1] && db[i] > db[i + 1])
        .collect();
    // strongest first; ties keep the lower angle
    maxima.sort_by(|&a, &b| db[b].total_cmp(&db[a]).then(a.cmp(&b)));
    maxima.truncate(count);
    let mut peaks: Vec<f64> = maxima
        .into_iter()
        .map(|i| {
            let (l, c, r) = (db[i - 1], db[i], db[i + 1]);
            let curvature = l - 2.0 * c + r;
            let offset = if curvature < 0.0 { 0.5 * (l - r) / curvature } else { 0.0 };
            let half_left = angles[i] - angles[i - 1];
            let half_right = angles[i + 1] - angles[i];
            angles[i] + offset * if offset < 0.0 { half_left } else { half_right }
        })
        .collect();
    peaks.sort_by(f64::total_cmp);
    peaks
}
