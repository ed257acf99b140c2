//! Uniform-slit parallel-plate leaky-wave antenna.
//!
//! The guided TE1 mode between two plates separated by `b` has cutoff
//! `f_c = c / (2b)` and phase constant `beta(f) = k0 * sqrt(1 - (f_c/f)^2)`.
//! Phase matching across the slit radiates the wave at the angle `phi`
//! (measured from the waveguide axis, i.e. from endfire) where
//! `cos(phi) = beta / k0`, equivalently `sin(phi) = f_c / f`. Higher
//! frequencies therefore leave at smaller angles.
//!
//! The far-field pattern of the slit is the normalized traveling-wave
//! aperture integral
//!
//! ```text
//! G(f, phi) = (1/L) * int_0^L exp(-(alpha + j*delta) z) dz
//!           = (1 - exp(-(alpha + j*delta) L)) / ((alpha + j*delta) L)
//! delta     = beta(f) - k0(f) * cos(phi)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical parameters of the slit waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideGeometry {
    /// Plate separation in meters.
    pub plate_sep: f64,
    /// Slit (aperture) length in meters.
    pub slit_len: f64,
    /// Leakage constant in nepers per meter.
    pub leak_alpha: f64,
}

impl WaveguideGeometry {
    pub fn new(plate_sep: f64, slit_len: f64, leak_alpha: f64) -> Result<Self> {
        if !(plate_sep.is_finite() && plate_sep > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "plate separation must be positive, got {plate_sep}"
            )));
        }
        if !(slit_len.is_finite() && slit_len > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "slit length must be positive, got {slit_len}"
            )));
        }
        if !(leak_alpha.is_finite() && leak_alpha >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "leakage constant must be non-negative, got {leak_alpha}"
            )));
        }
        Ok(Self {
            plate_sep,
            slit_len,
            leak_alpha,
        })
    }

    /// Geometry whose leakage constant radiates 90% of the guided power over
    /// the slit: `alpha = ln(10) / (2L)`.
    pub fn with_default_leakage(plate_sep: f64, slit_len: f64) -> Result<Self> {
        Self::new(plate_sep, slit_len, default_leak_alpha(slit_len))
    }

    pub fn cutoff_frequency(&self) -> f64 {
        cutoff_frequency(self)
    }

    pub fn phase_constant(&self, freq: f64) -> Result<f64> {
        phase_constant(self, freq)
    }

    pub fn beam_angle(&self, freq: f64) -> Result<f64> {
        beam_angle(self, freq)
    }

    pub fn frequency_of_angle(&self, phi_deg: f64) -> Result<f64> {
        frequency_of_angle(self, phi_deg)
    }

    pub fn aperture_gain(&self, freq: f64, phi_deg: f64) -> Result<Complex64> {
        aperture_gain(self, freq, phi_deg)
    }

    /// Plate separation that places the cutoff at `cutoff_hz`.
    pub fn plate_sep_for_cutoff(cutoff_hz: f64) -> f64 {
        SPEED_OF_LIGHT / (2.0 * cutoff_hz)
    }
}

/// Leakage constant that radiates 90% of the guided power over a slit of
/// length `slit_len`.
pub fn default_leak_alpha(slit_len: f64) -> f64 {
    10f64.ln() / (2.0 * slit_len)
}

/// Uniform grid of `n_bins` subcarrier centers covering `[f_min, f_max]`.
///
/// Bin `n` is centered at `f_min + (n + 1/2) * spacing` with
/// `spacing = (f_max - f_min) / n_bins`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    f_min: f64,
    f_max: f64,
    n_bins: usize,
}

impl FrequencyGrid {
    pub fn new(f_min: f64, f_max: f64, n_bins: usize) -> Result<Self> {
        if !(f_min.is_finite() && f_max.is_finite() && f_min > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "band edges must be finite and positive, got [{f_min}, {f_max}]"
            )));
        }
        if f_min >= f_max {
            return Err(Error::InvalidGrid(format!(
                "f_min ({f_min}) must be below f_max ({f_max})"
            )));
        }
        if n_bins < 2 {
            return Err(Error::InvalidGrid(format!(
                "at least two bins are required, got {n_bins}"
            )));
        }
        Ok(Self {
            f_min,
            f_max,
            n_bins,
        })
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn len(&self) -> usize {
        self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.n_bins == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.f_max - self.f_min) / self.n_bins as f64
    }

    pub fn center(&self, n: usize) -> f64 {
        debug_assert!(n < self.n_bins);
        self.f_min + (n as f64 + 0.5) * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|n| self.center(n)).collect()
    }

    /// Index of the bin whose center is closest to `freq`.
    pub fn nearest_bin(&self, freq: f64) -> usize {
        let idx = ((freq - self.f_min) / self.spacing() - 0.5).round();
        idx.clamp(0.0, (self.n_bins - 1) as f64) as usize
    }
}

/// Uniform angle grid `start, start + step, ...` up to `stop` inclusive
/// (to within a thousandth of a step).
pub fn angle_grid(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Vec<f64>> {
    if !(start_deg.is_finite() && stop_deg.is_finite() && step_deg > 0.0 && start_deg <= stop_deg) {
        return Err(Error::InvalidGrid(format!(
            "angle grid needs start <= stop and step > 0, got ({start_deg}, {stop_deg}, {step_deg})"
        )));
    }
    let count = ((stop_deg - start_deg) / step_deg + 1e-3).floor() as usize + 1;
    Ok((0..count).map(|i| start_deg + i as f64 * step_deg).collect())
}

pub fn cutoff_frequency(geom: &WaveguideGeometry) -> f64 {
    SPEED_OF_LIGHT / (2.0 * geom.plate_sep)
}

/// Free-space wavenumber `2 pi f / c`.
pub fn wavenumber(freq: f64) -> f64 {
    2.0 * PI * freq / SPEED_OF_LIGHT
}

fn check_above_cutoff(geom: &WaveguideGeometry, freq: f64) -> Result<f64> {
    let cutoff_hz = cutoff_frequency(geom);
    if !(freq > cutoff_hz) {
        return Err(Error::BelowCutoff {
            freq_hz: freq,
            cutoff_hz,
        });
    }
    Ok(cutoff_hz)
}

/// Guided phase constant in rad/m.
pub fn phase_constant(geom: &WaveguideGeometry, freq: f64) -> Result<f64> {
    let fc = check_above_cutoff(geom, freq)?;
    let ratio = fc / freq;
    Ok(wavenumber(freq) * ((1.0 - ratio) * (1.0 + ratio)).sqrt())
}

/// Main-beam angle in degrees from endfire: `asin(f_c / f)`.
pub fn beam_angle(geom: &WaveguideGeometry, freq: f64) -> Result<f64> {
    let fc = check_above_cutoff(geom, freq)?;
    Ok((fc / freq).asin().to_degrees())
}

/// Frequency whose main beam leaves at `phi_deg`: `f_c / sin(phi)`.
pub fn frequency_of_angle(geom: &WaveguideGeometry, phi_deg: f64) -> Result<f64> {
    if !(phi_deg > 0.0 && phi_deg <= 90.0) {
        return Err(Error::AngleOutOfRange {
            angle_deg: phi_deg,
            range: "(0, 90]",
        });
    }
    Ok(cutoff_frequency(geom) / phi_deg.to_radians().sin())
}

/// `(1 - exp(-x)) / x`, continuous through the removable singularity at 0.
fn leaky_integral(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        // 1 - x/2 + x^2/6 - x^3/24 + x^4/120
        let one = Complex64::new(1.0, 0.0);
        one - x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        (1.0 - (-x).exp()) / x
    }
}

/// Phase mismatch `beta(f) - k0(f) cos(phi)` in rad/m.
pub fn phase_mismatch(geom: &WaveguideGeometry, freq: f64, phi_deg: f64) -> Result<f64> {
    let beta = phase_constant(geom, freq)?;
    Ok(beta - wavenumber(freq) * phi_deg.to_radians().cos())
}

/// Normalized complex aperture gain of the slit towards `phi_deg`.
pub fn aperture_gain(geom: &WaveguideGeometry, freq: f64, phi_deg: f64) -> Result<Complex64> {
    if !(0.0..=90.0).contains(&phi_deg) {
        return Err(Error::AngleOutOfRange {
            angle_deg: phi_deg,
            range: "[0, 90]",
        });
    }
    let delta = phase_mismatch(geom, freq, phi_deg)?;
    Ok(gain_from_mismatch(geom, delta))
}

pub(crate) fn gain_from_mismatch(geom: &WaveguideGeometry, delta: f64) -> Complex64 {
    leaky_integral(Complex64::new(geom.leak_alpha, delta) * geom.slit_len)
}

/// Peak gain magnitude `(1 - exp(-alpha L)) / (alpha L)`, reached at zero
/// phase mismatch.
pub fn peak_gain(geom: &WaveguideGeometry) -> f64 {
    leaky_integral(Complex64::new(geom.leak_alpha * geom.slit_len, 0.0)).re
}

/// Half-power beamwidth of `|G(f, .)|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beamwidth {
    /// Full width at half maximum, degrees.
    pub width_deg: f64,
    /// Lower and upper half-power angles.
    pub edges_deg: (f64, f64),
    /// Set when the half-power level is not crossed inside the angular
    /// domain and the width was clipped at 0 or 90 degrees.
    pub truncated: bool,
}

const FWHM_TOL_DEG: f64 = 1e-4;

/// Full width at half maximum of the radiated power pattern at `freq`.
pub fn beamwidth_fwhm(geom: &WaveguideGeometry, freq: f64) -> Result<Beamwidth> {
    let peak_deg = beam_angle(geom, freq)?;
    let k0 = wavenumber(freq);
    let beta = phase_constant(geom, freq)?;
    let power = |phi: f64| gain_from_mismatch(geom, beta - k0 * phi.to_radians().cos()).norm_sqr();
    let half = 0.5 * power(peak_deg);

    let mut truncated = false;
    let mut crossing = |inside: f64, edge: f64| -> f64 {
        if power(edge) >= half {
            truncated = true;
            return edge;
        }
        // power(inside) > half > power(edge); the main lobe is the only
        // place the pattern crosses the half-power level.
        let (mut hi, mut lo) = (inside, edge);
        while (hi - lo).abs() > FWHM_TOL_DEG {
            let mid = 0.5 * (hi + lo);
            if power(mid) >= half {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (hi + lo)
    };
    let lower = crossing(peak_deg, 0.0);
    let upper = crossing(peak_deg, 90.0);
    Ok(Beamwidth {
        width_deg: upper - lower,
        edges_deg: (lower, upper),
        truncated,
    })
}
