//! Filtered biphoton spectra and the coherence factor γ(Δt).
//!
//! The two emission contributions of the loop have identical spectra. A
//! differential signal/idler delay `Δt` on one of them reduces their overlap
//! to `|∫ ρ(Ω) e^{iΩΔt} dΩ|`, where `ρ` is the normalised joint spectral
//! density of the filtered pairs along the energy-conservation line.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::constants::{bandwidth_hz, frequency_hz};
use crate::error::{Error, Result};

/// Half-width of the detuning grid, in units of the narrower filter FWHM.
const GRID_HALF_SPAN: f64 = 4.0;
/// Grid intervals are a multiple of this so that the narrower passband
/// edges fall exactly on grid nodes.
const GRID_INTERVAL_QUANTUM: usize = 16;
/// Products whose peak transmission stays below this are treated as empty.
const EMPTY_PRODUCT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterShape {
    Gaussian,
    Rectangular,
    /// `exp(−ln2·(2x/FWHM)^{2n})`; order 1 is Gaussian, large orders tend
    /// to a rectangle.
    Supergaussian { order: u32 },
}

impl Default for FilterShape {
    fn default() -> Self {
        FilterShape::Supergaussian { order: 4 }
    }
}

impl FilterShape {
    /// Intensity transmission at detuning `x` from the centre, for a filter
    /// of full width at half maximum `fwhm` (same units as `x`).
    pub fn transmission(&self, x: f64, fwhm: f64) -> f64 {
        let u = 2.0 * x / fwhm;
        match *self {
            FilterShape::Gaussian => (-std::f64::consts::LN_2 * u * u).exp(),
            FilterShape::Supergaussian { order } => {
                (-std::f64::consts::LN_2 * (u * u).powi(order as i32)).exp()
            }
            FilterShape::Rectangular => {
                let a = u.abs();
                // a jump sampled exactly on a node gets its midpoint value
                if (a - 1.0).abs() < 1e-9 {
                    0.5
                } else if a < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralFilter {
    pub center_wavelength_nm: f64,
    pub fwhm_nm: f64,
    #[serde(default)]
    pub shape: FilterShape,
}

impl SpectralFilter {
    pub fn new(center_wavelength_nm: f64, fwhm_nm: f64, shape: FilterShape) -> Result<Self> {
        let f = Self {
            center_wavelength_nm,
            fwhm_nm,
            shape,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm.is_finite() && self.center_wavelength_nm > 0.0) {
            return Err(Error::domain(format!(
                "filter centre wavelength must be positive, got {}",
                self.center_wavelength_nm
            )));
        }
        if !(self.fwhm_nm.is_finite() && self.fwhm_nm > 0.0) {
            return Err(Error::domain(format!(
                "filter bandwidth must be positive, got {}",
                self.fwhm_nm
            )));
        }
        if let FilterShape::Supergaussian { order } = self.shape {
            if order == 0 {
                return Err(Error::domain("supergaussian order must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn center_hz(&self) -> f64 {
        frequency_hz(self.center_wavelength_nm)
    }

    /// FWHM converted to frequency at the filter centre.
    pub fn fwhm_hz(&self) -> f64 {
        bandwidth_hz(self.fwhm_nm, self.center_wavelength_nm)
    }
}

/// Joint spectral density of filtered pairs, sampled on a uniform grid of
/// signal detunings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiphotonSpectrum {
    pub signal_filter: SpectralFilter,
    pub idler_filter: SpectralFilter,
    pub pump_wavelength_nm: f64,
    /// Signal optical frequency at zero detuning, Hz. The idler frequency at
    /// detuning `Ω` is `ν_pump − signal_origin_hz − Ω/2π`.
    pub signal_origin_hz: f64,
    /// Whether the filter centres were locked onto an exact conjugate pair.
    pub locked: bool,
    /// Signal detuning grid, rad/s.
    pub detuning: Vec<f64>,
    /// Spectral density per rad/s, unit trapezoidal integral.
    pub density: Vec<f64>,
    #[serde(skip)]
    weighted: Vec<f64>,
}

/// Builds the filtered pair spectrum.
///
/// Filter centres are nominal: if the energy mismatch
/// `ν_s0 + ν_i0 − ν_p` is within half the narrower passband the filters are
/// locked onto the nearest conjugate pair, otherwise the physical
/// (misaligned) overlap is used. The grid spans ±4 narrower-FWHM with at
/// least `grid_points` nodes.
pub fn build_biphoton_spectrum(
    signal_filter: &SpectralFilter,
    idler_filter: &SpectralFilter,
    pump_wavelength_nm: f64,
    grid_points: usize,
) -> Result<BiphotonSpectrum> {
    signal_filter.validate()?;
    idler_filter.validate()?;
    if !(pump_wavelength_nm.is_finite() && pump_wavelength_nm > 0.0) {
        return Err(Error::domain(format!(
            "pump wavelength must be positive, got {pump_wavelength_nm}"
        )));
    }
    if grid_points < 64 {
        return Err(Error::domain(format!(
            "grid_points must be at least 64, got {grid_points}"
        )));
    }

    let pump_hz = frequency_hz(pump_wavelength_nm);
    let (fs, fi) = (signal_filter.fwhm_hz(), idler_filter.fwhm_hz());
    let narrow = fs.min(fi);
    let mismatch = signal_filter.center_hz() + idler_filter.center_hz() - pump_hz;
    let locked = mismatch.abs() <= 0.5 * narrow;
    let offset = if locked { 0.0 } else { 0.5 * mismatch };
    let signal_origin_hz = signal_filter.center_hz() - 0.5 * mismatch;

    let intervals = (grid_points - 1).div_ceil(GRID_INTERVAL_QUANTUM) * GRID_INTERVAL_QUANTUM;
    let half_span = GRID_HALF_SPAN * narrow;
    let step = 2.0 * half_span / intervals as f64;

    let mut detuning = Vec::with_capacity(intervals + 1);
    let mut product = Vec::with_capacity(intervals + 1);
    for k in 0..=intervals {
        let x = -half_span + k as f64 * step;
        let ts = signal_filter.shape.transmission(x - offset, fs);
        let ti = idler_filter.shape.transmission(-x - offset, fi);
        detuning.push(TAU * x);
        product.push(ts * ti);
    }

    let peak = product.iter().cloned().fold(0.0, f64::max);
    if peak < EMPTY_PRODUCT {
        return Err(Error::EmptySpectrum);
    }
    let integral = trapezoid(&detuning, &product);
    let density: Vec<f64> = product.iter().map(|p| p / integral).collect();

    Ok(BiphotonSpectrum::assemble(
        *signal_filter,
        *idler_filter,
        pump_wavelength_nm,
        signal_origin_hz,
        locked,
        detuning,
        density,
    ))
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[k + 1] - x[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

impl BiphotonSpectrum {
    fn assemble(
        signal_filter: SpectralFilter,
        idler_filter: SpectralFilter,
        pump_wavelength_nm: f64,
        signal_origin_hz: f64,
        locked: bool,
        detuning: Vec<f64>,
        density: Vec<f64>,
    ) -> Self {
        let weighted = trapezoid_weights(&detuning)
            .into_iter()
            .zip(&density)
            .map(|(w, d)| w * d)
            .collect();
        Self {
            signal_filter,
            idler_filter,
            pump_wavelength_nm,
            signal_origin_hz,
            locked,
            detuning,
            density,
            weighted,
        }
    }

    /// Restores the cached quadrature weights after deserialisation.
    pub fn reindexed(self) -> Self {
        Self::assemble(
            self.signal_filter,
            self.idler_filter,
            self.pump_wavelength_nm,
            self.signal_origin_hz,
            self.locked,
            self.detuning,
            self.density,
        )
    }

    pub fn grid_points(&self) -> usize {
        self.detuning.len()
    }

    /// Grid spacing in Hz.
    pub fn step_hz(&self) -> f64 {
        (self.detuning[1] - self.detuning[0]) / TAU
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.detuning, &self.density)
    }

    /// Coherence factor for a differential signal/idler delay in ps.
    pub fn coherence(&self, delta_t_ps: f64) -> f64 {
        let t = delta_t_ps * 1e-12;
        let (mut re, mut im) = (0.0, 0.0);
        for (omega, wd) in self.detuning.iter().zip(&self.weighted) {
            let (s, c) = (omega * t).sin_cos();
            re += wd * c;
            im += wd * s;
        }
        (re * re + im * im).sqrt().min(1.0)
    }

    /// First delay in `(0, max_delay_ps]` where the coherence falls to
    /// `level`, located by a coarse scan and bisection.
    pub fn first_crossing(&self, level: f64, max_delay_ps: f64) -> Option<f64> {
        let n = 4000;
        let dt = max_delay_ps / n as f64;
        let mut lo = 0.0;
        for k in 1..=n {
            let t = k as f64 * dt;
            if self.coherence(t) <= level {
                let mut hi = t;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.coherence(mid) <= level {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            lo = t;
        }
        None
    }
}

/// Convenience wrapper over [`BiphotonSpectrum::coherence`].
pub fn coherence_function(spectrum: &BiphotonSpectrum, delta_t_ps: f64) -> f64 {
    spectrum.coherence(delta_t_ps)
}

/// Differential signal/idler delay accumulated in `delta_l_m` of extra fibre.
///
/// `dispersion` is D in ps/(nm·km) and `slope` the dispersion slope in
/// ps/(nm²·km), both referenced to a wavelength `reference_offset_nm` away
/// from the shorter-wavelength photon.
pub fn delay_from_fibre(
    delta_l_m: f64,
    delta_lambda_nm: f64,
    dispersion: f64,
    slope: f64,
    reference_offset_nm: f64,
) -> Result<f64> {
    if !(delta_l_m >= 0.0) {
        return Err(Error::domain(format!(
            "fibre length difference must be non-negative, got {delta_l_m}"
        )));
    }
    let per_km = dispersion * delta_lambda_nm
        + 0.5 * slope * delta_lambda_nm * (delta_lambda_nm + 2.0 * reference_offset_nm);
    Ok(delta_l_m * 1e-3 * per_km)
}
