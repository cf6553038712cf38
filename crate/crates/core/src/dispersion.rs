//! Chromatic-dispersion metrology from visibility loss versus fibre length.
//!
//! A ruler maps differential delay to visibility. Fitting a length scan
//! against it gives the delay per metre `R`, and `D = 10³·R/Δλ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::BiphotonSpectrum;

const COARSE_CANDIDATES: usize = 20;
const COARSE_DECADES: f64 = 2.0;
/// Fractional tolerance of the golden-section refinement.
const GOLDEN_TOLERANCE: f64 = 1e-12;

/// Visibility as a function of differential delay, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulerCurve {
    delta_t_ps: Vec<f64>,
    visibility: Vec<f64>,
}

impl RulerCurve {
    pub fn new(delta_t_ps: Vec<f64>, visibility: Vec<f64>) -> Result<Self> {
        if delta_t_ps.is_empty() || delta_t_ps.len() != visibility.len() {
            return Err(Error::InvalidData(format!(
                "ruler needs matching non-empty columns, got {} delays and {} visibilities",
                delta_t_ps.len(),
                visibility.len()
            )));
        }
        if delta_t_ps[0] != 0.0 {
            return Err(Error::InvalidData("ruler must start at zero delay".into()));
        }
        if delta_t_ps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidData("ruler delays must be strictly increasing".into()));
        }
        if visibility.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidData("ruler visibilities must lie in [0, 1]".into()));
        }
        if visibility.iter().any(|v| *v > visibility[0]) {
            return Err(Error::InvalidData("ruler maximum must sit at zero delay".into()));
        }
        Ok(Self {
            delta_t_ps,
            visibility,
        })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delta_t_ps
    }

    pub fn visibilities(&self) -> &[f64] {
        &self.visibility
    }

    pub fn len(&self) -> usize {
        self.delta_t_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_t_ps.is_empty()
    }

    pub fn max_delay(&self) -> f64 {
        *self.delta_t_ps.last().unwrap()
    }

    /// Interpolated visibility at `|delta_t|`, `None` outside the ruler.
    pub fn value_at(&self, delta_t_ps: f64) -> Option<f64> {
        let t = delta_t_ps.abs();
        if t > self.max_delay() * (1.0 + 1e-12) {
            return None;
        }
        let k = self.delta_t_ps.partition_point(|x| *x <= t);
        if k >= self.len() {
            return Some(*self.visibility.last().unwrap());
        }
        let (t0, t1) = (self.delta_t_ps[k - 1], self.delta_t_ps[k]);
        let (v0, v1) = (self.visibility[k - 1], self.visibility[k]);
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

/// Samples `v_max·γ(Δt)` on a uniform grid from zero to `max_delay_ps`.
///
/// A zero `max_delay_ps` yields the single sample `(0, v_max)`.
pub fn build_ruler(
    spectrum: &BiphotonSpectrum,
    max_delay_ps: f64,
    n_samples: usize,
    v_max: f64,
) -> Result<RulerCurve> {
    if !(0.0..=1.0).contains(&v_max) {
        return Err(Error::domain(format!("zero-delay visibility must lie in [0, 1], got {v_max}")));
    }
    if max_delay_ps == 0.0 {
        return RulerCurve::new(vec![0.0], vec![v_max]);
    }
    if !(max_delay_ps > 0.0 && max_delay_ps.is_finite()) {
        return Err(Error::domain(format!("max delay must be positive, got {max_delay_ps}")));
    }
    if n_samples < 16 {
        return Err(Error::domain(format!("ruler needs at least 16 samples, got {n_samples}")));
    }
    let step = max_delay_ps / (n_samples - 1) as f64;
    let delays: Vec<f64> = (0..n_samples).map(|k| k as f64 * step).collect();
    let mut vis: Vec<f64> = delays.iter().map(|t| v_max * spectrum.coherence(*t)).collect();
    // quadrature noise must not lift a sample above the zero-delay value
    for v in vis.iter_mut().skip(1) {
        *v = v.min(v_max);
    }
    RulerCurve::new(delays, vis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPoint {
    pub delta_l_m: f64,
    pub visibility: f64,
    pub visibility_sigma: f64,
}

/// Visibilities measured against added fibre length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthScan {
    pub points: Vec<LengthPoint>,
}

impl LengthScan {
    pub fn new(points: Vec<LengthPoint>) -> Result<Self> {
        for p in &points {
            if !(p.delta_l_m >= 0.0) {
                return Err(Error::InvalidData(format!("negative length {}", p.delta_l_m)));
            }
            if !(p.visibility_sigma > 0.0) {
                return Err(Error::InvalidData(format!(
                    "visibility sigma must be positive, got {}",
                    p.visibility_sigma
                )));
            }
            if !p.visibility.is_finite() {
                return Err(Error::InvalidData("non-finite visibility".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn max_length(&self) -> f64 {
        self.points.iter().map(|p| p.delta_l_m).fold(0.0, f64::max)
    }
}

/// Draws a scan from the ruler at `r_true` with Gaussian visibility noise.
pub fn synthetic_length_scan<R: Rng + ?Sized>(
    ruler: &RulerCurve,
    r_true: f64,
    lengths_m: &[f64],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<LengthScan> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::domain("noise sigma must be non-negative"));
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::domain(e.to_string()))?;
    let points = lengths_m
        .iter()
        .map(|l| {
            let delay = r_true * l;
            let v = ruler.value_at(delay).ok_or(Error::RulerTooShort {
                max_delay_ps: ruler.max_delay(),
            })?;
            let noise = if noise_sigma > 0.0 { normal.sample(rng) } else { 0.0 };
            Ok(LengthPoint {
                delta_l_m: *l,
                visibility: v + noise,
                // noiseless scans carry a nominal sigma to keep the scan valid
                visibility_sigma: if noise_sigma > 0.0 { noise_sigma } else { 1e-9 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LengthScan::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub r: f64,
    pub r_sigma: f64,
    /// Offsets below and above `r` at which the SSE doubles.
    pub one_sided_sigmas: [f64; 2],
    pub residual_sse: f64,
}

fn sse(scan: &LengthScan, ruler: &RulerCurve, r: f64) -> Option<f64> {
    scan.points.iter().try_fold(0.0, |acc, p| {
        let model = ruler.value_at(r * p.delta_l_m)?;
        let d = p.visibility - model;
        Some(acc + d * d)
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > GOLDEN_TOLERANCE * (a.abs() + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Offset from `r` towards `bound` at which the SSE reaches `target`.
/// Returns the full distance when the SSE never gets there.
fn doubling_offset(f: &impl Fn(f64) -> f64, r: f64, bound: f64, target: f64) -> f64 {
    let span = bound - r;
    if span == 0.0 {
        return 0.0;
    }
    if f(bound) < target {
        return span.abs();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut frac = 1e-6;
    while frac < 1.0 {
        if f(r + frac * span) >= target {
            hi = frac;
            break;
        }
        lo = frac;
        frac *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(r + mid * span) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi) * span.abs()
}

/// Least-squares delay-per-length `R` in ps/m of a scan against a ruler.
pub fn fit_scaling_factor(scan: &LengthScan, ruler: &RulerCurve) -> Result<ScalingFit> {
    if scan.points.len() < 3 {
        return Err(Error::InvalidData(format!(
            "a scaling fit needs at least 3 points, got {}",
            scan.points.len()
        )));
    }
    let l_max = scan.max_length();
    if l_max == 0.0 {
        return Err(Error::Unidentifiable("all length differences are zero".into()));
    }
    let r_hi = ruler.max_delay() / l_max;
    if r_hi == 0.0 {
        return Err(Error::RulerTooShort { max_delay_ps: 0.0 });
    }
    let f = |r: f64| sse(scan, ruler, r).unwrap_or(f64::INFINITY);

    let candidates: Vec<f64> = (0..COARSE_CANDIDATES)
        .map(|k| {
            let e = COARSE_DECADES * ((COARSE_CANDIDATES - 1 - k) as f64 / (COARSE_CANDIDATES - 1) as f64);
            r_hi / 10f64.powf(e)
        })
        .collect();
    let values: Vec<f64> = candidates.iter().map(|r| f(*r)).collect();
    let (lo_v, hi_v) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi_v - lo_v <= 1e-12 * hi_v.max(f64::MIN_POSITIVE) {
        return Err(Error::Unidentifiable("SSE is flat over the search range".into()));
    }
    // first minimum wins ties, i.e. the smaller R
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v < values[b] { k } else { b });
    let a = if best == 0 { 0.0 } else { candidates[best - 1] };
    let b = candidates[(best + 1).min(COARSE_CANDIDATES - 1)];
    let r = golden_section(f, a, b);
    if r >= r_hi * (1.0 - 1e-6) {
        return Err(Error::RulerTooShort {
            max_delay_ps: ruler.max_delay(),
        });
    }

    let min = f(r);
    let target = 2.0 * min;
    let below = doubling_offset(&f, r, 0.0, target);
    let above = doubling_offset(&f, r, r_hi, target);
    Ok(ScalingFit {
        r,
        r_sigma: (0.5 * (below + above)).max(f64::MIN_POSITIVE),
        one_sided_sigmas: [below, above],
        residual_sse: min,
    })
}

/// `D = 10³·R/Δλ` in ps/(nm·km), with the same mapping for the uncertainty.
pub fn dispersion_coefficient(r: f64, r_sigma: f64, delta_lambda_nm: f64) -> Result<(f64, f64)> {
    if !(delta_lambda_nm > 0.0) {
        return Err(Error::domain(format!(
            "wavelength separation must be positive, got {delta_lambda_nm}"
        )));
    }
    Ok((1e3 * r / delta_lambda_nm, 1e3 * r_sigma / delta_lambda_nm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionFitResult {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "R_sigma")]
    pub r_sigma: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_sigma")]
    pub d_sigma: f64,
    pub delta_lambda: f64,
    pub residual_sse: f64,
    pub one_sided_sigmas: [f64; 2],
}

/// Fits `R` and converts it to a dispersion coefficient.
pub fn fit_dispersion(scan: &LengthScan, ruler: &RulerCurve, delta_lambda_nm: f64) -> Result<DispersionFitResult> {
    if !(delta_lambda_nm > 0.0) {
        return Err(Error::domain("wavelength separation must be positive"));
    }
    let fit = fit_scaling_factor(scan, ruler)?;
    let (d, d_sigma) = dispersion_coefficient(fit.r, fit.r_sigma, delta_lambda_nm)?;
    Ok(DispersionFitResult {
        r: fit.r,
        r_sigma: fit.r_sigma,
        d,
        d_sigma,
        delta_lambda: delta_lambda_nm,
        residual_sse: fit.residual_sse,
        one_sided_sigmas: fit.one_sided_sigmas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub delta_lambda_nm: f64,
    pub delta_t_ps: f64,
    pub visibility: f64,
}

/// Expected delay and visibility for each wavelength separation when
/// `fibre_length_m` of fibre with dispersion `d_assumed` is added.
pub fn sensitivity_report(
    spectrum: &BiphotonSpectrum,
    delta_lambda_options: &[f64],
    fibre_length_m: f64,
    d_assumed: f64,
) -> Result<Vec<SensitivityRow>> {
    if delta_lambda_options.is_empty() {
        return Err(Error::domain("no wavelength separations given"));
    }
    let mut rows: Vec<SensitivityRow> = delta_lambda_options
        .iter()
        .map(|dl| {
            let delta_t_ps = 1e-3 * d_assumed * dl * fibre_length_m;
            SensitivityRow {
                delta_lambda_nm: *dl,
                delta_t_ps,
                visibility: spectrum.coherence(delta_t_ps),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.delta_lambda_nm.total_cmp(&b.delta_lambda_nm));
    Ok(rows)
}
