//! Fringe fitting, correlation coefficients and the CHSH parameter.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{AnalysisSettings, Detector, DetectorPair};

const MAX_ITERATIONS: usize = 200;

/// Coincidence counts recorded while one phase is scanned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub detector_pair: DetectorPair,
    pub phase_points: Vec<f64>,
    pub counts: Vec<u64>,
    pub acquisition_time_per_point_s: f64,
}

impl FringeScan {
    pub fn new(
        detector_pair: DetectorPair,
        phase_points: Vec<f64>,
        counts: Vec<u64>,
        acquisition_time_per_point_s: f64,
    ) -> Result<Self> {
        if phase_points.len() != counts.len() {
            return Err(Error::InvalidData(format!(
                "{} phases but {} counts",
                phase_points.len(),
                counts.len()
            )));
        }
        Ok(Self {
            detector_pair,
            phase_points,
            counts,
            acquisition_time_per_point_s,
        })
    }

    fn check_fittable(&self) -> Result<()> {
        let n = self.phase_points.len();
        if n < 5 {
            return Err(Error::InvalidData(format!(
                "a fringe fit needs at least 5 points, got {n}"
            )));
        }
        let (lo, hi) = self
            .phase_points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
        // a uniform grid of n points covering one period spans 2π(n−1)/n
        if hi - lo < TAU * (n - 1) as f64 / n as f64 - 1e-9 {
            return Err(Error::InvalidData(format!(
                "phase points span {:.4} rad, less than one period",
                hi - lo
            )));
        }
        if self.counts.iter().all(|c| *c == 0) {
            return Err(Error::NoSignal);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    pub visibility_sigma: f64,
    pub mean_level: f64,
    pub phase_offset: f64,
    pub chi2_per_dof: f64,
    /// Set when the unconstrained visibility exceeded 1 and was clipped.
    pub clipped: bool,
    pub iterations: usize,
}

fn model(a: f64, v: f64, phi0: f64, phase: f64) -> f64 {
    a * (1.0 + v * (phase + phi0).cos())
}

/// Weighted least-squares fit of `A·(1 + V·cos(φ + φ0))`.
///
/// Weights are `1/max(N, 1)`. The covariance is scaled by the reduced χ²,
/// so exact data yields vanishing uncertainties.
pub fn fit_fringe(scan: &FringeScan) -> Result<VisibilityFit> {
    scan.check_fittable()?;
    let phases = &scan.phase_points;
    let y: Vec<f64> = scan.counts.iter().map(|c| *c as f64).collect();
    let w: Vec<f64> = y.iter().map(|c| 1.0 / c.max(1.0)).collect();
    let n = y.len();

    let chi2 = |p: &Vector3<f64>| -> f64 {
        phases
            .iter()
            .zip(&y)
            .zip(&w)
            .map(|((ph, yk), wk)| {
                let r = yk - model(p[0], p[1], p[2], *ph);
                wk * r * r
            })
            .sum()
    };
    let normal = |p: &Vector3<f64>| -> (Matrix3<f64>, Vector3<f64>) {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for ((ph, yk), wk) in phases.iter().zip(&y).zip(&w) {
            let (s, c) = (ph + p[2]).sin_cos();
            let j = Vector3::new(1.0 + p[1] * c, p[0] * c, -p[0] * p[1] * s);
            let r = yk - model(p[0], p[1], p[2], *ph);
            h += *wk * j * j.transpose();
            g += *wk * r * j;
        }
        (h, g)
    };

    // fixed start: mean level, peak-to-peak contrast, first Fourier component
    let mean = y.iter().sum::<f64>() / n as f64;
    let (max, min) = y
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), v| (hi.max(*v), lo.min(*v)));
    let (cs, sn) = phases
        .iter()
        .zip(&y)
        .fold((0.0, 0.0), |(c, s), (ph, yk)| (c + yk * ph.cos(), s + yk * ph.sin()));
    let mut p = Vector3::new(mean, (max - min) / (max + min), (-sn).atan2(cs));

    let mut current = chi2(&p);
    let mut lambda = 1e-3;
    let mut last_step = f64::INFINITY;
    let mut converged = current == 0.0;
    let mut iterations = 0;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let (h, g) = normal(&p);
        let floor = 1e-12 * h.trace().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = h;
            for k in 0..3 {
                damped[(k, k)] += lambda * h[(k, k)].max(floor);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let value = chi2(&trial);
            if value <= current {
                last_step = (0..3)
                    .map(|k| step[k].abs() / (p[k].abs() + 1e-12))
                    .fold(0.0, f64::max);
                let drop = current - value;
                p = trial;
                current = value;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if drop <= 1e-13 * current || last_step < 1e-12 || current == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at any damping: stationary point
            converged = true;
        }
    }
    if !converged {
        return Err(Error::FitFailed {
            iterations,
            chi2: current,
            last_step,
        });
    }

    let dof = n.saturating_sub(3).max(1) as f64;
    let scale = current / dof;
    let (h, _) = normal(&p);
    let var_v = match h.try_inverse() {
        Some(inv) if inv[(1, 1)].is_finite() && inv[(1, 1)] >= 0.0 && p[1].abs() > 1e-9 => inv[(1, 1)],
        _ => {
            // φ0 is unidentifiable at V = 0; use the (A, V) block
            let block = Matrix2::new(h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
            block.try_inverse().map_or(f64::INFINITY, |inv| inv[(1, 1)])
        }
    };

    let (mut v, mut phi0) = (p[1], p[2]);
    if v < 0.0 {
        v = -v;
        phi0 += PI;
    }
    let clipped = v > 1.0;
    Ok(VisibilityFit {
        visibility: v.min(1.0),
        visibility_sigma: (var_v * scale).sqrt().max(f64::MIN_POSITIVE),
        mean_level: p[0],
        phase_offset: wrap_phase(phi0),
        chi2_per_dof: scale,
        clipped,
        iterations,
    })
}

/// Wraps into `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub sigma: f64,
}

/// `E = (N_VV + N_HH − N_VH − N_HV)/N` with Poisson errors.
pub fn expectation_from_counts(counts: [u64; 4]) -> Result<Expectation> {
    let values = counts.map(|c| c as f64);
    expectation_with_variances(values, values)
}

/// Correlation coefficient from (possibly corrected) counts with
/// explicit per-pair variances, ordered `VV, HH, VH, HV`.
pub fn expectation_with_variances(values: [f64; 4], variances: [f64; 4]) -> Result<Expectation> {
    if values.iter().chain(&variances).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("counts and variances must be non-negative"));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoCoincidences);
    }
    let same = values[0] + values[1];
    let value = (same - values[2] - values[3]) / total;
    let d_same = (1.0 - value) / total;
    let d_opp = (1.0 + value) / total;
    let var = d_same * d_same * (variances[0] + variances[1])
        + d_opp * d_opp * (variances[2] + variances[3]);
    Ok(Expectation {
        value,
        sigma: var.sqrt(),
    })
}

/// Phase settings entering the CHSH combination, in order.
pub const CHSH_SETTINGS: [AnalysisSettings; 4] = [
    AnalysisSettings { phi_s: 0.0, phi_i: FRAC_PI_4 },
    AnalysisSettings { phi_s: 0.0, phi_i: 3.0 * FRAC_PI_4 },
    AnalysisSettings { phi_s: -FRAC_PI_2, phi_i: FRAC_PI_4 },
    AnalysisSettings { phi_s: -FRAC_PI_2, phi_i: 3.0 * FRAC_PI_4 },
];

/// Signs of the four correlations in `S`.
pub const CHSH_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChshMode {
    Raw,
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub settings: AnalysisSettings,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_sigma")]
    pub s_sigma: f64,
    pub correlations: Vec<Correlation>,
    pub mode: ChshMode,
}

impl ChshResult {
    /// Distance of `S` above the local bound in units of its uncertainty.
    pub fn violation_sigmas(&self) -> f64 {
        (self.s - 2.0) / self.s_sigma
    }
}

/// Combines four correlations measured at [`CHSH_SETTINGS`].
pub fn chsh(correlations: [Correlation; 4], mode: ChshMode) -> ChshResult {
    let s = correlations
        .iter()
        .zip(CHSH_SIGNS)
        .map(|(c, sign)| sign * c.value)
        .sum();
    let s_sigma = correlations.iter().map(|c| c.sigma * c.sigma).sum::<f64>().sqrt();
    ChshResult {
        s,
        s_sigma,
        correlations: correlations.to_vec(),
        mode,
    }
}

/// Expected dark-count-induced coincidences between two detectors:
/// `(d1·s2 + s1·d2 − d1·d2)·τ·T`, rates in counts/s, window in ps.
pub fn accidental_expectation(
    dark: (f64, f64),
    singles: (f64, f64),
    window_ps: f64,
    acquisition_time_s: f64,
) -> f64 {
    (dark.0 * singles.1 + singles.0 * dark.1 - dark.0 * dark.1) * window_ps * 1e-12 * acquisition_time_s
}

/// Subtracts the expected dark-count accidentals from each pair's windowed
/// counts, clipping at zero. Rates are indexed by [`Detector::index`].
pub fn subtract_accidentals(
    counts: [f64; 4],
    dark_rates: [f64; 4],
    window_ps: f64,
    acquisition_time_s: f64,
    singles_rates: [f64; 4],
) -> Result<[f64; 4]> {
    if !(window_ps > 0.0 && acquisition_time_s > 0.0) {
        return Err(Error::domain("window and acquisition time must be positive"));
    }
    if counts
        .iter()
        .chain(&dark_rates)
        .chain(&singles_rates)
        .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::domain("counts and rates must be non-negative"));
    }
    let mut out = counts;
    for pair in DetectorPair::ALL {
        let (s, i) = (pair.signal().index(), pair.idler().index());
        let acc = accidental_expectation(
            (dark_rates[s], dark_rates[i]),
            (singles_rates[s], singles_rates[i]),
            window_ps,
            acquisition_time_s,
        );
        out[pair.index()] = (counts[pair.index()] - acc).max(0.0);
    }
    Ok(out)
}

/// Convenience for per-detector arrays.
pub fn per_detector<T: Copy>(f: impl Fn(Detector) -> T) -> [T; 4] {
    Detector::ALL.map(f)
}
