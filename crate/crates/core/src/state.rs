//! Two-photon polarisation state of the Sagnac source.
//!
//! The loop emits `α|V⟩s|V⟩i + e^{iφ}β|H⟩s|H⟩i`. Partial distinguishability
//! between the two emission directions is carried by a scalar coherence
//! factor `γ` that multiplies the off-diagonal terms of the density matrix.
//! Analysis projects both photons onto the diagonal basis.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-12;

/// Which diagonal projection the analyser port labelled `V` transmits.
///
/// Only relative fringe phases are observable, so the choice is a labelling
/// convention: swapping it relabels both ports of every analyser.
pub const V_PORT_PROJECTION: Projection = Projection::Plus45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Plus45,
    Minus45,
}

/// One of the four single-photon detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    SignalV,
    SignalH,
    IdlerV,
    IdlerH,
}

impl Detector {
    pub const ALL: [Detector; 4] = [
        Detector::SignalV,
        Detector::SignalH,
        Detector::IdlerV,
        Detector::IdlerH,
    ];

    pub fn index(self) -> usize {
        match self {
            Detector::SignalV => 0,
            Detector::SignalH => 1,
            Detector::IdlerV => 2,
            Detector::IdlerH => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Detector::SignalV => "s_V",
            Detector::SignalH => "s_H",
            Detector::IdlerV => "i_V",
            Detector::IdlerH => "i_H",
        }
    }
}

/// A signal/idler detector combination. Ordering throughout the crate is
/// `VV, HH, VH, HV` (signal port first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorPair {
    VV,
    HH,
    VH,
    HV,
}

impl DetectorPair {
    pub const ALL: [DetectorPair; 4] = [
        DetectorPair::VV,
        DetectorPair::HH,
        DetectorPair::VH,
        DetectorPair::HV,
    ];

    pub fn index(self) -> usize {
        match self {
            DetectorPair::VV => 0,
            DetectorPair::HH => 1,
            DetectorPair::VH => 2,
            DetectorPair::HV => 3,
        }
    }

    pub fn signal(self) -> Detector {
        match self {
            DetectorPair::VV | DetectorPair::VH => Detector::SignalV,
            DetectorPair::HH | DetectorPair::HV => Detector::SignalH,
        }
    }

    pub fn idler(self) -> Detector {
        match self {
            DetectorPair::VV | DetectorPair::HV => Detector::IdlerV,
            DetectorPair::HH | DetectorPair::VH => Detector::IdlerH,
        }
    }

    /// True when both analysers report the same port label.
    pub fn is_same_polarisation(self) -> bool {
        matches!(self, DetectorPair::VV | DetectorPair::HH)
    }

    /// `+1` for same-polarisation pairs, `-1` otherwise.
    pub fn parity(self) -> f64 {
        if self.is_same_polarisation() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorPair::VV => "VV",
            DetectorPair::HH => "HH",
            DetectorPair::VH => "VH",
            DetectorPair::HV => "HV",
        }
    }
}

impl fmt::Display for DetectorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Electro-optic phase settings applied to the `|H⟩` contributions of the
/// signal (Alice) and idler (Bob) photons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub phi_s: f64,
    pub phi_i: f64,
}

impl AnalysisSettings {
    pub fn new(phi_s: f64, phi_i: f64) -> Self {
        Self { phi_s, phi_i }
    }

    pub fn total(&self) -> f64 {
        self.phi_s + self.phi_i
    }

    /// Phases reduced to `[0, 2π)`, for display only.
    pub fn reduced(&self) -> (f64, f64) {
        (self.phi_s.rem_euclid(TAU), self.phi_i.rem_euclid(TAU))
    }
}

impl std::ops::Add for AnalysisSettings {
    type Output = AnalysisSettings;

    fn add(self, rhs: AnalysisSettings) -> AnalysisSettings {
        AnalysisSettings::new(self.phi_s + rhs.phi_s, self.phi_i + rhs.phi_i)
    }
}

/// Two-photon state `α|VV⟩ + e^{iφ}β|HH⟩` with coherence factor `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonState {
    alpha: f64,
    beta: f64,
    phi: f64,
    gamma: f64,
}

impl TwoPhotonState {
    /// Validating constructor. Amplitudes must be non-negative and
    /// normalised within 1e-12; `gamma` must lie in `[0, 1]`.
    pub fn new(alpha: f64, beta: f64, phi: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && phi.is_finite()) {
            return Err(Error::domain("state parameters must be finite"));
        }
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::domain(format!(
                "amplitudes must be non-negative, got alpha={alpha}, beta={beta}"
            )));
        }
        let norm = alpha * alpha + beta * beta;
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "alpha^2 + beta^2 = {norm}, expected 1"
            )));
        }
        check_gamma(gamma)?;
        Ok(Self {
            alpha,
            beta,
            phi,
            gamma,
        })
    }

    /// The maximally entangled state `|Φ+⟩` with the given coherence.
    pub fn phi_plus(gamma: f64) -> Result<Self> {
        make_source_state(std::f64::consts::FRAC_PI_4, 0.0, gamma)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Interference contrast `C = 2αβγ·cos φ` seen in the diagonal basis.
    pub fn contrast(&self) -> f64 {
        2.0 * self.alpha * self.beta * self.gamma * self.phi.cos()
    }

    /// Density matrix in the product basis `[HH, HV, VH, VV]` (signal first).
    pub fn density_matrix(&self) -> Matrix4<Complex64> {
        let mut rho = Matrix4::<Complex64>::zeros();
        let coh = self.gamma * self.alpha * self.beta;
        rho[(basis::VV, basis::VV)] = Complex64::new(self.alpha * self.alpha, 0.0);
        rho[(basis::HH, basis::HH)] = Complex64::new(self.beta * self.beta, 0.0);
        rho[(basis::VV, basis::HH)] = Complex64::from_polar(coh, -self.phi);
        rho[(basis::HH, basis::VV)] = Complex64::from_polar(coh, self.phi);
        rho
    }

    /// Eigenvalues of the density matrix, ascending.
    pub fn density_eigenvalues(&self) -> [f64; 4] {
        let ev = self.density_matrix().symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2], ev[3]];
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Basis indices for [`TwoPhotonState::density_matrix`].
pub mod basis {
    pub const HH: usize = 0;
    pub const HV: usize = 1;
    pub const VH: usize = 2;
    pub const VV: usize = 3;
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::domain(format!(
            "coherence factor must lie in [0, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// Source state for a pump polarisation split angle `θ`: `α = cos θ`,
/// `β = sin θ`, `φ = φ0`. `θ` must lie in `[0, π/2]`.
pub fn make_source_state(pump_split_angle: f64, phi0: f64, gamma: f64) -> Result<TwoPhotonState> {
    check_gamma(gamma)?;
    if !(0.0..=FRAC_PI_2).contains(&pump_split_angle) {
        return Err(Error::domain(format!(
            "pump split angle must lie in [0, pi/2], got {pump_split_angle}"
        )));
    }
    let (sin, cos) = pump_split_angle.sin_cos();
    // normalise away the last ulp so the 1e-12 check is never marginal
    let norm = (sin * sin + cos * cos).sqrt();
    TwoPhotonState::new(cos / norm, sin / norm, phi0, gamma)
}

/// Adds the modulator phases to the relative phase of the state.
pub fn apply_phase_modulators(state: &TwoPhotonState, settings: &AnalysisSettings) -> TwoPhotonState {
    TwoPhotonState {
        phi: state.phi + settings.phi_s + settings.phi_i,
        ..*state
    }
}

/// Diagonal-basis coincidence probabilities, indexed by [`DetectorPair`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceProbabilities(pub [f64; 4]);

impl CoincidenceProbabilities {
    pub fn get(&self, pair: DetectorPair) -> f64 {
        self.0[pair.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `P(VV) + P(HH) − P(VH) − P(HV)`.
    pub fn correlation(&self) -> f64 {
        DetectorPair::ALL
            .iter()
            .map(|p| p.parity() * self.get(*p))
            .sum()
    }
}

pub fn coincidence_probabilities(state: &TwoPhotonState) -> CoincidenceProbabilities {
    let c = state.contrast();
    let same = 0.25 * (1.0 + c);
    let opposite = 0.25 * (1.0 - c);
    CoincidenceProbabilities([same, same, opposite, opposite])
}

/// Correlation coefficient `E` after applying `settings` to `state`.
pub fn correlation_coefficient(state: &TwoPhotonState, settings: &AnalysisSettings) -> f64 {
    coincidence_probabilities(&apply_phase_modulators(state, settings)).correlation()
}
