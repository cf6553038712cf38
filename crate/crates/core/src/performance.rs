//! Source budget arithmetic: brightness, multi-pair rate and heralding.

use serde::{Deserialize, Serialize};

use crate::constants::{bandwidth_hz, frequency_hz, PLANCK};
use crate::error::{Error, Result};

/// Time-bandwidth product of a transform-limited Gaussian pulse.
pub const GAUSSIAN_TIME_BANDWIDTH: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBudget {
    /// Pairs per pump photon.
    pub downconversion_efficiency: f64,
    pub emission_bandwidth_nm: f64,
    pub emission_center_nm: f64,
    pub pump_wavelength_nm: f64,
    /// Propagation loss per arm in dB.
    pub propagation_loss_db: f64,
}

impl SourceBudget {
    pub fn measured() -> Self {
        Self {
            downconversion_efficiency: 2.5e-6,
            emission_bandwidth_nm: 40.0,
            emission_center_nm: 1560.0,
            pump_wavelength_nm: 780.0,
            propagation_loss_db: 6.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.downconversion_efficiency,
            self.emission_bandwidth_nm,
            self.emission_center_nm,
            self.pump_wavelength_nm,
            self.propagation_loss_db,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("source budget entries must be finite and non-negative"));
        }
        if self.downconversion_efficiency > 1.0 {
            return Err(Error::domain("downconversion efficiency cannot exceed 1"));
        }
        if !(self.emission_center_nm > 0.0 && self.pump_wavelength_nm > 0.0) {
            return Err(Error::domain("wavelengths must be positive"));
        }
        Ok(())
    }

    pub fn emission_bandwidth_ghz(&self) -> f64 {
        bandwidth_hz(self.emission_bandwidth_nm, self.emission_center_nm) * 1e-9
    }
}

/// Pump photons per second carried by 1 mW.
pub fn pump_photon_flux_per_mw(pump_wavelength_nm: f64) -> f64 {
    1e-3 / (PLANCK * frequency_hz(pump_wavelength_nm))
}

/// Pairs emitted per second for `pump_power_mw`.
pub fn total_pair_rate(budget: &SourceBudget, pump_power_mw: f64) -> f64 {
    budget.downconversion_efficiency * pump_photon_flux_per_mw(budget.pump_wavelength_nm) * pump_power_mw
}

/// Pairs per second, per mW of pump and per GHz of emission bandwidth.
pub fn spectral_brightness(budget: &SourceBudget) -> Result<f64> {
    budget.validate()?;
    if budget.emission_bandwidth_nm == 0.0 {
        return Err(Error::domain("emission bandwidth must be positive"));
    }
    Ok(total_pair_rate(budget, 1.0) / budget.emission_bandwidth_ghz())
}

/// Mean pairs per coherence time `τ_c = k/Δν`; the bandwidth cancels.
pub fn pairs_per_coherence_time(brightness: f64, pump_power_mw: f64, k: f64) -> Result<f64> {
    if [brightness, pump_power_mw, k].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain("brightness, power and k must be non-negative"));
    }
    Ok(brightness * pump_power_mw * k / 1e9)
}

/// Transmission `10^(−loss/10)` of one arm.
pub fn heralding_efficiency(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::domain(format!("loss must be non-negative, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub spectral_brightness: f64,
    pub pump_power_mw: f64,
    pub coherence_k: f64,
    pub pairs_per_coherence_time: f64,
    pub total_pair_rate: f64,
    pub heralding_efficiency: f64,
}

pub fn performance_report(budget: &SourceBudget, pump_power_mw: f64, k: f64) -> Result<PerformanceReport> {
    let b = spectral_brightness(budget)?;
    Ok(PerformanceReport {
        spectral_brightness: b,
        pump_power_mw,
        coherence_k: k,
        pairs_per_coherence_time: pairs_per_coherence_time(b, pump_power_mw, k)?,
        total_pair_rate: total_pair_rate(budget, pump_power_mw),
        heralding_efficiency: heralding_efficiency(budget.propagation_loss_db)?,
    })
}
