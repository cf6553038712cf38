use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sagnac_core::detection::{DetectorSpec, TdcSpec};
use sagnac_core::performance::{SourceBudget, GAUSSIAN_TIME_BANDWIDTH};
use sagnac_core::pipeline::{dispersion_filters, Setup, SCAN_LENGTHS_M, PUMP_WAVELENGTH_NM};
use sagnac_core::spectral::SpectralFilter;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub detectors: DetectorSection,
    #[serde(default)]
    pub tdc: TdcSpec,
    #[serde(default)]
    pub acquisition: AcquisitionSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fringes: FringeSection,
    #[serde(default)]
    pub dispersion: DispersionSection,
    #[serde(default)]
    pub performance: PerformanceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub gamma: f64,
    #[serde(default = "balanced")]
    pub pump_split_angle: f64,
    #[serde(default)]
    pub phase_offset: f64,
    pub pair_rate: f64,
}

fn balanced() -> f64 {
    FRAC_PI_4
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = Setup::measured();
        Self {
            gamma: s.gamma,
            pump_split_angle: s.pump_split_angle,
            phase_offset: s.phase_offset,
            pair_rate: s.pair_rate,
        }
    }
}

/// Both signal detectors share one spec, as do both idler detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub signal: DetectorSpec,
    pub idler: DetectorSpec,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            signal: DetectorSpec::free_running_ingaas(),
            idler: DetectorSpec::gated_ingaas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    /// Per setting or per fringe point.
    pub time_s: f64,
    #[serde(default = "default_shards")]
    pub shards: u32,
}

fn default_shards() -> u32 {
    8
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            time_s: 2.0,
            shards: default_shards(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// `[phi_s, phi_i]` pairs in radians.
    pub settings: Vec<[f64; 2]>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            settings: vec![[0.0, FRAC_PI_4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FringeSection {
    pub points: usize,
    pub signal_phases: Vec<f64>,
}

impl Default for FringeSection {
    fn default() -> Self {
        Self {
            points: 24,
            signal_phases: vec![0.0, -FRAC_PI_2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub signal_filter: SpectralFilter,
    pub idler_filter: SpectralFilter,
    pub pump_wavelength_nm: f64,
    pub grid_points: usize,
    pub ruler_max_delay_ps: f64,
    pub ruler_samples: usize,
    pub zero_delay_visibility: f64,
    pub delta_lambda_nm: f64,
    pub lengths_m: Vec<f64>,
    /// Delay per metre used to synthesise a scan when none is imported.
    pub r_true: f64,
    pub noise_sigma: f64,
    /// Measured ruler, `delta_t_ps,visibility`; relative to the config file.
    #[serde(default)]
    pub ruler_csv: Option<PathBuf>,
    /// Measured scan, `delta_L_m,visibility,sigma`; relative to the config file.
    #[serde(default)]
    pub scan_csv: Option<PathBuf>,
}

impl Default for DispersionSection {
    fn default() -> Self {
        let (signal_filter, idler_filter) = dispersion_filters();
        Self {
            signal_filter,
            idler_filter,
            pump_wavelength_nm: PUMP_WAVELENGTH_NM,
            grid_points: 2049,
            ruler_max_delay_ps: 40.0,
            ruler_samples: 4001,
            zero_delay_visibility: 1.0,
            delta_lambda_nm: 28.0,
            lengths_m: SCAN_LENGTHS_M.to_vec(),
            r_true: 0.47,
            noise_sigma: 0.02,
            ruler_csv: None,
            scan_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceSection {
    pub budget: SourceBudget,
    pub pump_power_mw: f64,
    pub coherence_k: f64,
}

impl Default for PerformanceSection {
    fn default() -> Self {
        Self {
            budget: SourceBudget::measured(),
            pump_power_mw: 116.0,
            coherence_k: GAUSSIAN_TIME_BANDWIDTH,
        }
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            let config = ExperimentConfig::default();
            let bytes = toml::to_string(&config)
                .map_err(|e| CliError::Config(e.to_string()))?
                .into_bytes();
            return Ok(Self { config, path: None, bytes });
        };
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(Self {
            config,
            path: Some(path.to_owned()),
            bytes,
        })
    }

    /// Resolves a path from the config relative to the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match self.path.as_ref().and_then(|c| c.parent()) {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_owned(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            output_dir: None,
            source: SourceSection::default(),
            detectors: DetectorSection::default(),
            tdc: TdcSpec::default(),
            acquisition: AcquisitionSection::default(),
            simulate: SimulateSection::default(),
            fringes: FringeSection::default(),
            dispersion: DispersionSection::default(),
            performance: PerformanceSection::default(),
        }
    }
}

fn invalid(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid `{key}`: {e}"))
}

impl ExperimentConfig {
    pub fn setup(&self) -> Setup {
        let (s, i) = (self.detectors.signal, self.detectors.idler);
        Setup {
            gamma: self.source.gamma,
            pump_split_angle: self.source.pump_split_angle,
            phase_offset: self.source.phase_offset,
            pair_rate: self.source.pair_rate,
            detectors: [s, s, i, i],
            tdc: self.tdc,
            acquisition_time_s: self.acquisition.time_s,
            shards: self.acquisition.shards,
        }
    }

    /// Enforces every module invariant reachable from the config.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.setup()
            .run(Default::default(), 0)
            .map_err(|e| invalid("source/detectors/tdc/acquisition", e))?;
        self.detectors.signal.validate().map_err(|e| invalid("detectors.signal", e))?;
        self.detectors.idler.validate().map_err(|e| invalid("detectors.idler", e))?;
        if self.simulate.settings.is_empty() {
            return Err(invalid("simulate.settings", "at least one setting is required"));
        }
        if self.fringes.points < 5 {
            return Err(invalid("fringes.points", "at least 5 points are required"));
        }
        if self.fringes.signal_phases.is_empty() {
            return Err(invalid("fringes.signal_phases", "at least one phase is required"));
        }
        let d = &self.dispersion;
        d.signal_filter.validate().map_err(|e| invalid("dispersion.signal_filter", e))?;
        d.idler_filter.validate().map_err(|e| invalid("dispersion.idler_filter", e))?;
        if !(d.delta_lambda_nm > 0.0) {
            return Err(invalid("dispersion.delta_lambda_nm", "must be positive"));
        }
        if d.lengths_m.iter().any(|l| !(*l >= 0.0)) {
            return Err(invalid("dispersion.lengths_m", "lengths must be non-negative"));
        }
        if !(d.noise_sigma >= 0.0) {
            return Err(invalid("dispersion.noise_sigma", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&d.zero_delay_visibility) {
            return Err(invalid("dispersion.zero_delay_visibility", "must lie in [0, 1]"));
        }
        self.performance.budget.validate().map_err(|e| invalid("performance.budget", e))?;
        if !(self.performance.pump_power_mw >= 0.0 && self.performance.coherence_k > 0.0) {
            return Err(invalid("performance", "pump power must be ≥ 0 and coherence_k > 0"));
        }
        Ok(())
    }
}
