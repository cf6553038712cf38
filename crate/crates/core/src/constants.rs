//! Physical constants (SI) and unit helpers.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Optical frequency in Hz for a vacuum wavelength in nm.
pub fn frequency_hz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

/// Vacuum wavelength in nm for an optical frequency in Hz.
pub fn wavelength_nm(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz * 1e9
}

/// Converts a wavelength interval to a frequency interval at `center_nm`
/// using the first-order relation Δν = c·Δλ/λ².
pub fn bandwidth_hz(delta_lambda_nm: f64, center_nm: f64) -> f64 {
    let center_m = center_nm * 1e-9;
    SPEED_OF_LIGHT * delta_lambda_nm * 1e-9 / (center_m * center_m)
}

/// Conversion factor from full width at half maximum to standard deviation
/// for a Gaussian, 2·√(2·ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;
