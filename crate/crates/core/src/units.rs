//! Physical constants and dB helpers.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Earth's standard gravitational parameter GM (m^3/s^2).
pub const EARTH_MU: f64 = 3.986_004_418e14;

/// Mean spherical Earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Thermal noise power k·T·B in watts.
pub fn thermal_noise_w(temperature_k: f64, bandwidth_hz: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz
}
