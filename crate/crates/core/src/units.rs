//! Physical constants and unit conventions.
//!
//! Frequencies are ordinary frequencies in GHz, energies in meV, temperatures
//! in kelvin, times in ns and voltages in mV. Boltzmann factors use
//! `exp(-H_OVER_KB * f / T)`.

/// h/k_B in K/GHz.
pub const H_OVER_KB: f64 = 0.0479924;

/// Planck constant in meV/GHz.
pub const H_MEV_PER_GHZ: f64 = 4.135_667_696e-3;

/// Boltzmann constant in meV/K, derived from the two constants above so that
/// `H_MEV_PER_GHZ / KB_MEV_PER_K == H_OVER_KB` exactly in the Boltzmann
/// factors used throughout.
pub const KB_MEV_PER_K: f64 = H_MEV_PER_GHZ / H_OVER_KB;

/// Boltzmann exponent `h f / (k_B T)` for a frequency in GHz and a temperature in K.
#[inline]
pub fn boltzmann_exponent(freq_ghz: f64, temp_k: f64) -> f64 {
    H_OVER_KB * freq_ghz / temp_k
}

/// Photon energy in meV for a frequency in GHz.
#[inline]
pub fn photon_energy(freq_ghz: f64) -> f64 {
    H_MEV_PER_GHZ * freq_ghz
}

/// 1 GHz·h in attojoules.
pub const AJ_PER_GHZ: f64 = 6.626_070_15e-7;
