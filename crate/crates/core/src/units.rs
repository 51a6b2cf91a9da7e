//! Unit conventions.
//!
//! Time is carried in nanoseconds and angular frequencies in rad/ns
//! throughout the crate. Configuration files use ordinary frequencies in
//! MHz; these helpers do the conversion.

use std::f64::consts::TAU;

/// Bohr magneton over Planck's constant, in MHz per gauss.
pub const MU_B_OVER_H_MHZ_PER_GAUSS: f64 = 1.3996;

/// Ordinary frequency in MHz to angular frequency in rad/ns.
pub fn mhz_to_rad_per_ns(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e-3
}

/// Angular frequency in rad/ns to ordinary frequency in MHz.
pub fn rad_per_ns_to_mhz(w: f64) -> f64 {
    w / TAU * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_conversion() {
        // 2π × 24 MHz
        let g = mhz_to_rad_per_ns(24.0);
        assert!((g - TAU * 24e-3).abs() < 1e-15);
        assert!((rad_per_ns_to_mhz(g) - 24.0).abs() < 1e-12);
    }
}
