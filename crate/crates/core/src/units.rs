//! Unit conventions.
//!
//! Public types carry energies as E/h and frequencies as ordinary frequencies,
//! both in GHz. Decoherence formulas work with angular frequencies in rad/s;
//! [`ghz_to_rad_per_s`] is the single conversion point.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Converts an ordinary frequency (or energy/h) in GHz to an angular frequency in rad/s.
#[inline]
pub fn ghz_to_rad_per_s(f_ghz: f64) -> f64 {
    TWO_PI * 1e9 * f_ghz
}

/// Folds `x` into the zone (-width/2, width/2].
pub fn fold_to_zone(x: f64, width: f64) -> f64 {
    let mut r = x - width * (x / width + 0.5).floor();
    if r <= -0.5 * width {
        r += width;
    }
    if r > 0.5 * width {
        r -= width;
    }
    r
}

/// Distance between two quasienergies modulo `width`.
pub fn zone_distance(a: f64, b: f64, width: f64) -> f64 {
    fold_to_zone(a - b, width).abs()
}
