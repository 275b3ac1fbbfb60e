//! Two-level rotating-wave model of the 0-3 transition under flux modulation.
//!
//! Internally `H = (omega_3 + zeta)/2 sigma_z + [g + g' cos(Omega t)] cos(omega_p t) sigma_x`,
//! so `zeta` is the shift of the transition frequency and the dynamical phase is
//! `eta(t) = 2 pi int zeta dt`. Writing the Hamiltonian with `omega sigma_z` instead only
//! rescales `omega_3` and `zeta` by one half; the phase factor and the couplings below are
//! unchanged.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::circuit::{diagonalize_static, CircuitParams, FluxBias};
use crate::error::{Error, Result};
use crate::floquet::DriveParams;
use crate::spline::CubicSpline;

/// Agreement between successive quadrature refinements of `A_n`.
pub const PHASE_TOL: f64 = 1e-10;
const MIN_NODES: usize = 64;
const MAX_NODES: usize = 1 << 16;

const FD_STEP: f64 = 1e-4;
const DISPERSION_POINTS: usize = 241;

/// Transition-frequency shift as a function of the flux excursion, GHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dispersion {
    Linear { slope: f64 },
    /// Spline of `omega_3(phi_0 + d) - omega_3(phi_0)` over `d`.
    Tabulated(CubicSpline),
}

impl Dispersion {
    pub fn zeta(&self, delta: f64) -> f64 {
        match self {
            Dispersion::Linear { slope } => slope * delta,
            Dispersion::Tabulated(s) => s.eval(delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RWAParams {
    /// Transition frequency at the DC bias, GHz.
    pub omega3: f64,
    /// Static coupling, GHz.
    pub g: f64,
    /// Amplitude of the coupling modulation, GHz.
    pub g_prime: f64,
    pub zeta: Dispersion,
}

impl RWAParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega3.is_finite() && self.omega3 > 0.0) {
            return Err(Error::invalid(format!("omega3 must be positive (got {})", self.omega3)));
        }
        if !self.g.is_finite() || !self.g_prime.is_finite() {
            return Err(Error::invalid("couplings must be finite"));
        }
        let z0 = self.zeta.zeta(0.0);
        if z0.abs() > 1e-12 {
            return Err(Error::invalid(format!("dispersion must vanish at zero excursion (got {z0})")));
        }
        Ok(())
    }
}

/// Builds the two-level model at the drive's DC bias from the static circuit.
///
/// `g = g_cap |<3|n|0>|`, `g' = xi dg/dphi` by central differences, and the dispersion is a
/// spline of the 0-3 frequency over slightly more than the drive excursion.
pub fn rwa_from_circuit(params: &CircuitParams, drive: &DriveParams, g_cap: f64) -> Result<RWAParams> {
    let params = params.with_levels(params.n_levels.max(4));
    let phi0 = drive.bias.phi_dc;
    let spectrum_at = |phi: f64| diagonalize_static(&params, FluxBias::new(phi));
    let at = spectrum_at(phi0)?;
    let omega3 = at.transition(0, 3);
    let g = g_cap * at.n_elements[(3, 0)].norm();
    let g_hi = g_cap * spectrum_at(phi0 + FD_STEP)?.n_elements[(3, 0)].norm();
    let g_lo = g_cap * spectrum_at(phi0 - FD_STEP)?.n_elements[(3, 0)].norm();
    let g_prime = drive.xi * (g_hi - g_lo) / (2.0 * FD_STEP);
    let reach = 1.2 * drive.xi.abs() + 1e-3;
    let spline = CubicSpline::tabulate(-reach, reach, DISPERSION_POINTS, |d| {
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok(spectrum_at(phi0 + d)?.transition(0, 3) - omega3)
    })?;
    Ok(RWAParams { omega3, g, g_prime, zeta: Dispersion::Tabulated(spline) })
}

/// Fourier coefficients `A_n` of `exp(i eta)` for `|n| <= n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCoefficients {
    pub n_max: i64,
    /// `coeffs[n + n_max] = A_n`.
    pub coeffs: Vec<Complex64>,
    /// Period average of `zeta`, GHz. It shifts the sideband ladder and is removed from
    /// `eta` so that the phase factor is periodic.
    pub mean_shift: f64,
    /// `sum |A_n|^2` over the returned range.
    pub captured_weight: f64,
    /// Quadrature nodes used.
    pub nodes: usize,
}

impl PhaseCoefficients {
    /// `A_n`, zero outside the returned range.
    pub fn get(&self, n: i64) -> Complex64 {
        if n.abs() > self.n_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(n + self.n_max) as usize]
        }
    }

    pub fn covers(&self, n: i64) -> bool {
        n.abs() <= self.n_max
    }
}

fn coefficients_at(rwa: &RWAParams, xi: f64, omega: f64, nodes: usize, n_max: i64) -> (Vec<Complex64>, f64) {
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(nodes);
    let inverse = planner.plan_fft_inverse(nodes);
    let scale = 1.0 / nodes as f64;
    let mut z: Vec<Complex64> = (0..nodes)
        .map(|j| {
            let theta = std::f64::consts::TAU * j as f64 / nodes as f64;
            Complex64::new(rwa.zeta.zeta(xi * theta.cos()), 0.0)
        })
        .collect();
    forward.process(&mut z);
    let mean = z[0].re * scale;
    // integrate the zero-mean series term by term: eta = sum_k c_k e^{ik theta} / (i k Omega)
    let half = nodes / 2;
    let mut eta = vec![Complex64::new(0.0, 0.0); nodes];
    for (j, c) in z.iter().enumerate().skip(1) {
        if j == half {
            continue;
        }
        let k = if j < half { j as f64 } else { j as f64 - nodes as f64 };
        eta[j] = c * scale / Complex64::new(0.0, k * omega);
    }
    inverse.process(&mut eta);
    // fix the integration constant by eta(0) = 0
    let eta0 = eta[0].re;
    let mut phase: Vec<Complex64> = eta.iter().map(|e| Complex64::from_polar(1.0, e.re - eta0)).collect();
    forward.process(&mut phase);
    let coeffs = (-n_max..=n_max)
        .map(|n| phase[n.rem_euclid(nodes as i64) as usize] * scale)
        .collect();
    (coeffs, mean)
}

/// Computes `A_n = (Omega/2pi) int e^{-i n Omega t} e^{i eta(t)} dt` on a periodic grid,
/// doubling the node count until successive refinements agree to `PHASE_TOL`.
pub fn rwa_phase_coefficients(rwa: &RWAParams, drive: &DriveParams, n_max: i64) -> Result<PhaseCoefficients> {
    rwa.validate()?;
    drive.validate()?;
    if n_max < 0 {
        return Err(Error::invalid("n_max must be non-negative"));
    }
    let mut nodes = MIN_NODES.max((4 * n_max as usize + 8).next_power_of_two());
    let (mut prev, _) = coefficients_at(rwa, drive.xi, drive.omega, nodes, n_max);
    let mut change = f64::INFINITY;
    while nodes < MAX_NODES {
        nodes *= 2;
        let (next, mean_shift) = coefficients_at(rwa, drive.xi, drive.omega, nodes, n_max);
        change = next.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prev = next;
        if change < PHASE_TOL {
            let captured_weight = prev.iter().map(|a| a.norm_sqr()).sum();
            return Ok(PhaseCoefficients { n_max, coeffs: prev, mean_shift, captured_weight, nodes });
        }
    }
    Err(Error::QuadratureNotConverged { achieved: change, requested: PHASE_TOL })
}

/// `g_n = g/2 A_n + g'/4 (A_{n-1} + A_{n+1})`, GHz.
pub fn rwa_coupling(rwa: &RWAParams, coeffs: &PhaseCoefficients, n: i64) -> Result<Complex64> {
    for k in [n - 1, n, n + 1] {
        if !coeffs.covers(k) {
            return Err(Error::OutOfWindow { index: k, cutoff: coeffs.n_max });
        }
    }
    Ok(coeffs.get(n) * (rwa.g / 2.0) + (coeffs.get(n - 1) + coeffs.get(n + 1)) * (rwa.g_prime / 4.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series for integer-order Bessel functions; adequate for |x| <= 10.
    fn bessel_j(n: i64, x: f64) -> f64 {
        let order = n.unsigned_abs() as i32;
        let sign = if n < 0 && order % 2 == 1 { -1.0 } else { 1.0 };
        let mut term = (x / 2.0).powi(order) / (1..=order).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..200 {
            term *= -(x * x / 4.0) / (k as f64 * (k + order) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sign * sum
    }

    fn linear(slope: f64) -> RWAParams {
        RWAParams { omega3: 7.0, g: 0.02, g_prime: 0.004, zeta: Dispersion::Linear { slope } }
    }

    #[test]
    fn bessel_series_known_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 10.0) - 0.043_472_746_168_861_44).abs() < 1e-12);
        assert!((bessel_j(-3, 2.5) + bessel_j(3, 2.5)).abs() < 1e-15);
    }

    #[test]
    fn undriven_coefficients() {
        let rwa = linear(5.0);
        let a = rwa_phase_coefficients(&rwa, &DriveParams::new(0.3, 0.0, 0.2), 4).unwrap();
        assert!((a.get(0) - 1.0).norm() < 1e-14);
        assert!((1..=4).all(|n| a.get(n).norm() < 1e-14 && a.get(-n).norm() < 1e-14));
        assert!((rwa_coupling(&rwa, &a, 0).unwrap().re - 0.01).abs() < 1e-15);
        assert!((rwa_coupling(&rwa, &a, 1).unwrap().re - 0.001).abs() < 1e-15);
        assert!(matches!(rwa_coupling(&rwa, &a, 4), Err(Error::OutOfWindow { index: 5, .. })));
    }

    #[test]
    fn linear_dispersion_gives_bessel_coefficients() {
        for &(slope, xi, omega) in &[(6.6, 0.01, 0.2), (20.0, 0.1, 0.2), (-3.0, 0.05, 0.4)] {
            let rwa = linear(slope);
            let a = rwa_phase_coefficients(&rwa, &DriveParams::new(0.3, xi, omega), 10).unwrap();
            let arg = slope * xi / omega;
            for n in -10..=10 {
                assert!((a.get(n) - bessel_j(n, arg)).norm() < 1e-8, "n = {n}, arg = {arg}");
            }
        }
    }

    #[test]
    fn parseval_for_curved_dispersion() {
        let x: Vec<f64> = (0..101).map(|i| -0.05 + 0.001 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|d| -6.6 * d + 40.0 * d * d + 300.0 * d * d * d).collect();
        let rwa = RWAParams {
            omega3: 7.3,
            g: 0.013,
            g_prime: 0.0,
            zeta: Dispersion::Tabulated(CubicSpline::new(x, y).unwrap()),
        };
        let a = rwa_phase_coefficients(&rwa, &DriveParams::new(0.3, 0.04, 0.2), 40).unwrap();
        assert!((a.captured_weight - 1.0).abs() < 1e-8);
        assert!(a.mean_shift > 0.0);
    }

    #[test]
    fn circuit_model_matches_static_values() {
        let params = CircuitParams::device();
        let drive = DriveParams::new(0.30, 0.01, 0.2);
        let rwa = rwa_from_circuit(&params, &drive, 0.1).unwrap();
        rwa.validate().unwrap();
        assert!((rwa.omega3 - 7.3204581).abs() < 1e-5);
        assert!((rwa.g - 0.1 * 0.1303843).abs() < 1e-6);
        // the charge element grows towards half flux
        assert!(rwa.g_prime > 0.0);
        let slope = (rwa.zeta.zeta(1e-3) - rwa.zeta.zeta(-1e-3)) / 2e-3;
        assert!((slope + 6.6).abs() < 0.3);
    }
}
