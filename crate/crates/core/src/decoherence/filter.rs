use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FourierMatrixElements;
use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::floquet::{solve_floquet, DriveParams, FloquetSolution, SambeConfig};
use crate::units::TWO_PI;

/// Filter-function weights of the 0/1 Floquet pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterWeights {
    /// `sum_k |phi_11^(k) - phi_00^(k)|^2 / 2`.
    pub dephasing: f64,
    /// `sum_k |phi_01^(k)|^2`.
    pub depolarization: f64,
    /// `2 depolarization + dephasing`.
    pub total: f64,
    /// `2 |<0|phi|1>|^2 + |<1|phi|1> - <0|phi|0>|^2 / 2` of the undriven levels.
    pub bare_total: f64,
    /// `|total - bare_total|`; zero for a genuine two-level model.
    pub leakage: f64,
}

fn bare_total(phi: &DMatrix<f64>) -> f64 {
    2.0 * phi[(0, 1)].powi(2) + 0.5 * (phi[(1, 1)] - phi[(0, 0)]).powi(2)
}

pub fn filter_weights(elems: &FourierMatrixElements, sol: &FloquetSolution) -> FilterWeights {
    let mut dephasing = 0.0;
    let mut depolarization = 0.0;
    for k in elems.k_range() {
        dephasing += 0.5 * elems.diagonal_difference(k).norm_sqr();
        depolarization += elems.at(0, 1, k).norm_sqr();
    }
    let total = 2.0 * depolarization + dephasing;
    let bare = bare_total(&sol.spectrum.phi_elements);
    FilterWeights { dephasing, depolarization, total, bare_total: bare, leakage: (total - bare).abs() }
}

/// Floquet problem restricted to the two lowest static levels.
pub fn two_level_solution(params: &CircuitParams, drive: &DriveParams, sideband_cutoff: usize) -> Result<FloquetSolution> {
    let cfg = SambeConfig { n_levels: 2, sideband_cutoff, check_convergence: false };
    solve_floquet(params, drive, &cfg)
}

/// Time-domain description of a two-level Floquet pair: `u[t][(j, s)]` is the amplitude of
/// static level `j` in Floquet mode `s` at time `times[t]`.
#[derive(Clone, Debug)]
pub struct TwoLevelReduction {
    pub omega: f64,
    pub times: Vec<f64>,
    pub u: Vec<DMatrix<Complex64>>,
    /// Phase elements of the two static levels.
    pub phi_bar: DMatrix<f64>,
}

impl TwoLevelReduction {
    pub fn from_solution(sol: &FloquetSolution) -> Result<Self> {
        if sol.config.n_levels != 2 {
            return Err(Error::invalid(format!(
                "two-level reduction needs a 2-level Floquet solution (got {})",
                sol.config.n_levels
            )));
        }
        let c = sol.cutoff();
        let m = (4 * c + 8) as usize;
        let omega = sol.omega();
        let times: Vec<f64> = (0..m).map(|j| j as f64 / (m as f64 * omega)).collect();
        let u = times
            .iter()
            .map(|&t| {
                let mut mat = DMatrix::zeros(2, 2);
                for s in 0..2 {
                    for n in -c..=c {
                        let ph = Complex64::from_polar(1.0, -(n as f64) * TWO_PI * omega * t);
                        let b = sol.block(s, n).expect("inside window");
                        for j in 0..2 {
                            mat[(j, s)] += b[j] * ph;
                        }
                    }
                }
                mat
            })
            .collect();
        let phi_bar = sol.spectrum.phi_elements.view((0, 0), (2, 2)).into_owned();
        Ok(TwoLevelReduction { omega, times, u, phi_bar })
    }

    /// Largest `|u'u - 1|` over the grid.
    pub fn orthonormality_error(&self) -> f64 {
        let id = DMatrix::<Complex64>::identity(2, 2);
        self.u.iter().map(|u| (u.adjoint() * u - &id).camax()).fold(0.0, f64::max)
    }

    /// `phi_ab(t)` on the grid.
    fn phi_t(&self) -> Vec<DMatrix<Complex64>> {
        let pb = self.phi_bar.map(|x| Complex64::new(x, 0.0));
        self.u.iter().map(|u| u.adjoint() * &pb * u).collect()
    }

    /// Fourier coefficient `phi_ab^(k)` by discrete transform over the grid.
    pub fn fourier(&self, a: usize, b: usize, k: i64) -> Complex64 {
        let m = self.times.len() as f64;
        self.phi_t()
            .iter()
            .zip(&self.times)
            .map(|(p, &t)| p[(a, b)] * Complex64::from_polar(1.0, k as f64 * TWO_PI * self.omega * t))
            .sum::<Complex64>()
            / m
    }

    /// Weights from Parseval over the time grid.
    pub fn filter_weights(&self) -> FilterWeights {
        let phis = self.phi_t();
        let m = phis.len() as f64;
        let dephasing = phis.iter().map(|p| 0.5 * (p[(1, 1)] - p[(0, 0)]).norm_sqr()).sum::<f64>() / m;
        let depolarization = phis.iter().map(|p| p[(0, 1)].norm_sqr()).sum::<f64>() / m;
        let total = 2.0 * depolarization + dephasing;
        let bare = bare_total(&self.phi_bar);
        FilterWeights { dephasing, depolarization, total, bare_total: bare, leakage: (total - bare).abs() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_weights_are_bare() {
        let p = CircuitParams::device();
        let sol = solve_floquet(&p, &DriveParams::new(0.451, 0.0, 0.5), &SambeConfig::new(5, 4)).unwrap();
        let el = FourierMatrixElements::from_solution(&sol).unwrap();
        let w = filter_weights(&el, &sol);
        let phi = &sol.spectrum.phi_elements;
        assert!((w.depolarization - phi[(0, 1)].powi(2)).abs() < 1e-12);
        assert!((w.dephasing - 0.5 * (phi[(1, 1)] - phi[(0, 0)]).powi(2)).abs() < 1e-12);
        assert!(w.leakage < 1e-12);
    }

    #[test]
    fn two_level_total_is_conserved() {
        let p = CircuitParams::device();
        let mut totals = Vec::new();
        for &(xi, om) in &[(0.02, 0.3), (0.08, 0.77), (0.12, 1.1)] {
            let sol = two_level_solution(&p, &DriveParams::new(0.451, xi, om), 20).unwrap();
            let red = TwoLevelReduction::from_solution(&sol).unwrap();
            assert!(red.orthonormality_error() < 1e-10);
            let w = red.filter_weights();
            let el = FourierMatrixElements::from_solution(&sol).unwrap();
            let w2 = filter_weights(&el, &sol);
            assert!((w.total - w2.total).abs() < 1e-10);
            assert!((red.fourier(0, 1, 1) - el.at(0, 1, 1)).norm() < 1e-10);
            totals.push(w.total);
        }
        for t in &totals {
            assert!((t / totals[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reduction_requires_two_levels() {
        let sol = solve_floquet(&CircuitParams::device(), &DriveParams::new(0.451, 0.01, 0.5), &SambeConfig::new(3, 4))
            .unwrap();
        assert!(TwoLevelReduction::from_solution(&sol).is_err());
    }
}
