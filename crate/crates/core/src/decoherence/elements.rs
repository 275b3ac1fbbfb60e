use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetSolution;

/// `sum_n <phi_a^(n)| op |phi_b^(n+k)>` for an operator given in the static eigenbasis.
pub fn operator_fourier(sol: &FloquetSolution, op: &DMatrix<Complex64>, a: usize, b: usize, k: i64) -> Complex64 {
    let c = sol.cutoff();
    let mut acc = Complex64::new(0.0, 0.0);
    let lo = (-c).max(-c - k);
    let hi = c.min(c - k);
    for n in lo..=hi {
        let x = sol.block(a, n).expect("index inside window");
        let y = sol.block(b, n + k).expect("index inside window");
        acc += x.dotc(&(op * y));
    }
    acc
}

/// Fourier coefficients of `<Phi_a(t)|phi|Phi_b(t)>` for `a, b` in {0, 1}, radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMatrixElements {
    /// Largest stored `|k|`; coefficients beyond it vanish identically for the truncated problem.
    pub max_k: i64,
    table: Vec<Complex64>,
}

impl FourierMatrixElements {
    /// Phase-operator elements of branches 0 and 1.
    pub fn from_solution(sol: &FloquetSolution) -> Result<Self> {
        Self::for_operator(sol, &sol.spectrum.phi_complex())
    }

    pub fn for_operator(sol: &FloquetSolution, op: &DMatrix<Complex64>) -> Result<Self> {
        if sol.n_states() < 2 {
            return Err(Error::invalid("matrix elements need the 0 and 1 branches"));
        }
        let nl = sol.config.n_levels;
        let op = op.view((0, 0), (nl, nl)).into_owned();
        let max_k = 2 * sol.cutoff();
        let width = (2 * max_k + 1) as usize;
        let mut table = vec![Complex64::new(0.0, 0.0); 4 * width];
        for a in 0..2 {
            for b in 0..2 {
                for k in -max_k..=max_k {
                    table[(a * 2 + b) * width + (k + max_k) as usize] = operator_fourier(sol, &op, a, b, k);
                }
            }
        }
        Ok(FourierMatrixElements { max_k, table })
    }

    fn width(&self) -> usize {
        (2 * self.max_k + 1) as usize
    }

    /// `phi_ab^(k)`; indices beyond the window are an error.
    pub fn get(&self, a: usize, b: usize, k: i64) -> Result<Complex64> {
        if k.abs() > self.max_k {
            return Err(Error::OutOfWindow { index: k, cutoff: self.max_k });
        }
        if a > 1 || b > 1 {
            return Err(Error::invalid(format!("branch indices ({a}, {b}) outside {{0, 1}}")));
        }
        Ok(self.at(a, b, k))
    }

    /// Like [`get`](Self::get) but zero outside the window.
    pub fn at(&self, a: usize, b: usize, k: i64) -> Complex64 {
        if k.abs() > self.max_k {
            return Complex64::new(0.0, 0.0);
        }
        self.table[(a * 2 + b) * self.width() + (k + self.max_k) as usize]
    }

    pub fn k_range(&self) -> std::ops::RangeInclusive<i64> {
        -self.max_k..=self.max_k
    }

    /// Largest violation of `phi_ab^(k) = conj(phi_ba^(-k))`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                for k in self.k_range() {
                    worst = worst.max((self.at(a, b, k) - self.at(b, a, -k).conj()).norm());
                }
            }
        }
        worst
    }

    /// `phi_11^(k) - phi_00^(k)`.
    pub fn diagonal_difference(&self, k: i64) -> Complex64 {
        self.at(1, 1, k) - self.at(0, 0, k)
    }
}
