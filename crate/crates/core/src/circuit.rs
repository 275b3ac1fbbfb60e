//! Static fluxonium Hamiltonian in the harmonic-oscillator basis of its linear part.
//!
//! The oscillator is centred at the external flux, so with `phi_osc = phi - 2 pi phi_dc`
//!
//! ```text
//! H = sqrt(8 E_C E_L) (a'a + 1/2) - E_J cos(phi_osc + 2 pi phi_dc)
//! ```
//!
//! and `cos`/`sin` of `phi_osc` are exact displacement-operator matrix elements, not
//! exponentials of a truncated matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::TWO_PI;

/// Circuit energies (E/h, GHz) and truncation of the static problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitParams {
    pub e_c: f64,
    pub e_j: f64,
    pub e_l: f64,
    pub basis_dim: usize,
    pub n_levels: usize,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self::device()
    }
}

impl CircuitParams {
    /// Device energies E_J = 2.65, E_L = 0.54, E_C = 1.17 GHz with the default truncation.
    pub fn device() -> Self {
        CircuitParams { e_c: 1.17, e_j: 2.65, e_l: 0.54, basis_dim: 80, n_levels: 6 }
    }

    pub fn with_levels(mut self, n_levels: usize) -> Self {
        self.n_levels = n_levels;
        self
    }

    /// Plasma frequency of the linear oscillator, GHz.
    pub fn plasma_frequency(&self) -> f64 {
        (8.0 * self.e_c * self.e_l).sqrt()
    }

    /// Zero-point phase fluctuation `(2 E_C / E_L)^(1/4)`.
    pub fn phi_zpf(&self) -> f64 {
        (2.0 * self.e_c / self.e_l).powf(0.25)
    }

    fn validate_hamiltonian(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.e_c) || !positive(self.e_l) {
            return Err(Error::invalid(format!(
                "E_C and E_L must be positive (got E_C = {}, E_L = {})",
                self.e_c, self.e_l
            )));
        }
        if !(self.e_j.is_finite() && self.e_j >= 0.0) {
            return Err(Error::invalid(format!("E_J must be non-negative (got {})", self.e_j)));
        }
        if self.basis_dim < 2 {
            return Err(Error::invalid(format!("basis_dim must be >= 2 (got {})", self.basis_dim)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_hamiltonian()?;
        if self.n_levels < 2 {
            return Err(Error::invalid(format!("n_levels must be >= 2 (got {})", self.n_levels)));
        }
        if self.basis_dim < 4 * self.n_levels {
            return Err(Error::invalid(format!(
                "basis_dim = {} leaves no convergence headroom for n_levels = {} (need >= {})",
                self.basis_dim,
                self.n_levels,
                4 * self.n_levels
            )));
        }
        Ok(())
    }
}

/// DC flux bias in units of the flux quantum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxBias {
    pub phi_dc: f64,
}

impl FluxBias {
    pub fn new(phi_dc: f64) -> Self {
        FluxBias { phi_dc }
    }

    /// External phase `2 pi phi_dc`.
    pub fn phase(&self) -> f64 {
        TWO_PI * self.phi_dc
    }
}

/// Lowest eigenpairs of the static Hamiltonian with phase and charge matrix elements.
#[derive(Clone, Debug)]
pub struct StaticSpectrum {
    pub params: CircuitParams,
    pub bias: FluxBias,
    /// Ascending energies, GHz.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the oscillator basis.
    pub eigenvectors: DMatrix<f64>,
    /// `<a|phi|b>` in radians, with `phi` the full phase (not centred).
    pub phi_elements: DMatrix<f64>,
    /// `<a|n|b>` in Cooper pairs.
    pub n_elements: DMatrix<Complex64>,
    /// Index pairs whose energies coincide to within [`DEGENERACY_TOL`].
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// Energy splitting (GHz) below which two retained levels are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

impl StaticSpectrum {
    pub fn n_levels(&self) -> usize {
        self.energies.len()
    }

    /// Transition frequency `E_b - E_a`, GHz.
    pub fn transition(&self, a: usize, b: usize) -> f64 {
        self.energies[b] - self.energies[a]
    }

    /// Matrix elements of the centred phase `phi - 2 pi phi_dc`, which is what the flux drive
    /// couples to once identity terms are dropped.
    pub fn phi_centered(&self) -> DMatrix<f64> {
        let mut m = self.phi_elements.clone();
        let shift = self.bias.phase();
        for i in 0..m.nrows() {
            m[(i, i)] -= shift;
        }
        m
    }

    pub fn phi_complex(&self) -> DMatrix<Complex64> {
        self.phi_elements.map(|x| Complex64::new(x, 0.0))
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Generalized Laguerre polynomial `L_n^(alpha)(x)` by upward recurrence.
fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for i in 1..n {
        let i = i as f64;
        let next = ((2.0 * i + 1.0 + alpha - x) * cur - (i + alpha) * prev) / (i + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Real and imaginary parts of `exp(i phi_zpf (a + a'))` in the number basis, i.e. the
/// matrices of `cos(phi_osc)` and `sin(phi_osc)`.
pub(crate) fn cos_sin_phi(dim: usize, phi_zpf: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = phi_zpf * phi_zpf;
    let lnf = ln_factorials(dim);
    let mut cos = DMatrix::zeros(dim, dim);
    let mut sin = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        for n in m..dim {
            let k = n - m;
            // <m|D(i phi_zpf)|n> = e^{-x/2} i^k phi_zpf^k sqrt(m!/n!) L_m^(k)(x)
            let log_mag = 0.5 * (lnf[m] - lnf[n]) + k as f64 * phi_zpf.ln() - 0.5 * x;
            let val = log_mag.exp() * laguerre(m, k as f64, x);
            let (c, s) = match k % 4 {
                0 => (val, 0.0),
                1 => (0.0, val),
                2 => (-val, 0.0),
                _ => (0.0, -val),
            };
            cos[(m, n)] = c;
            cos[(n, m)] = c;
            sin[(m, n)] = s;
            sin[(n, m)] = s;
        }
    }
    (cos, sin)
}

/// Static Hamiltonian (GHz) in the oscillator basis.
pub fn build_hamiltonian(params: &CircuitParams, bias: FluxBias) -> Result<DMatrix<f64>> {
    params.validate_hamiltonian()?;
    if !bias.phi_dc.is_finite() {
        return Err(Error::invalid("flux bias must be finite"));
    }
    let dim = params.basis_dim;
    let wp = params.plasma_frequency();
    let (cos, sin) = cos_sin_phi(dim, params.phi_zpf());
    let ext = bias.phase();
    let (ce, se) = (ext.cos(), ext.sin());
    let mut h = DMatrix::from_fn(dim, dim, |i, j| -params.e_j * (ce * cos[(i, j)] - se * sin[(i, j)]));
    for i in 0..dim {
        h[(i, i)] += wp * (i as f64 + 0.5);
    }
    Ok(h)
}

pub(crate) fn ladder(dim: usize) -> DMatrix<f64> {
    // a[(n-1, n)] = sqrt(n)
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

fn fix_gauge(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Lowest `params.n_levels` eigenpairs with phase and charge matrix elements.
pub fn diagonalize_static(params: &CircuitParams, bias: FluxBias) -> Result<StaticSpectrum> {
    params.validate()?;
    let h = build_hamiltonian(params, bias)?;
    let dim = params.basis_dim;
    let eig = h.symmetric_eigen();
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver(format!(
            "non-finite eigenvalue for basis_dim = {dim} at phi_dc = {}",
            bias.phi_dc
        )));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let nl = params.n_levels;
    let mut vecs = DMatrix::zeros(dim, nl);
    let mut energies = Vec::with_capacity(nl);
    for (col, &idx) in order.iter().take(nl).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        fix_gauge(&mut v);
        vecs.set_column(col, &v);
        energies.push(eig.eigenvalues[idx]);
    }

    let a = ladder(dim);
    let zpf = params.phi_zpf();
    let x = (&a + a.transpose()) * zpf;
    let mut phi = vecs.transpose() * x * &vecs;
    for i in 0..nl {
        phi[(i, i)] += bias.phase();
    }
    // n = i (a' - a) / (2 phi_zpf): purely imaginary in a real eigenbasis.
    let p = (a.transpose() - &a) / (2.0 * zpf);
    let n_im = vecs.transpose() * p * &vecs;
    let n_elements = n_im.map(|v| Complex64::new(0.0, v));
    // symmetrize away round-off
    let phi = (&phi + phi.transpose()) * 0.5;
    let n_elements = (&n_elements + n_elements.adjoint()) * Complex64::new(0.5, 0.0);

    let mut degenerate_pairs = Vec::new();
    for i in 0..nl {
        for j in i + 1..nl {
            if (energies[j] - energies[i]).abs() < DEGENERACY_TOL {
                degenerate_pairs.push((i, j));
            }
        }
    }

    Ok(StaticSpectrum {
        params: *params,
        bias,
        energies,
        eigenvectors: vecs,
        phi_elements: phi,
        n_elements,
        degenerate_pairs,
    })
}

/// One row of a flux dispersion table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub phi_dc: f64,
    pub energies: Vec<f64>,
}

pub fn dispersion_sweep(params: &CircuitParams, biases: &[FluxBias]) -> Result<Vec<DispersionRow>> {
    if biases.is_empty() {
        return Err(Error::invalid("dispersion sweep needs at least one bias"));
    }
    biases
        .iter()
        .map(|&b| {
            diagonalize_static(params, b)
                .map(|s| DispersionRow { phi_dc: b.phi_dc, energies: s.energies })
                .map_err(|e| Error::AtBias { phi_dc: b.phi_dc, source: Box::new(e) })
        })
        .collect()
}

/// Half the flux quantum, the static sweet spot.
pub const HALF_FLUX: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn device() -> CircuitParams {
        CircuitParams::device()
    }

    #[test]
    fn harmonic_limit_spacing() {
        let p = CircuitParams { e_j: 0.0, ..device() };
        for phi in [0.0, 0.3, 0.5] {
            let s = diagonalize_static(&p, FluxBias::new(phi)).unwrap();
            for w in s.energies.windows(2) {
                assert!((w[1] - w[0] - p.plasma_frequency()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn half_flux_reflection() {
        for d in [0.01, 0.049, 0.2] {
            let a = diagonalize_static(&device(), FluxBias::new(0.5 + d)).unwrap();
            let b = diagonalize_static(&device(), FluxBias::new(0.5 - d)).unwrap();
            for (x, y) in a.energies.iter().zip(&b.energies) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn half_flux_selection_rules() {
        let s = diagonalize_static(&device(), FluxBias::new(0.5)).unwrap();
        assert!((s.phi_elements[(0, 0)] - PI).abs() < 1e-10);
        assert!((s.phi_elements[(1, 1)] - PI).abs() < 1e-10);
        assert!(s.n_elements[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn eigenvectors_orthonormal_and_elements_hermitian() {
        let s = diagonalize_static(&device(), FluxBias::new(0.451)).unwrap();
        let g = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!((g - DMatrix::identity(6, 6)).amax() < 1e-10);
        assert!((&s.phi_elements - s.phi_elements.transpose()).amax() < 1e-10);
        assert!((&s.n_elements - s.n_elements.adjoint()).map(|z| z.norm()).max() < 1e-10);
        for i in 0..6 {
            assert!(s.n_elements[(i, i)].im.abs() < 1e-12);
        }
        assert!(s.degenerate_pairs.is_empty());
    }

    #[test]
    fn gauge_is_largest_component_positive() {
        let s = diagonalize_static(&device(), FluxBias::new(0.37)).unwrap();
        for c in s.eigenvectors.column_iter() {
            let big = c.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let bad = CircuitParams { e_c: 0.0, ..device() };
        assert!(build_hamiltonian(&bad, FluxBias::new(0.5)).is_err());
        let bad = CircuitParams { basis_dim: 1, ..device() };
        assert!(build_hamiltonian(&bad, FluxBias::new(0.5)).is_err());
        let bad = CircuitParams { n_levels: 30, ..device() };
        assert!(diagonalize_static(&bad, FluxBias::new(0.5)).is_err());
    }

    #[test]
    fn hamiltonian_symmetric() {
        let h = build_hamiltonian(&device(), FluxBias::new(0.123)).unwrap();
        assert!((&h - h.transpose()).amax() <= 1e-12 * h.amax());
    }

    #[test]
    fn dispersion_sweep_errors_carry_bias() {
        let bad = CircuitParams { n_levels: 1, ..device() };
        let err = dispersion_sweep(&bad, &[FluxBias::new(0.3)]).unwrap_err();
        assert!(matches!(err, Error::AtBias { phi_dc, .. } if phi_dc == 0.3));
        assert!(dispersion_sweep(&device(), &[]).is_err());
    }
}
