//! Direct time integration of one drive period, used as an independent check of the Sambe
//! quasienergies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{static_for, DriveParams, SambeConfig};
use crate::circuit::{CircuitParams, StaticSpectrum};
use crate::error::{Error, Result};
use crate::units::{fold_to_zone, zone_distance, TWO_PI};

pub const DEFAULT_STEPS: usize = 2000;
pub const UNITARITY_TOL: f64 = 1e-8;
pub const STEP_HALVING_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MonodromyResult {
    /// Folded quasienergies in ascending order, GHz.
    pub quasienergies: Vec<f64>,
    /// `max |U'U - 1|` of the one-period propagator.
    pub unitarity_error: f64,
    /// Largest quasienergy shift between `n_steps` and `2 n_steps`, GHz.
    pub step_halving_delta: f64,
}

fn hamiltonian_at(e: &[f64], phi_c: &DMatrix<f64>, e_l: f64, drive: &DriveParams, t: f64) -> DMatrix<f64> {
    let delta = TWO_PI * drive.xi * (TWO_PI * drive.omega * t).cos();
    let mut h = phi_c * (-e_l * delta);
    let c = 0.5 * e_l * delta * delta;
    for (i, &ei) in e.iter().enumerate() {
        h[(i, i)] += ei + c;
    }
    h
}

/// `exp(-i 2 pi tau M)` for real symmetric `M`.
fn expm_symmetric(m: DMatrix<f64>, tau: f64) -> DMatrix<Complex64> {
    let eig = m.symmetric_eigen();
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -TWO_PI * tau * l)),
    );
    let mut vd = v.clone();
    for (j, mut col) in vd.column_iter_mut().enumerate() {
        col *= d[j];
    }
    vd * v.adjoint()
}

/// One-period propagator in the static eigenbasis of the first `n_levels` levels, using a
/// fourth-order commutator-free Magnus scheme.
pub fn period_propagator(
    spectrum: &StaticSpectrum,
    drive: &DriveParams,
    n_levels: usize,
    n_steps: usize,
) -> Result<DMatrix<Complex64>> {
    drive.validate()?;
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be positive"));
    }
    if spectrum.n_levels() < n_levels {
        return Err(Error::invalid("static spectrum has too few levels"));
    }
    let e = &spectrum.energies[..n_levels];
    let phi_c = spectrum.phi_centered().view((0, 0), (n_levels, n_levels)).into_owned();
    let e_l = spectrum.params.e_l;
    let h = drive.period() / n_steps as f64;
    let r3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
    let (a1, a2) = (0.25 + r3 / 6.0, 0.25 - r3 / 6.0);
    let mut u = DMatrix::<Complex64>::identity(n_levels, n_levels);
    for k in 0..n_steps {
        let t = k as f64 * h;
        let h1 = hamiltonian_at(e, &phi_c, e_l, drive, t + c1 * h);
        let h2 = hamiltonian_at(e, &phi_c, e_l, drive, t + c2 * h);
        let first = expm_symmetric(&h1 * a1 + &h2 * a2, h);
        let second = expm_symmetric(&h1 * a2 + &h2 * a1, h);
        u = second * first * u;
    }
    Ok(u)
}

fn quasienergies_of(u: &DMatrix<Complex64>, omega: f64) -> Result<Vec<f64>> {
    let lam = u
        .clone()
        .eigenvalues()
        .ok_or_else(|| Error::Eigensolver("Schur decomposition of the period propagator failed".into()))?;
    let mut q: Vec<f64> = lam.iter().map(|l| fold_to_zone(-l.arg() * omega / TWO_PI, omega)).collect();
    q.sort_by(f64::total_cmp);
    Ok(q)
}

/// Largest distance (modulo `omega`) from any entry of `a` to its nearest entry in `b`.
pub fn max_zone_mismatch(a: &[f64], b: &[f64], omega: f64) -> f64 {
    a.iter()
        .map(|&x| b.iter().map(|&y| zone_distance(x, y, omega)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn monodromy_from_spectrum(
    spectrum: &StaticSpectrum,
    drive: &DriveParams,
    n_levels: usize,
    n_steps: usize,
) -> Result<MonodromyResult> {
    let u = period_propagator(spectrum, drive, n_levels, n_steps)?;
    let unitarity_error = (u.adjoint() * &u - DMatrix::identity(n_levels, n_levels)).camax();
    if unitarity_error > UNITARITY_TOL {
        return Err(Error::NonUnitary { deviation: unitarity_error });
    }
    let q = quasienergies_of(&u, drive.omega)?;
    let u2 = period_propagator(spectrum, drive, n_levels, 2 * n_steps)?;
    let q2 = quasienergies_of(&u2, drive.omega)?;
    let step_halving_delta = max_zone_mismatch(&q, &q2, drive.omega);
    if step_halving_delta > STEP_HALVING_TOL {
        return Err(Error::StepHalving { delta: step_halving_delta });
    }
    Ok(MonodromyResult { quasienergies: q, unitarity_error, step_halving_delta })
}

/// Quasienergies of the `config.n_levels` model by direct integration over one period.
pub fn monodromy_oracle(
    params: &CircuitParams,
    drive: &DriveParams,
    config: &SambeConfig,
    n_steps: Option<usize>,
) -> Result<MonodromyResult> {
    drive.validate()?;
    let spectrum = static_for(params, drive.bias, config)?;
    monodromy_from_spectrum(&spectrum, drive, config.n_levels, n_steps.unwrap_or(DEFAULT_STEPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_propagator_is_diagonal_phase() {
        let p = CircuitParams::device();
        let d = DriveParams::new(0.5, 0.0, 0.37);
        let r = monodromy_oracle(&p, &d, &SambeConfig::new(4, 5), Some(50)).unwrap();
        let sp = crate::circuit::diagonalize_static(&p, d.bias).unwrap();
        let mut expect: Vec<f64> = sp.energies[..4].iter().map(|&e| fold_to_zone(e, 0.37)).collect();
        expect.sort_by(f64::total_cmp);
        assert!(max_zone_mismatch(&r.quasienergies, &expect, 0.37) < 1e-11);
        assert!(r.unitarity_error < 1e-12);
    }

    #[test]
    fn too_few_steps_is_reported() {
        let p = CircuitParams::device();
        let d = DriveParams::new(0.451, 0.1, 0.2);
        let err = monodromy_oracle(&p, &d, &SambeConfig::new(5, 5), Some(3)).unwrap_err();
        assert!(matches!(err, Error::StepHalving { .. }));
    }
}
