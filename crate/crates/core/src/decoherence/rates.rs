use serde::{Deserialize, Serialize};

use super::{reduced, s_ac, s_dc, s_diel, ExcitationForm, FourierMatrixElements, NoiseModel, QuasienergyDerivatives};
use crate::circuit::CircuitParams;
use crate::error::Result;
use crate::floquet::{solve_floquet, DriveParams, FloquetSolution, SambeConfig};
use crate::units::ghz_to_rad_per_s;

/// Contributions of the three noise channels, 1/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelRates {
    pub dielectric: f64,
    pub dc_flux: f64,
    pub ac_amplitude: f64,
}

impl ChannelRates {
    pub fn total(&self) -> f64 {
        self.dielectric + self.dc_flux + self.ac_amplitude
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepolarizationRates {
    /// Excitation rate, 1/s.
    pub gamma_up: f64,
    /// Relaxation rate, 1/s.
    pub gamma_down: f64,
    pub up: ChannelRates,
    pub down: ChannelRates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DephasingRate {
    /// Total, 1/s, using the derivative form of the low-frequency term when derivatives were
    /// supplied and the matrix-element form otherwise.
    pub gamma_phi: f64,
    pub low_frequency: f64,
    /// Low-frequency term from `phi_11 - phi_00` Fourier elements.
    pub low_frequency_elements: f64,
    /// Low-frequency term from quasienergy derivatives, if supplied.
    pub low_frequency_derivative: Option<f64>,
    /// `k != 0` sums.
    pub high_frequency: ChannelRates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRates {
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub gamma_phi: f64,
    /// Seconds.
    pub t1: f64,
    pub t2r: f64,
    pub tphi: f64,
    pub depolarization: DepolarizationRates,
    pub dephasing: DephasingRate,
}

/// Adds `weight * S(arg)` for the three channels, skipping zero weights so that an exact
/// zero frequency is only an error when it actually contributes.
fn channel_term(
    acc: &mut ChannelRates,
    w_flux: f64,
    w_ac: f64,
    arg: f64,
    e_l2: f64,
    params: &CircuitParams,
    noise: &NoiseModel,
) -> Result<()> {
    if w_flux > 0.0 {
        acc.dielectric += w_flux * s_diel(arg, params, noise);
        acc.dc_flux += w_flux * e_l2 * reduced(s_dc(arg, noise)?);
    }
    if w_ac > 0.0 {
        acc.ac_amplitude += w_ac * e_l2 * reduced(s_ac(arg, noise)?);
    }
    Ok(())
}

/// `gamma_up` and `gamma_down` from the sideband sums. With [`ExcitationForm::Literal`] the
/// excitation sum samples `S(k Omega - eps01)` with `phi_01^(k)` taken between
/// representatives whose splitting is the natural branch; with
/// [`ExcitationForm::DetailedBalance`] each relaxation channel `k` is paired with its reverse
/// at `-(k Omega + eps01)`, which is independent of the copy choice.
pub fn depolarization_rates(
    elems: &FourierMatrixElements,
    sol: &FloquetSolution,
    noise: &NoiseModel,
    params: &CircuitParams,
) -> Result<DepolarizationRates> {
    noise.validate()?;
    let omega = sol.omega();
    let eps01 = sol.eps01_nearest_static();
    // phi_01 index offset between the stored representatives and the natural branch
    let d = ((eps01 - sol.eps01()) / omega).round() as i64;
    let phi01 = |k: i64| elems.at(0, 1, k + d);
    let e_l2 = ghz_to_rad_per_s(params.e_l).powi(2);
    let mut up = ChannelRates::default();
    let mut down = ChannelRates::default();
    let kmax = elems.max_k + 1 + d.abs();
    for k in -kmax..=kmax {
        let w_flux = phi01(k).norm_sqr();
        let w_ac = 0.25 * (phi01(k + 1) + phi01(k - 1)).norm_sqr();
        let kw = k as f64 * omega;
        channel_term(&mut down, w_flux, w_ac, kw + eps01, e_l2, params, noise)?;
        let up_arg = match noise.excitation_form {
            ExcitationForm::Literal => kw - eps01,
            ExcitationForm::DetailedBalance => -(kw + eps01),
        };
        channel_term(&mut up, w_flux, w_ac, up_arg, e_l2, params, noise)?;
    }
    Ok(DepolarizationRates { gamma_up: up.total(), gamma_down: down.total(), up, down })
}

pub fn pure_dephasing_rate(
    elems: &FourierMatrixElements,
    sol: &FloquetSolution,
    noise: &NoiseModel,
    params: &CircuitParams,
    derivatives: Option<&QuasienergyDerivatives>,
) -> Result<DephasingRate> {
    noise.validate()?;
    let omega = sol.omega();
    let e_l = ghz_to_rad_per_s(params.e_l);
    let tau = std::f64::consts::TAU;
    let ir = noise.ir_factor();

    let d0 = elems.diagonal_difference(0).norm_sqr();
    let d1 = (elems.diagonal_difference(1) + elems.diagonal_difference(-1)).norm_sqr();
    let low_frequency_elements = ir
        * (e_l.powi(2) * (tau * noise.a_dc).powi(2) * d0 + 0.25 * e_l.powi(2) * (tau * noise.a_ac).powi(2) * d1)
            .sqrt();
    let low_frequency_derivative = derivatives.map(|d| {
        let gphi = ghz_to_rad_per_s(d.d_phi_best());
        let gxi = ghz_to_rad_per_s(d.d_xi_best());
        ir * (noise.a_dc.powi(2) * gphi * gphi + noise.a_ac.powi(2) * gxi * gxi).sqrt()
    });

    let mut high = ChannelRates::default();
    let e_l2 = e_l * e_l;
    let kmax = elems.max_k + 1;
    for k in (-kmax..=kmax).filter(|&k| k != 0) {
        let w_flux = 0.5 * elems.diagonal_difference(k).norm_sqr();
        let w_ac = 0.125 * (elems.diagonal_difference(k + 1) + elems.diagonal_difference(k - 1)).norm_sqr();
        channel_term(&mut high, w_flux, w_ac, k as f64 * omega, e_l2, params, noise)?;
    }
    let low_frequency = low_frequency_derivative.unwrap_or(low_frequency_elements);
    Ok(DephasingRate {
        gamma_phi: low_frequency + high.total(),
        low_frequency,
        low_frequency_elements,
        low_frequency_derivative,
        high_frequency: high,
    })
}

pub fn coherence_rates(
    elems: &FourierMatrixElements,
    sol: &FloquetSolution,
    noise: &NoiseModel,
    params: &CircuitParams,
    derivatives: Option<&QuasienergyDerivatives>,
) -> Result<CoherenceRates> {
    let depolarization = depolarization_rates(elems, sol, noise, params)?;
    let dephasing = pure_dephasing_rate(elems, sol, noise, params, derivatives)?;
    let g1 = depolarization.gamma_up + depolarization.gamma_down;
    let t1 = 1.0 / g1;
    let gphi = dephasing.gamma_phi;
    Ok(CoherenceRates {
        gamma_up: depolarization.gamma_up,
        gamma_down: depolarization.gamma_down,
        gamma_phi: gphi,
        t1,
        t2r: 1.0 / (0.5 * g1 + gphi),
        tphi: 1.0 / gphi,
        depolarization,
        dephasing,
    })
}

/// Solve, form matrix elements and evaluate all rates with the matrix-element derivatives.
pub fn coherence(
    params: &CircuitParams,
    drive: &DriveParams,
    config: &SambeConfig,
    noise: &NoiseModel,
) -> Result<(FloquetSolution, CoherenceRates)> {
    let sol = solve_floquet(params, drive, config)?;
    let elems = FourierMatrixElements::from_solution(&sol)?;
    let rates = coherence_rates(&elems, &sol, noise, params, None)?;
    Ok((sol, rates))
}
