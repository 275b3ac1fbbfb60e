//! Noise spectra, Floquet-basis phase matrix elements, Bloch-Redfield rates, quasienergy
//! derivatives, sweet-spot search and the filter-weight conservation law.

mod derivatives;
mod elements;
mod filter;
mod rates;
mod sweet;

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::units::{ghz_to_rad_per_s, HBAR, K_B};

pub use derivatives::{
    derivatives_from_elements, quasienergy_derivatives, FiniteDifference, QuasienergyDerivatives,
};
pub use elements::{operator_fourier, FourierMatrixElements};
pub use filter::{filter_weights, two_level_solution, FilterWeights, TwoLevelReduction};
pub use rates::{
    coherence, coherence_rates, depolarization_rates, pure_dephasing_rate, ChannelRates, CoherenceRates,
    DepolarizationRates, DephasingRate,
};
pub use sweet::{find_sweet_spots, ScanPoint, SweetSpot, SweetSpotGrid, SweetSpotKind, SweetSpotReport};

/// Noise environment. Amplitudes in flux quanta, `omega_ir` in GHz (ordinary frequency),
/// `t_m` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub a_dc: f64,
    pub a_ac: f64,
    pub tan_delta_c: f64,
    pub temperature: f64,
    pub omega_ir: f64,
    pub t_m: f64,
    pub excitation_form: ExcitationForm,
}

/// How the excitation rate samples the bath spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationForm {
    /// `S(k Omega - eps01)` with `eps01` on the natural branch.
    #[default]
    Literal,
    /// `S(-(k Omega + eps01))`: the reverse of relaxation channel `k`.
    DetailedBalance,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { a_dc: 7.5e-6, a_ac: 6e-6, tan_delta_c: 2.8e-6, temperature: 0.085, omega_ir: 1e-9, t_m: 1e-5, excitation_form: ExcitationForm::Literal }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_dc", self.a_dc),
            ("a_ac", self.a_ac),
            ("tan_delta_c", self.tan_delta_c),
            ("temperature", self.temperature),
            ("omega_ir", self.omega_ir),
            ("t_m", self.t_m),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("noise.{name} must be finite and >= 0 (got {v})")));
            }
        }
        if !(self.omega_ir > 0.0 && self.t_m > 0.0) {
            return Err(Error::invalid("noise.omega_ir and noise.t_m must be positive"));
        }
        if self.ir_product() >= 1.0 {
            return Err(Error::invalid(format!(
                "omega_ir * t_m = {:.3e} (angular) must be < 1; lower t_m or omega_ir",
                self.ir_product()
            )));
        }
        Ok(())
    }

    /// Angular infrared cutoff times measurement time.
    pub fn ir_product(&self) -> f64 {
        ghz_to_rad_per_s(self.omega_ir) * self.t_m
    }

    /// `sqrt(|ln(omega_ir t_m)|)`.
    pub fn ir_factor(&self) -> f64 {
        self.ir_product().ln().abs().sqrt()
    }
}

/// 1/f density `2 pi A^2 / |omega|` in Phi_0^2 s for angular frequency `omega` (rad/s).
fn one_over_f(amplitude: f64, omega: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::InfraredDivergence);
    }
    Ok(std::f64::consts::TAU * amplitude * amplitude / omega.abs())
}

/// DC-flux noise density (Phi_0^2 s) at frequency `omega` GHz.
pub fn s_dc(omega: f64, noise: &NoiseModel) -> Result<f64> {
    one_over_f(noise.a_dc, ghz_to_rad_per_s(omega))
}

/// Drive-amplitude noise density (Phi_0^2 s) at frequency `omega` GHz.
pub fn s_ac(omega: f64, noise: &NoiseModel) -> Result<f64> {
    one_over_f(noise.a_ac, ghz_to_rad_per_s(omega))
}

/// Reduced density `S (2 pi / Phi_0)^2`, rad^2 s.
pub fn reduced(s: f64) -> f64 {
    s * std::f64::consts::TAU.powi(2)
}

/// Dielectric-loss density in 1/s at frequency `omega` GHz. Negative frequencies carry the
/// Boltzmann-suppressed absorption branch.
pub fn s_diel(omega: f64, params: &CircuitParams, noise: &NoiseModel) -> f64 {
    let w = ghz_to_rad_per_s(omega);
    if w == 0.0 {
        return 0.0;
    }
    let bracket = if noise.temperature == 0.0 {
        if w > 0.0 {
            2.0
        } else {
            0.0
        }
    } else {
        let two_x = HBAR * w.abs() / (K_B * noise.temperature);
        if w > 0.0 {
            -2.0 / (-two_x).exp_m1()
        } else {
            2.0 / two_x.exp_m1()
        }
    };
    w * w * noise.tan_delta_c / (8.0 * ghz_to_rad_per_s(params.e_c)) * bracket
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_over_f_properties() {
        let n = NoiseModel::default();
        assert_eq!(s_dc(0.3, &n).unwrap(), s_dc(-0.3, &n).unwrap());
        assert!((s_dc(0.6, &n).unwrap() - 0.5 * s_dc(0.3, &n).unwrap()).abs() < 1e-35);
        assert!((s_dc(1.0, &n).unwrap() - 5.625e-20).abs() < 1e-32);
        assert!(matches!(s_ac(0.0, &n), Err(Error::InfraredDivergence)));
    }

    #[test]
    fn dielectric_detailed_balance() {
        let p = CircuitParams::device();
        for &t in &[0.02, 0.085, 0.3] {
            let n = NoiseModel { temperature: t, ..Default::default() };
            for &w in &[0.1, 0.72, 3.0] {
                let ratio = s_diel(-w, &p, &n) / s_diel(w, &p, &n);
                let expect = (-HBAR * ghz_to_rad_per_s(w) / (K_B * t)).exp();
                assert!((ratio / expect - 1.0).abs() < 1e-12, "{t} {w}");
            }
        }
        let cold = NoiseModel { temperature: 0.0, ..Default::default() };
        let w = 1.0;
        let expect = ghz_to_rad_per_s(w).powi(2) * 2.8e-6 / (8.0 * ghz_to_rad_per_s(1.17)) * 2.0;
        assert!((s_diel(w, &p, &cold) / expect - 1.0).abs() < 1e-14);
        assert_eq!(s_diel(-w, &p, &cold), 0.0);
        assert_eq!(s_diel(0.0, &p, &cold), 0.0);
    }

    #[test]
    fn dielectric_pinned_at_half_flux_transition() {
        // omega_01 at half flux for the reference circuit
        let v = s_diel(0.7220169975783, &CircuitParams::device(), &NoiseModel::default());
        let w = ghz_to_rad_per_s(0.7220169975783);
        let x = HBAR * w / (2.0 * K_B * 0.085);
        let direct = w * w * 2.8e-6 / (8.0 * ghz_to_rad_per_s(1.17)) * (1.0 / x.tanh() + 1.0);
        assert!((v / direct - 1.0).abs() < 1e-13);
        assert!((v / 5853.362144999068 - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::default().validate().is_ok());
        assert!((NoiseModel::default().ir_factor() - 3.11).abs() < 0.01);
        let bad = NoiseModel { t_m: 10.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let neg = NoiseModel { a_dc: -1.0, ..Default::default() };
        assert!(neg.validate().is_err());
    }
}
