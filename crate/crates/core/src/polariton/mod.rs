//! Cavity coupling to the sidebands of the 0-3 transition.
//!
//! Three routes to the same couplings: Fourier blocks of the full Floquet solution, the
//! two-level rotating-wave model with a distorted phase factor, and a least-squares fit of
//! the single-excitation manifold to transmission peaks.

mod fit;
mod rwa;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::FloquetSolution;

pub use fit::{
    fit_polariton, manifold_matrix, parse_peak_file, polariton_manifold_eigs, sideband_index, synth_polariton_data,
    PeakPoint, PolaritonFit, FIT_MAX_ITER, M_MAX, M_MIN, N_SIDEBANDS,
};
pub use rwa::{
    rwa_coupling, rwa_from_circuit, rwa_phase_coefficients, Dispersion, PhaseCoefficients, RWAParams, PHASE_TOL,
};

/// Placeholder capacitive coupling, GHz. Not a device value: chosen so that the bare m = 0
/// vacuum Rabi splitting `2 g_cap |<3|n|0>|` is a few tens of MHz near the cavity crossing.
pub const DEFAULT_G_CAP: f64 = 0.1;

/// Readout cavity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityParams {
    /// Cavity frequency, GHz.
    pub omega_c: f64,
    /// Capacitive coupling prefactor of `g_cap n (a + a')`, GHz.
    pub g_cap: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        CavityParams { omega_c: 7.30, g_cap: DEFAULT_G_CAP }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c.is_finite() && self.omega_c > 0.0) {
            return Err(Error::invalid(format!("omega_c must be positive (got {})", self.omega_c)));
        }
        if !(self.g_cap.is_finite() && self.g_cap >= 0.0) {
            return Err(Error::invalid(format!("g_cap must be non-negative (got {})", self.g_cap)));
        }
        Ok(())
    }
}

/// Which Fourier components enter the Floquet dipole coupling of sideband `m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingForm {
    /// `<phi_3^(m)| n |phi_0^(0)>` only.
    #[default]
    SingleHarmonic,
    /// `sum_n <phi_3^(n+m)| n |phi_0^(n)>`, the full component of `<Phi_3(t)|n|Phi_0(t)>`
    /// rotating at `eps_3 - eps_0 + m Omega`.
    Summed,
}

/// Complex coupling of the cavity to sideband `m` of the 0-3 transition, GHz.
pub fn floquet_dipole_coupling(
    sol: &FloquetSolution,
    cavity: &CavityParams,
    m: i64,
    form: CouplingForm,
) -> Result<Complex64> {
    if sol.n_states() < 4 {
        return Err(Error::invalid(format!(
            "the dipole coupling needs states 0 and 3; solution has {} levels",
            sol.n_states()
        )));
    }
    let c = sol.cutoff();
    if m.abs() > c {
        return Err(Error::OutOfWindow { index: m, cutoff: c });
    }
    let n_op = &sol.spectrum.n_elements;
    let dim = sol.n_states();
    let op = n_op.view((0, 0), (dim, dim)).into_owned();
    let element = match form {
        CouplingForm::SingleHarmonic => {
            let three = sol.block(3, m).expect("checked window");
            let zero = sol.block(0, 0).expect("inside window");
            three.dotc(&(&op * zero))
        }
        CouplingForm::Summed => crate::decoherence::operator_fourier(sol, &op, 3, 0, -m),
    };
    Ok(element * cavity.g_cap)
}

/// Fraction of `sum_m |g_m|^2` carried by sidebands with `|m| >= 1`.
pub fn sideband_transfer(couplings: &[(i64, f64)]) -> f64 {
    let total: f64 = couplings.iter().map(|(_, g)| g * g).sum();
    if total == 0.0 {
        return 0.0;
    }
    couplings.iter().filter(|(m, _)| *m != 0).map(|(_, g)| g * g).sum::<f64>() / total
}
