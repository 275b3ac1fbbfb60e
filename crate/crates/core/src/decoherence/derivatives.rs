use serde::{Deserialize, Serialize};

use super::FourierMatrixElements;
use crate::circuit::CircuitParams;
use crate::error::Result;
use crate::floquet::{match_states, solve_floquet, DriveParams, FloquetSolution, SambeConfig, TRACKING_THRESHOLD};
use crate::units::TWO_PI;

/// `(d eps01/d phi_dc, d eps01/d xi)` in GHz per flux quantum from the Hellmann-Feynman
/// relations. The drive enters as `E_L/2 (phi - 2 pi phi_ext(t))^2`, so the signs are
/// opposite to a `+E_L phi dPhi` perturbation.
pub fn derivatives_from_elements(elems: &FourierMatrixElements, e_l: f64) -> (f64, f64) {
    let d_phi = -TWO_PI * e_l * elems.diagonal_difference(0).re;
    let d_xi = -0.5 * TWO_PI * e_l * (elems.diagonal_difference(1) + elems.diagonal_difference(-1)).re;
    (d_phi, d_xi)
}

/// Step control for the finite-difference check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiniteDifference {
    pub enabled: bool,
    /// Flux step, Phi_0.
    pub step_phi: f64,
    /// Amplitude step, Phi_0.
    pub step_xi: f64,
}

impl Default for FiniteDifference {
    fn default() -> Self {
        FiniteDifference { enabled: true, step_phi: 1e-4, step_xi: 1e-4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasienergyDerivatives {
    pub d_phi: f64,
    pub d_xi: f64,
    /// Richardson-extrapolated five-point differences; `None` when the stencil crossed a
    /// tracking break or was not requested.
    pub d_phi_fd: Option<f64>,
    pub d_xi_fd: Option<f64>,
    /// `|D(h/2) - D(h)| / 15`.
    pub fd_error_phi: Option<f64>,
    pub fd_error_xi: Option<f64>,
}

impl QuasienergyDerivatives {
    pub fn from_elements(d_phi: f64, d_xi: f64) -> Self {
        QuasienergyDerivatives { d_phi, d_xi, d_phi_fd: None, d_xi_fd: None, fd_error_phi: None, fd_error_xi: None }
    }

    /// Matrix-element values; finite differences are a cross-check only.
    pub fn d_phi_best(&self) -> f64 {
        self.d_phi
    }

    pub fn d_xi_best(&self) -> f64 {
        self.d_xi
    }

    pub fn relative_mismatch(&self) -> (Option<f64>, Option<f64>) {
        let rel = |a: f64, b: Option<f64>| b.map(|b| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
        (rel(self.d_phi, self.d_phi_fd), rel(self.d_xi, self.d_xi_fd))
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Flux,
    Amplitude,
}

/// `eps01` at a displaced drive, continued from the centre solution; `None` on a tracking
/// break.
fn eps01_at(centre: &FloquetSolution, params: &CircuitParams, drive: &DriveParams, cfg: &SambeConfig) -> Result<Option<f64>> {
    let other = solve_floquet(params, drive, cfg)?;
    let m = match_states(centre, &other)?;
    if m.fidelity[0] < TRACKING_THRESHOLD || m.fidelity[1] < TRACKING_THRESHOLD {
        return Ok(None);
    }
    let om = other.omega();
    let e0 = other.unfolded[m.target[0]] + m.shift[0] as f64 * om;
    let e1 = other.unfolded[m.target[1]] + m.shift[1] as f64 * om;
    Ok(Some(e1 - e0))
}

fn five_point(centre: &FloquetSolution, params: &CircuitParams, axis: Axis, h: f64, cfg: &SambeConfig) -> Result<Option<f64>> {
    let d = centre.drive;
    let mut vals = [0.0; 4];
    for (slot, &m) in [-2.0, -1.0, 1.0, 2.0].iter().enumerate() {
        let drive = match axis {
            Axis::Flux => d.with_phi(d.bias.phi_dc + m * h),
            // eps01 is even in xi
            Axis::Amplitude => d.with_xi((d.xi + m * h).abs()),
        };
        match eps01_at(centre, params, &drive, cfg)? {
            Some(v) => vals[slot] = v,
            None => return Ok(None),
        }
    }
    Ok(Some((vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h)))
}

fn richardson(centre: &FloquetSolution, params: &CircuitParams, axis: Axis, h: f64, cfg: &SambeConfig) -> Result<Option<(f64, f64)>> {
    let coarse = five_point(centre, params, axis, h, cfg)?;
    let fine = five_point(centre, params, axis, 0.5 * h, cfg)?;
    Ok(match (coarse, fine) {
        (Some(c), Some(f)) => Some((f + (f - c) / 15.0, (f - c).abs() / 15.0)),
        _ => None,
    })
}

/// Matrix-element derivatives plus, if enabled, step-controlled finite differences of the
/// tracked `eps01`.
pub fn quasienergy_derivatives(
    sol: &FloquetSolution,
    elems: &FourierMatrixElements,
    params: &CircuitParams,
    fd: &FiniteDifference,
) -> Result<QuasienergyDerivatives> {
    let (d_phi, d_xi) = derivatives_from_elements(elems, params.e_l);
    let mut out = QuasienergyDerivatives::from_elements(d_phi, d_xi);
    if !fd.enabled {
        return Ok(out);
    }
    let cfg = sol.config.unchecked();
    let p = params.with_levels(params.n_levels.max(cfg.n_levels));
    if let Some((v, e)) = richardson(sol, &p, Axis::Flux, fd.step_phi, &cfg)? {
        out.d_phi_fd = Some(v);
        out.fd_error_phi = Some(e);
    }
    if let Some((v, e)) = richardson(sol, &p, Axis::Amplitude, fd.step_xi, &cfg)? {
        out.d_xi_fd = Some(v);
        out.fd_error_xi = Some(e);
    }
    Ok(out)
}
