//! Floquet (Sambe-space) solution of the flux-modulated fluxonium.
//!
//! Conventions: the drive is `Phi_ext(t) = phi_dc + xi cos(Omega t)` and a Floquet state is
//! `|Phi(t)> = sum_n exp(-i n Omega t) |phi^(n)>`, so harmonic `n` carries energy
//! `eps + n Omega`. Fourier blocks are stored in the static eigenbasis of the retained levels.

pub mod monodromy;
pub mod sambe;
pub mod tracking;

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{diagonalize_static, CircuitParams, FluxBias, StaticSpectrum};
use crate::error::{Error, Result};
use crate::units::fold_to_zone;

pub use monodromy::{monodromy_oracle, monodromy_from_spectrum, MonodromyResult};
pub use sambe::{build_sambe, sambe_matrix, SambeMatrix};
pub use tracking::{match_states, track_states, StateMatch, TrackingReport, TRACKING_THRESHOLD};

/// Flux-modulation parameters: bias, amplitude (Phi_0) and frequency (GHz).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub bias: FluxBias,
    pub xi: f64,
    pub omega: f64,
}

impl DriveParams {
    pub fn new(phi_dc: f64, xi: f64, omega: f64) -> Self {
        DriveParams { bias: FluxBias::new(phi_dc), xi, omega }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::invalid(format!("drive amplitude xi must be >= 0 (got {})", self.xi)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid(format!("drive frequency must be > 0 (got {})", self.omega)));
        }
        if !self.bias.phi_dc.is_finite() {
            return Err(Error::invalid("flux bias must be finite"));
        }
        Ok(())
    }

    /// Drive period in ns.
    pub fn period(&self) -> f64 {
        1.0 / self.omega
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_phi(mut self, phi_dc: f64) -> Self {
        self.bias = FluxBias::new(phi_dc);
        self
    }
}

/// Truncation of the Sambe problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SambeConfig {
    /// Fluxonium levels kept in the drive model.
    pub n_levels: usize,
    /// Fourier indices run over `[-sideband_cutoff, sideband_cutoff]`.
    pub sideband_cutoff: usize,
    /// Re-solve with `sideband_cutoff + 2` and warn if labelled quasienergies move by more than
    /// [`CONVERGENCE_TOL`].
    pub check_convergence: bool,
}

impl Default for SambeConfig {
    fn default() -> Self {
        SambeConfig { n_levels: 5, sideband_cutoff: 20, check_convergence: true }
    }
}

impl SambeConfig {
    pub fn new(n_levels: usize, sideband_cutoff: usize) -> Self {
        SambeConfig { n_levels, sideband_cutoff, check_convergence: true }
    }

    pub fn unchecked(mut self) -> Self {
        self.check_convergence = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 {
            return Err(Error::invalid(format!("Sambe n_levels must be >= 2 (got {})", self.n_levels)));
        }
        if self.sideband_cutoff < 1 {
            return Err(Error::invalid("sideband_cutoff must be >= 1"));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        2 * self.sideband_cutoff + 1
    }
}

/// Quasienergy change (GHz) tolerated when the sideband cutoff grows by two.
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Fourier-block weight in the two outermost blocks above which a state is reported as
/// touching the truncation edge.
pub const EDGE_WEIGHT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolveWarning {
    /// Increasing the cutoff by two moved a labelled quasienergy by `delta` GHz.
    NotConverged { delta: f64 },
    /// State carries `weight` in the outermost Fourier blocks.
    EdgeOfWindow { state: usize, weight: f64 },
    /// No Sambe eigenvector had more than half its weight on the static state at n = 0 and
    /// adiabatic continuation from the undriven problem failed.
    AmbiguousLabel { state: usize, overlap: f64 },
}

/// Quasienergies and Fourier blocks of the lowest Floquet branches.
#[derive(Clone, Debug)]
pub struct FloquetSolution {
    /// Folded to (-Omega/2, Omega/2], GHz.
    pub quasienergies: Vec<f64>,
    /// Sambe eigenvalue of the representative copy (weight centroid nearest n = 0), GHz.
    pub unfolded: Vec<f64>,
    /// `fourier_blocks[state][n + cutoff]`, vectors in the static eigenbasis.
    pub fourier_blocks: Vec<Vec<DVector<Complex64>>>,
    /// Static level each branch was attached to when it was solved.
    pub labels: Vec<usize>,
    /// Weight of the branch on its static level in the n = 0 block.
    pub label_overlaps: Vec<f64>,
    pub drive: DriveParams,
    pub config: SambeConfig,
    pub spectrum: Arc<StaticSpectrum>,
    pub warnings: Vec<SolveWarning>,
    pub convergence_delta: Option<f64>,
}

impl FloquetSolution {
    pub fn n_states(&self) -> usize {
        self.fourier_blocks.len()
    }

    pub fn cutoff(&self) -> i64 {
        self.config.sideband_cutoff as i64
    }

    pub fn omega(&self) -> f64 {
        self.drive.omega
    }

    pub fn block(&self, state: usize, n: i64) -> Option<&DVector<Complex64>> {
        let c = self.cutoff();
        if n < -c || n > c {
            return None;
        }
        self.fourier_blocks.get(state).map(|b| &b[(n + c) as usize])
    }

    /// `<phi^(n)|phi^(n)>` for one state.
    pub fn sideband_weight(&self, state: usize, n: i64) -> f64 {
        self.block(state, n).map(|v| v.norm_squared()).unwrap_or(0.0)
    }

    pub fn total_weight(&self, state: usize) -> f64 {
        self.fourier_blocks[state].iter().map(|v| v.norm_squared()).sum()
    }

    /// Unfolded quasienergy difference `eps_b - eps_a` of the representatives. Consistent with
    /// the stored Fourier blocks, so sums over sidebands are invariant under copy choice.
    pub fn eps_diff(&self, a: usize, b: usize) -> f64 {
        self.unfolded[b] - self.unfolded[a]
    }

    /// `eps_01` on the natural branch.
    pub fn eps01(&self) -> f64 {
        self.eps_diff(0, 1)
    }

    pub fn eps01_folded(&self) -> f64 {
        fold_to_zone(self.eps01(), self.omega())
    }

    /// `eps_01 + k Omega` nearest the static 0-1 splitting.
    pub fn eps01_nearest_static(&self) -> f64 {
        let e01 = self.spectrum.transition(0, 1);
        e01 + fold_to_zone(self.eps01() - e01, self.omega())
    }

    pub fn is_converged(&self) -> bool {
        !self.warnings.iter().any(|w| matches!(w, SolveWarning::NotConverged { .. }))
    }

    /// Shifts the representative of `state` by `k` copies: blocks move `n -> n - k` and the
    /// quasienergy rises by `k Omega`. Weight pushed out of the window is dropped and the
    /// state renormalized.
    pub(crate) fn shift_copy(&mut self, state: usize, k: i64) {
        if k == 0 {
            return;
        }
        let c = self.cutoff();
        let old = self.fourier_blocks[state].clone();
        let zero = DVector::zeros(old[0].len());
        let mut norm = 0.0;
        for n in -c..=c {
            let src = n + k;
            let v = if src >= -c && src <= c { old[(src + c) as usize].clone() } else { zero.clone() };
            norm += v.norm_squared();
            self.fourier_blocks[state][(n + c) as usize] = v;
        }
        let s = 1.0 / norm.sqrt();
        for v in self.fourier_blocks[state].iter_mut() {
            *v *= Complex64::new(s, 0.0);
        }
        self.unfolded[state] += k as f64 * self.omega();
    }

    pub(crate) fn permute(&mut self, order: &[usize]) {
        let pick = |v: &Vec<f64>| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        self.quasienergies = pick(&self.quasienergies);
        self.unfolded = pick(&self.unfolded);
        self.label_overlaps = pick(&self.label_overlaps);
        self.labels = order.iter().map(|&i| self.labels[i]).collect();
        self.fourier_blocks = order.iter().map(|&i| self.fourier_blocks[i].clone()).collect();
    }
}

/// Time-averaged spectral function: `(eps + n Omega, <phi^(n)|phi^(n)>)` per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    pub peaks: Vec<Vec<(f64, f64)>>,
}

impl SpectralFunction {
    pub fn total(&self, state: usize) -> f64 {
        self.peaks[state].iter().map(|p| p.1).sum()
    }
}

pub fn spectral_function(sol: &FloquetSolution) -> SpectralFunction {
    let c = sol.cutoff();
    let peaks = (0..sol.n_states())
        .map(|s| {
            (-c..=c)
                .map(|n| (sol.unfolded[s] + n as f64 * sol.omega(), sol.sideband_weight(s, n)))
                .collect()
        })
        .collect();
    SpectralFunction { peaks }
}

/// Static spectrum with enough retained levels for `config`.
pub fn static_for(params: &CircuitParams, bias: FluxBias, config: &SambeConfig) -> Result<StaticSpectrum> {
    let p = params.with_levels(params.n_levels.max(config.n_levels));
    diagonalize_static(&p, bias)
}

pub fn solve_floquet(params: &CircuitParams, drive: &DriveParams, config: &SambeConfig) -> Result<FloquetSolution> {
    drive.validate()?;
    let spectrum = Arc::new(static_for(params, drive.bias, config)?);
    solve_with_spectrum(&spectrum, drive, config)
}

/// Solves with a precomputed static spectrum (shared across sweep workers).
pub fn solve_with_spectrum(
    spectrum: &Arc<StaticSpectrum>,
    drive: &DriveParams,
    config: &SambeConfig,
) -> Result<FloquetSolution> {
    drive.validate()?;
    let mut sol = sambe::solve_inner(spectrum, drive, config, true)?;
    if config.check_convergence {
        let wider = SambeConfig { sideband_cutoff: config.sideband_cutoff + 2, check_convergence: false, ..*config };
        let other = sambe::solve_inner(spectrum, drive, &wider, true)?;
        let delta = (0..sol.n_states())
            .map(|s| crate::units::zone_distance(sol.quasienergies[s], other.quasienergies[s], drive.omega))
            .fold(0.0, f64::max);
        sol.convergence_delta = Some(delta);
        if delta >= CONVERGENCE_TOL {
            sol.warnings.push(SolveWarning::NotConverged { delta });
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::monodromy::max_zone_mismatch;

    fn params() -> CircuitParams {
        CircuitParams::device()
    }

    #[test]
    fn sambe_matches_monodromy() {
        let cfg = SambeConfig::new(5, 15);
        for &(phi, xi, om) in &[(0.451, 0.0856, 0.7743), (0.5, 0.05, 0.4), (0.451, 0.1, 0.2)] {
            let d = DriveParams::new(phi, xi, om);
            let sol = solve_floquet(&params(), &d, &cfg).unwrap();
            let mono = monodromy_oracle(&params(), &d, &cfg, None).unwrap();
            let err = max_zone_mismatch(&sol.quasienergies, &mono.quasienergies, om);
            assert!(err < 1e-9 * om, "{phi} {xi} {om}: {err}");
        }
    }

    #[test]
    fn double_sweet_spot_reference_value() {
        let d = DriveParams::new(0.451, 0.08558286, 0.77432115);
        let sol = solve_floquet(&params(), &d, &SambeConfig::new(5, 15)).unwrap();
        assert!((sol.eps01_nearest_static() - 1.18565535).abs() < 1e-6, "{}", sol.eps01());
        assert!(sol.is_converged());
    }

    #[test]
    fn spectral_weights_sum_to_one() {
        let d = DriveParams::new(0.5, 0.08, 0.5);
        let sol = solve_floquet(&params(), &d, &SambeConfig::default()).unwrap();
        let sf = spectral_function(&sol);
        for s in 0..sol.n_states() {
            assert!((sf.total(s) - 1.0).abs() < 1e-12);
        }
        assert!(sol.sideband_weight(0, 1) > 1e-4);
        assert!(sol.block(0, 21).is_none());
    }

    #[test]
    fn rejects_bad_drive() {
        let cfg = SambeConfig::default();
        assert!(solve_floquet(&params(), &DriveParams::new(0.5, -0.1, 0.5), &cfg).is_err());
        assert!(solve_floquet(&params(), &DriveParams::new(0.5, 0.1, 0.0), &cfg).is_err());
    }

    #[test]
    fn copy_shift_moves_energy_by_omega() {
        let d = DriveParams::new(0.451, 0.05, 0.3);
        let mut sol = solve_floquet(&params(), &d, &SambeConfig::new(4, 10)).unwrap();
        let e = sol.unfolded[1];
        let w = sol.sideband_weight(1, 0);
        sol.shift_copy(1, 2);
        assert!((sol.unfolded[1] - e - 0.6).abs() < 1e-12);
        assert!((sol.sideband_weight(1, -2) - w).abs() < 1e-10);
    }
}
