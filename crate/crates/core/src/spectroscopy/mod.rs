//! Two-tone spectroscopy and Ramsey signals of the driven qubit.
//!
//! Spectroscopy uses a rate-equation stand-in for the Floquet master equation: the probe
//! drives golden-rule transitions at every sideband `eps_01 + k Omega` with strength set by
//! the charge-operator Fourier elements, and the excited population is the balance of those
//! rates against the bath rates `gamma_up`, `gamma_down`.

mod ramsey;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::decoherence::{coherence_rates, CoherenceRates, FourierMatrixElements, NoiseModel};
use crate::error::{Error, Result};
use crate::floquet::{solve_floquet, DriveParams, FloquetSolution, SambeConfig};
use crate::units::TWO_PI;

pub use ramsey::{
    extract_t2r, synth_ramsey_components, synth_ramsey_signal, RamseyConfig, RamseySignal, RamseyWindow, DEFAULT_DETUNING,
    T2REstimate,
};

/// Peaks weaker than this fraction of the strongest are not counted.
pub const PEAK_THRESHOLD: f64 = 0.01;

/// Weak spectroscopy tone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeParams {
    /// Probe frequency, GHz.
    pub omega_p: f64,
    /// Rabi amplitude of the probe on the charge operator, GHz.
    pub rabi: f64,
    /// Full width at half maximum of the phenomenological Lorentzian, GHz.
    pub linewidth: f64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams { omega_p: 1.0, rabi: 1e-3, linewidth: 0.005 }
    }
}

impl ProbeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rabi.is_finite() && self.rabi >= 0.0) {
            return Err(Error::invalid(format!("probe rabi must be non-negative (got {})", self.rabi)));
        }
        if !(self.linewidth.is_finite() && self.linewidth > 0.0) {
            return Err(Error::invalid(format!("probe linewidth must be positive (got {})", self.linewidth)));
        }
        if !self.omega_p.is_finite() {
            return Err(Error::invalid("probe frequency must be finite"));
        }
        Ok(())
    }

    pub fn at(mut self, omega_p: f64) -> Self {
        self.omega_p = omega_p;
        self
    }

    /// Unit-area Lorentzian, 1/GHz.
    pub fn lorentzian(&self, detuning: f64) -> f64 {
        let hw = 0.5 * self.linewidth;
        hw / std::f64::consts::PI / (detuning * detuning + hw * hw)
    }
}

/// Sideband transition `0 -> 1` at `eps_01 + k Omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidebandLine {
    pub k: i64,
    /// Resonance frequency, GHz.
    pub center: f64,
    /// `|n_01^(k)|^2`.
    pub strength: f64,
}

/// Probe-induced transition rates, 1/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRates {
    pub probe: ProbeParams,
    pub lines: Vec<SidebandLine>,
    /// `rates[i]` belongs to `lines[i]`.
    pub rates: Vec<f64>,
}

impl ProbeRates {
    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Lines at positive frequency whose on-resonance rate exceeds `threshold` times the
    /// strongest one.
    pub fn count_peaks(&self, threshold: f64) -> usize {
        count_lines(&self.lines, threshold)
    }
}

/// Number of positive-frequency lines with strength above `threshold` of the strongest.
pub fn count_lines(lines: &[SidebandLine], threshold: f64) -> usize {
    let visible: Vec<&SidebandLine> = lines.iter().filter(|l| l.center > 0.0).collect();
    let max = visible.iter().map(|l| l.strength).fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    visible.iter().filter(|l| l.strength >= threshold * max).count()
}

/// Sideband lines of the natural 0-1 branch from precomputed charge elements.
pub fn sideband_lines(charge: &FourierMatrixElements, sol: &FloquetSolution) -> Vec<SidebandLine> {
    let omega = sol.omega();
    let eps01 = sol.eps01_nearest_static();
    let d = ((eps01 - sol.eps01()) / omega).round() as i64;
    charge
        .k_range()
        .map(|j| {
            let k = j - d;
            SidebandLine { k, center: eps01 + k as f64 * omega, strength: charge.at(0, 1, j).norm_sqr() }
        })
        .filter(|l| l.strength > 0.0)
        .collect()
}

/// Golden-rule rates `(2 pi)^2 rabi^2 |n_01^(k)|^2 L(omega_p - eps_01 - k Omega)`, with
/// frequencies in GHz and the result in 1/s.
pub fn rates_from_lines(lines: &[SidebandLine], probe: &ProbeParams) -> ProbeRates {
    let scale = TWO_PI * TWO_PI * probe.rabi * probe.rabi * 1e9;
    let rates = lines.iter().map(|l| scale * l.strength * probe.lorentzian(probe.omega_p - l.center)).collect();
    ProbeRates { probe: *probe, lines: lines.to_vec(), rates }
}

/// Charge-operator Fourier elements of branches 0 and 1.
pub fn charge_elements(sol: &FloquetSolution) -> Result<FourierMatrixElements> {
    let n: DMatrix<Complex64> = sol.spectrum.n_elements.clone();
    FourierMatrixElements::for_operator(sol, &n)
}

pub fn probe_transition_rates(sol: &FloquetSolution, probe: &ProbeParams) -> Result<ProbeRates> {
    probe.validate()?;
    let charge = charge_elements(sol)?;
    Ok(rates_from_lines(&sideband_lines(&charge, sol), probe))
}

/// Excited population of the two-state balance
/// `P1 = (gamma_up + sum Gamma_k) / (gamma_up + gamma_down + 2 sum Gamma_k)`.
pub fn steady_state_population(rates: &ProbeRates, coherence: &CoherenceRates) -> Result<f64> {
    population(rates.total(), coherence.gamma_up, coherence.gamma_down)
}

fn population(probe_total: f64, up: f64, down: f64) -> Result<f64> {
    if !(probe_total.is_finite() && up.is_finite() && down.is_finite()) {
        return Err(Error::invalid("transition rates must be finite"));
    }
    let denom = up + down + 2.0 * probe_total;
    if denom <= 0.0 {
        return Err(Error::UndefinedSteadyState);
    }
    Ok((up + probe_total) / denom)
}

/// Swept axis of a spectroscopy map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapAxis {
    Flux { phi_dc: Vec<f64>, xi: f64, omega: f64 },
    Amplitude { xi: Vec<f64>, phi_dc: f64, omega: f64 },
}

impl MapAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            MapAxis::Flux { phi_dc, .. } => phi_dc,
            MapAxis::Amplitude { xi, .. } => xi,
        }
    }

    pub fn drive(&self, i: usize) -> DriveParams {
        match self {
            MapAxis::Flux { phi_dc, xi, omega } => DriveParams::new(phi_dc[i], *xi, *omega),
            MapAxis::Amplitude { xi, phi_dc, omega } => DriveParams::new(*phi_dc, xi[i], *omega),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyGrid {
    pub axis: MapAxis,
    /// Probe frequencies, GHz, ascending.
    pub probe_freqs: Vec<f64>,
}

/// Excited population over (axis value, probe frequency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyMap {
    pub axis: MapAxis,
    pub probe_freqs: Vec<f64>,
    /// `p1[i][j]` at axis point `i`, probe `j`; NaN in masked columns.
    pub p1: Vec<Vec<f64>>,
    /// Failure reason per axis point.
    pub mask: Vec<Option<String>>,
    /// Sideband lines `eps_01 + k Omega` per axis point, for overlays.
    pub overlays: Vec<Vec<SidebandLine>>,
}

impl SpectroscopyMap {
    /// Probe frequency of the strongest response in column `i`.
    pub fn ridge_frequency(&self, i: usize) -> Option<f64> {
        if self.mask[i].is_some() {
            return None;
        }
        let col = &self.p1[i];
        let j = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b]))?;
        Some(self.probe_freqs[j])
    }

    /// Local maxima in column `i` rising above the column minimum by more than `threshold`
    /// of the largest rise.
    pub fn ridge_count(&self, i: usize, threshold: f64) -> usize {
        if self.mask[i].is_some() {
            return 0;
        }
        let col = &self.p1[i];
        let base = col.iter().copied().fold(f64::INFINITY, f64::min);
        let top = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = top - base;
        if !(span > 0.0) {
            return 0;
        }
        (1..col.len().saturating_sub(1))
            .filter(|&j| col[j] > col[j - 1] && col[j] >= col[j + 1] && col[j] - base > threshold * span)
            .count()
    }

    /// Axis index whose ridge sits at the lowest probe frequency.
    pub fn ridge_minimum(&self) -> Option<usize> {
        (0..self.p1.len())
            .filter_map(|i| self.ridge_frequency(i).map(|f| (i, f)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

fn map_column(
    params: &CircuitParams,
    noise: &NoiseModel,
    probe: &ProbeParams,
    drive: &DriveParams,
    freqs: &[f64],
    config: &SambeConfig,
) -> Result<(Vec<f64>, Vec<SidebandLine>)> {
    let sol = solve_floquet(params, drive, config)?;
    let phi = FourierMatrixElements::from_solution(&sol)?;
    let bath = coherence_rates(&phi, &sol, noise, params, None)?;
    let lines = sideband_lines(&charge_elements(&sol)?, &sol);
    let col = freqs
        .iter()
        .map(|&f| {
            let rates = rates_from_lines(&lines, &probe.at(f));
            steady_state_population(&rates, &bath)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((col, lines))
}

/// Steady-state excited population over the grid, one Floquet solve per axis point.
/// Columns whose solve or rates fail are masked with the reason.
pub fn spectroscopy_map(
    params: &CircuitParams,
    noise: &NoiseModel,
    probe: &ProbeParams,
    grid: &SpectroscopyGrid,
    config: &SambeConfig,
) -> Result<SpectroscopyMap> {
    probe.validate()?;
    noise.validate()?;
    if grid.axis.values().is_empty() || grid.probe_freqs.is_empty() {
        return Err(Error::invalid("spectroscopy grid is empty"));
    }
    let n = grid.axis.values().len();
    let columns: Vec<Result<(Vec<f64>, Vec<SidebandLine>)>> = (0..n)
        .into_par_iter()
        .map(|i| map_column(params, noise, probe, &grid.axis.drive(i), &grid.probe_freqs, config))
        .collect();
    let mut p1 = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut overlays = Vec::with_capacity(n);
    for col in columns {
        match col {
            Ok((values, lines)) => {
                p1.push(values);
                mask.push(None);
                overlays.push(lines);
            }
            Err(e) => {
                p1.push(vec![f64::NAN; grid.probe_freqs.len()]);
                mask.push(Some(e.to_string()));
                overlays.push(Vec::new());
            }
        }
    }
    Ok(SpectroscopyMap { axis: grid.axis.clone(), probe_freqs: grid.probe_freqs.clone(), p1, mask, overlays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::coherence;

    fn solve(xi: f64) -> FloquetSolution {
        solve_floquet(&CircuitParams::device(), &DriveParams::new(0.45, xi, 0.4), &SambeConfig::new(5, 12)).unwrap()
    }

    #[test]
    fn undriven_has_one_line_at_the_qubit_frequency() {
        let sol = solve(0.0);
        let w01 = sol.spectrum.transition(0, 1);
        let probe = ProbeParams::default().at(w01);
        let rates = probe_transition_rates(&sol, &probe).unwrap();
        assert_eq!(rates.count_peaks(PEAK_THRESHOLD), 1);
        let (i, _) = rates.rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!((rates.lines[i].center - w01).abs() < 1e-9);
        let far = probe_transition_rates(&sol, &probe.at(w01 + 3.0)).unwrap();
        assert!(far.rates.iter().all(|r| *r < 1e-6 * rates.rates[i]));
    }

    #[test]
    fn lines_sit_on_the_sideband_ladder() {
        let sol = solve(0.05);
        let rates = probe_transition_rates(&sol, &ProbeParams::default()).unwrap();
        let e = sol.eps01_nearest_static();
        for l in &rates.lines {
            assert!((l.center - (e + l.k as f64 * 0.4)).abs() < 1e-12);
        }
        // copy shifts leave the lines unchanged
        let mut shifted = sol.clone();
        shifted.shift_copy(1, 2);
        let again = probe_transition_rates(&shifted, &ProbeParams::default()).unwrap();
        for a in rates.lines.iter().filter(|l| l.strength > 1e-8) {
            let b = again.lines.iter().find(|l| l.k == a.k).unwrap();
            assert!((a.center - b.center).abs() < 1e-9 && (a.strength - b.strength).abs() < 1e-10);
        }
        assert!(rates.count_peaks(PEAK_THRESHOLD) > 1);
    }

    #[test]
    fn population_limits() {
        let (_, mut bath) =
            coherence(&CircuitParams::device(), &DriveParams::new(0.45, 0.0, 0.4), &SambeConfig::new(5, 8), &NoiseModel::default())
                .unwrap();
        let sol = solve(0.0);
        let w01 = sol.spectrum.transition(0, 1);
        let none = probe_transition_rates(&sol, &ProbeParams { rabi: 0.0, ..ProbeParams::default() }.at(w01)).unwrap();
        let thermal = steady_state_population(&none, &bath).unwrap();
        assert!(thermal > 0.0 && thermal < 0.5);
        let strong = probe_transition_rates(&sol, &ProbeParams { rabi: 1.0, ..ProbeParams::default() }.at(w01)).unwrap();
        assert!((steady_state_population(&strong, &bath).unwrap() - 0.5).abs() < 1e-4);
        bath.gamma_up = 0.0;
        assert_eq!(steady_state_population(&none, &bath).unwrap(), 0.0);
        bath.gamma_down = 0.0;
        assert!(matches!(steady_state_population(&none, &bath), Err(Error::UndefinedSteadyState)));
    }

    #[test]
    fn weak_probe_response_is_linear() {
        let sol = solve(0.0);
        let w01 = sol.spectrum.transition(0, 1);
        let (_, mut bath) =
            coherence(&CircuitParams::device(), &DriveParams::new(0.45, 0.0, 0.4), &SambeConfig::new(5, 8), &NoiseModel::default())
                .unwrap();
        bath.gamma_up = 0.0;
        let p = |rabi: f64| {
            let r = probe_transition_rates(&sol, &ProbeParams { rabi, ..ProbeParams::default() }.at(w01)).unwrap();
            steady_state_population(&r, &bath).unwrap()
        };
        let (a, b) = (p(1e-7), p(1e-7 * 10f64.sqrt()));
        assert!(((b / a) / 10.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn undriven_flux_map_is_symmetric_with_minimum_at_half_flux() {
        let phi: Vec<f64> = (0..9).map(|i| 0.46 + 0.01 * i as f64).collect();
        let freqs: Vec<f64> = (0..601).map(|j| 0.6 + 0.001 * j as f64).collect();
        let grid = SpectroscopyGrid { axis: MapAxis::Flux { phi_dc: phi.clone(), xi: 0.0, omega: 0.4 }, probe_freqs: freqs };
        let map = spectroscopy_map(&CircuitParams::device(), &NoiseModel::default(), &ProbeParams::default(), &grid, &SambeConfig::new(5, 6))
            .unwrap();
        assert!(map.mask.iter().all(Option::is_none));
        assert_eq!(map.ridge_minimum(), Some(4));
        for i in 0..4 {
            for (a, b) in map.p1[i].iter().zip(&map.p1[8 - i]) {
                assert!((a - b).abs() < 1e-6);
            }
            assert_eq!(map.ridge_count(i, PEAK_THRESHOLD), 1);
        }
    }
}
