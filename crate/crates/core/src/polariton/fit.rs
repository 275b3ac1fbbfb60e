//! Single-excitation manifold of the cavity and the sidebands m = -2..3 of level 3, and a
//! Levenberg-Marquardt fit of its eigenvalues to transmission peak positions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::CavityParams;
use crate::error::{Error, Result};
use crate::spline::CubicSpline;

pub const M_MIN: i64 = -2;
pub const M_MAX: i64 = 3;
pub const N_SIDEBANDS: usize = (M_MAX - M_MIN + 1) as usize;
pub const FIT_MAX_ITER: usize = 400;

/// Flux points needed near a crossing before its coupling is fitted.
const MIN_CROSSING_POINTS: usize = 5;
/// Half-width of the crossing window, in units of the drive frequency.
const CROSSING_WINDOW: f64 = 0.25;
/// Minimum cavity weight of a branch that shows up as a transmission peak.
const VISIBLE_WEIGHT: f64 = 0.05;
const INITIAL_COUPLINGS: [f64; 4] = [0.01, 0.003, 0.03, 0.001];

pub fn sideband_index(m: i64) -> usize {
    assert!((M_MIN..=M_MAX).contains(&m), "sideband {m} outside the manifold");
    (m - M_MIN) as usize
}

/// One transmission peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakPoint {
    pub phi_dc: f64,
    /// Peak frequency, GHz.
    pub freq: f64,
    /// Uncertainty, GHz; unit weight when absent.
    pub sigma: Option<f64>,
}

/// Fitted couplings and Stark shifts, indexed by `sideband_index(m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolaritonFit {
    pub g_m: Vec<f64>,
    pub delta_m: Vec<f64>,
    /// Root-mean-square of the unweighted frequency residuals, GHz.
    pub residual: f64,
    /// Standard errors; infinite for parameters pinned as unidentifiable.
    #[serde(with = "crate::serde_util::vec_f64")]
    pub g_stderr: Vec<f64>,
    #[serde(with = "crate::serde_util::vec_f64")]
    pub delta_stderr: Vec<f64>,
    /// Whether the data cover crossing `m` well enough to fit it.
    pub identifiable: Vec<bool>,
    pub iterations: usize,
    pub n_points: usize,
}

impl PolaritonFit {
    /// Parameters with every coupling and shift given, for generating synthetic data.
    pub fn from_parameters(g_m: Vec<f64>, delta_m: Vec<f64>) -> Result<Self> {
        if g_m.len() != N_SIDEBANDS || delta_m.len() != N_SIDEBANDS {
            return Err(Error::invalid(format!("need {N_SIDEBANDS} couplings and shifts")));
        }
        Ok(PolaritonFit {
            g_m,
            delta_m,
            residual: 0.0,
            g_stderr: vec![0.0; N_SIDEBANDS],
            delta_stderr: vec![0.0; N_SIDEBANDS],
            identifiable: vec![true; N_SIDEBANDS],
            iterations: 0,
            n_points: 0,
        })
    }

    pub fn g(&self, m: i64) -> f64 {
        self.g_m[sideband_index(m)]
    }

    pub fn delta(&self, m: i64) -> f64 {
        self.delta_m[sideband_index(m)]
    }
}

/// Manifold matrix in the basis `(|c>, |m = -2>, ..., |m = 3>)`.
pub fn manifold_matrix(omega_c: f64, omega3: f64, drive_omega: f64, g_m: &[f64], delta_m: &[f64]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(N_SIDEBANDS + 1, N_SIDEBANDS + 1);
    h[(0, 0)] = omega_c;
    for (i, m) in (M_MIN..=M_MAX).enumerate() {
        h[(i + 1, i + 1)] = omega3 + m as f64 * drive_omega + delta_m[i];
        h[(0, i + 1)] = g_m[i];
        h[(i + 1, 0)] = g_m[i];
    }
    h
}

fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Ascending eigenvalues of the seven-level manifold, GHz.
pub fn polariton_manifold_eigs(cavity: &CavityParams, omega3: f64, drive_omega: f64, fit: &PolaritonFit) -> [f64; 7] {
    let h = manifold_matrix(cavity.omega_c, omega3, drive_omega, &fit.g_m, &fit.delta_m);
    let (values, _) = sorted_eigen(h);
    let mut out = [0.0; 7];
    out.copy_from_slice(&values);
    out
}

/// Visible peaks (branches with cavity weight above 5%) of the manifold at each flux.
pub fn synth_polariton_data(
    cavity: &CavityParams,
    omega3_curve: &CubicSpline,
    drive_omega: f64,
    truth: &PolaritonFit,
    fluxes: &[f64],
) -> Vec<PeakPoint> {
    let mut out = Vec::new();
    for &phi in fluxes {
        let h = manifold_matrix(cavity.omega_c, omega3_curve.eval(phi), drive_omega, &truth.g_m, &truth.delta_m);
        let (values, vectors) = sorted_eigen(h);
        for (j, &freq) in values.iter().enumerate() {
            if vectors[(0, j)].powi(2) >= VISIBLE_WEIGHT {
                out.push(PeakPoint { phi_dc: phi, freq, sigma: None });
            }
        }
    }
    out
}

/// Reads whitespace- or comma-separated columns `phi_dc freq_ghz [sigma_ghz]`; `#` starts a
/// comment.
pub fn parse_peak_file(text: &str) -> Result<Vec<PeakPoint>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let mut fields = Vec::new();
        let mut col = 0;
        for piece in body.split(|c: char| c == ',' || c.is_whitespace()) {
            if !piece.is_empty() {
                let value: f64 = piece.parse().map_err(|_| Error::Config {
                    line: ln + 1,
                    column: col + 1,
                    message: format!("expected a number, found {piece:?}"),
                })?;
                fields.push((col + 1, value));
            }
            col += piece.len() + 1;
        }
        let err = |column: usize, message: String| Error::Config { line: ln + 1, column, message };
        match fields.as_slice() {
            [(_, phi), (_, f)] => out.push(PeakPoint { phi_dc: *phi, freq: *f, sigma: None }),
            [(_, phi), (_, f), (c, s)] => {
                if !(*s > 0.0) {
                    return Err(err(*c, format!("uncertainty must be positive (got {s})")));
                }
                out.push(PeakPoint { phi_dc: *phi, freq: *f, sigma: Some(*s) })
            }
            _ => return Err(err(1, format!("expected 2 or 3 columns, found {}", fields.len()))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config { line: 1, column: 1, message: "no data rows".into() });
    }
    Ok(out)
}

struct Problem<'a> {
    data: &'a [PeakPoint],
    omega3: Vec<f64>,
    omega_c: f64,
    drive_omega: f64,
    /// Sideband indices whose coupling and shift are free.
    free: Vec<usize>,
}

impl Problem<'_> {
    fn unpack(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = vec![0.0; N_SIDEBANDS];
        let mut d = vec![0.0; N_SIDEBANDS];
        for (k, &i) in self.free.iter().enumerate() {
            g[i] = p[2 * k];
            d[i] = p[2 * k + 1];
        }
        (g, d)
    }

    /// Weighted residuals `(f - lambda)/sigma` and their Jacobian with respect to the
    /// model, from Hellmann-Feynman derivatives of the matched eigenvalue.
    fn evaluate(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>, f64) {
        let (g, d) = self.unpack(p);
        let n = self.data.len();
        let mut r = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, p.len());
        let mut sq = 0.0;
        for (row, (pt, &w3)) in self.data.iter().zip(&self.omega3).enumerate() {
            let (values, vectors) = sorted_eigen(manifold_matrix(self.omega_c, w3, self.drive_omega, &g, &d));
            let j = (0..values.len())
                .min_by(|&a, &b| (values[a] - pt.freq).abs().total_cmp(&(values[b] - pt.freq).abs()))
                .unwrap();
            let w = 1.0 / pt.sigma.unwrap_or(1.0);
            let diff = pt.freq - values[j];
            sq += diff * diff;
            r[row] = diff * w;
            let vc = vectors[(0, j)];
            for (k, &i) in self.free.iter().enumerate() {
                let vm = vectors[(i + 1, j)];
                jac[(row, 2 * k)] = 2.0 * vc * vm * w;
                jac[(row, 2 * k + 1)] = vm * vm * w;
            }
        }
        (r, jac, (sq / n as f64).sqrt())
    }
}

struct Outcome {
    p: Vec<f64>,
    cost: f64,
    rms: f64,
    jac: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(problem: &Problem, start: Vec<f64>) -> Outcome {
    let mut p = start;
    let (mut r, mut jac, mut rms) = problem.evaluate(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for it in 0..FIT_MAX_ITER {
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        if jtr.amax() < 1e-15 * (1.0 + cost) || cost < 1e-30 {
            return Outcome { p, cost, rms, jac, iterations: it, converged: true };
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            let (r2, j2, rms2) = problem.evaluate(&trial);
            let c2 = r2.norm_squared();
            if c2 < cost {
                let small_step = step.norm() < 1e-13 * (1.0 + DVector::from_column_slice(&p).norm());
                let small_gain = cost - c2 < 1e-15 * cost;
                p = trial;
                r = r2;
                jac = j2;
                rms = rms2;
                cost = c2;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    return Outcome { p, cost, rms, jac, iterations: it + 1, converged: true };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point to working precision
            return Outcome { p, cost, rms, jac, iterations: it + 1, converged: true };
        }
    }
    Outcome { p, cost, rms, jac, iterations: FIT_MAX_ITER, converged: false }
}

/// Least-squares fit of manifold eigenvalues to peak positions.
///
/// Each peak is matched to the nearest eigenvalue. Crossings covered by fewer than five flux
/// points within a quarter drive period of resonance are pinned at zero coupling and shift
/// with infinite standard error. Restarts run from a fixed list of initial couplings, so
/// the result is deterministic.
pub fn fit_polariton(
    data: &[PeakPoint],
    cavity: &CavityParams,
    omega3_curve: &CubicSpline,
    drive_omega: f64,
) -> Result<PolaritonFit> {
    cavity.validate()?;
    if !(drive_omega.is_finite() && drive_omega > 0.0) {
        return Err(Error::invalid(format!("drive frequency must be positive (got {drive_omega})")));
    }
    if data.iter().any(|p| !p.phi_dc.is_finite() || !p.freq.is_finite()) {
        return Err(Error::invalid("peak data must be finite"));
    }
    let omega3: Vec<f64> = data.iter().map(|p| omega3_curve.eval(p.phi_dc)).collect();
    let window = CROSSING_WINDOW * drive_omega;
    let identifiable: Vec<bool> = (M_MIN..=M_MAX)
        .map(|m| {
            let mut fluxes: Vec<f64> = data
                .iter()
                .zip(&omega3)
                .filter(|(_, w3)| (*w3 + m as f64 * drive_omega - cavity.omega_c).abs() < window)
                .map(|(p, _)| p.phi_dc)
                .collect();
            fluxes.sort_by(f64::total_cmp);
            fluxes.dedup();
            fluxes.len() >= MIN_CROSSING_POINTS
        })
        .collect();
    let free: Vec<usize> = (0..N_SIDEBANDS).filter(|&i| identifiable[i]).collect();
    let n_params = 2 * free.len();
    if data.len() <= n_params {
        return Err(Error::invalid(format!("{} peaks cannot determine {n_params} parameters", data.len())));
    }
    let problem = Problem { data, omega3, omega_c: cavity.omega_c, drive_omega, free };

    let mut best: Option<Outcome> = None;
    let mut any_converged = false;
    for g0 in INITIAL_COUPLINGS {
        let start: Vec<f64> = (0..problem.free.len()).flat_map(|_| [g0, 0.0]).collect();
        let out = levenberg_marquardt(&problem, start);
        any_converged |= out.converged;
        if best.as_ref().is_none_or(|b| out.cost < b.cost) {
            best = Some(out);
        }
    }
    let best = best.expect("at least one restart");

    let (g, d) = problem.unpack(&best.p);
    let mut g_stderr = vec![f64::INFINITY; N_SIDEBANDS];
    let mut delta_stderr = vec![f64::INFINITY; N_SIDEBANDS];
    let weighted = data.iter().any(|p| p.sigma.is_some());
    let dof = (data.len() - n_params) as f64;
    let scale = if weighted { 1.0 } else { best.cost / dof };
    if n_params > 0 {
        if let Some(cov) = (best.jac.transpose() * &best.jac).try_inverse() {
            for (k, &i) in problem.free.iter().enumerate() {
                g_stderr[i] = (cov[(2 * k, 2 * k)] * scale).max(0.0).sqrt();
                delta_stderr[i] = (cov[(2 * k + 1, 2 * k + 1)] * scale).max(0.0).sqrt();
            }
        }
    }
    let fit = PolaritonFit {
        // eigenvalues depend on g^2 only
        g_m: g.iter().map(|x| x.abs()).collect(),
        delta_m: d,
        residual: best.rms,
        g_stderr,
        delta_stderr,
        identifiable,
        iterations: best.iterations,
        n_points: data.len(),
    };
    if !any_converged || !fit.residual.is_finite() {
        return Err(Error::FitNotConverged { residual: fit.residual, best: Box::new(fit) });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> CubicSpline {
        // linearized 0-3 dispersion around the cavity crossing
        CubicSpline::tabulate(0.2, 0.45, 51, |phi| Ok(7.32 - 6.6 * (phi - 0.30))).unwrap()
    }

    fn truth() -> PolaritonFit {
        PolaritonFit::from_parameters(
            vec![0.004, 0.009, 0.013, 0.008, 0.005, 0.003],
            vec![0.001, -0.002, 0.0, 0.0015, 0.002, -0.001],
        )
        .unwrap()
    }

    fn fluxes() -> Vec<f64> {
        (0..=200).map(|i| 0.22 + 0.001 * i as f64).collect()
    }

    #[test]
    fn uncoupled_manifold_is_diagonal() {
        let cav = CavityParams::default();
        let fit = PolaritonFit::from_parameters(vec![0.0; 6], vec![0.0; 6]).unwrap();
        let eigs = polariton_manifold_eigs(&cav, 7.0, 0.2, &fit);
        let mut expected = vec![7.3, 6.6, 6.8, 7.0, 7.2, 7.4, 7.6];
        expected.sort_by(f64::total_cmp);
        for (a, b) in eigs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resonant_splitting_is_twice_the_coupling() {
        let cav = CavityParams::default();
        let mut g = vec![0.0; 6];
        g[sideband_index(1)] = 0.012;
        let fit = PolaritonFit::from_parameters(g, vec![0.0; 6]).unwrap();
        let eigs = polariton_manifold_eigs(&cav, 7.1, 0.2, &fit);
        let near: Vec<f64> = eigs.iter().copied().filter(|e| (e - 7.3).abs() < 0.05).collect();
        assert_eq!(near.len(), 2);
        assert!(((near[1] - near[0]) - 0.024).abs() < 1e-12);
    }

    #[test]
    fn noiseless_roundtrip() {
        let cav = CavityParams::default();
        let data = synth_polariton_data(&cav, &curve(), 0.2, &truth(), &fluxes());
        let fit = fit_polariton(&data, &cav, &curve(), 0.2).unwrap();
        assert!(fit.identifiable.iter().all(|&b| b));
        for i in 0..N_SIDEBANDS {
            assert!((fit.g_m[i] / truth().g_m[i] - 1.0).abs() < 1e-6, "{:?}", fit.g_m);
        }
        assert!(fit.residual < 1e-9);
        let eigs = polariton_manifold_eigs(&cav, 7.32, 0.2, &fit);
        let reference = polariton_manifold_eigs(&cav, 7.32, 0.2, &truth());
        assert!(eigs.iter().zip(&reference).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn lone_crossing_pins_the_rest() {
        let cav = CavityParams::default();
        let mut g = vec![0.0; 6];
        g[sideband_index(0)] = 0.013;
        let only = PolaritonFit::from_parameters(g, vec![0.0; 6]).unwrap();
        // fluxes around the m = 0 crossing only
        let near: Vec<f64> = (0..=40).map(|i| 0.283 + 0.001 * i as f64).collect();
        let data = synth_polariton_data(&cav, &curve(), 0.2, &only, &near);
        let fit = fit_polariton(&data, &cav, &curve(), 0.2).unwrap();
        for m in M_MIN..=M_MAX {
            let i = sideband_index(m);
            assert_eq!(fit.identifiable[i], m == 0);
            if m != 0 {
                assert_eq!(fit.g_m[i], 0.0);
                assert!(fit.g_stderr[i].is_infinite());
            }
        }
        assert!((fit.g(0) - 0.013).abs() < 1e-8);
    }

    #[test]
    fn parses_columns_and_reports_positions() {
        let text = "# phi freq sigma\n0.30 7.31\n0.301, 7.305, 0.001  # trailing\n\n";
        let pts = parse_peak_file(text).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].sigma, Some(0.001));
        match parse_peak_file("0.3 7.3\n0.31 abc\n") {
            Err(Error::Config { line: 2, column: 6, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_peak_file("0.3\n").is_err());
    }
}
