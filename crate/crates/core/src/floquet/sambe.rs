use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{DriveParams, FloquetSolution, SambeConfig, SolveWarning, EDGE_WEIGHT_TOL};
use crate::circuit::StaticSpectrum;
use crate::error::{Error, Result};
use crate::units::{fold_to_zone, TWO_PI};

/// Largest Sambe dimension accepted by the dense solver.
pub const MAX_SAMBE_DIM: usize = 20_000;

/// Label weight below which the direct assignment is replaced by adiabatic continuation.
const LABEL_THRESHOLD: f64 = 0.5;

/// Real symmetric Sambe matrix; row `(n + cutoff) * n_levels + a` is static level `a` in
/// harmonic `n`.
#[derive(Clone, Debug)]
pub struct SambeMatrix {
    pub matrix: DMatrix<f64>,
    pub n_levels: usize,
    pub cutoff: usize,
}

impl SambeMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn index(&self, n: i64, a: usize) -> usize {
        (n + self.cutoff as i64) as usize * self.n_levels + a
    }
}

/// Drive coupling `-E_L (2 pi xi) / 2 * phi_centred` between neighbouring harmonics.
fn drive_coupling(spectrum: &StaticSpectrum, nl: usize, xi: f64) -> DMatrix<f64> {
    let amp = -0.5 * spectrum.params.e_l * TWO_PI * xi;
    spectrum.phi_centered().view((0, 0), (nl, nl)).into_owned() * amp
}

pub fn build_sambe(spectrum: &StaticSpectrum, drive: &DriveParams, config: &SambeConfig) -> Result<SambeMatrix> {
    drive.validate()?;
    config.validate()?;
    let nl = config.n_levels;
    if spectrum.n_levels() < nl {
        return Err(Error::invalid(format!(
            "static spectrum has {} levels, Sambe problem needs {nl}",
            spectrum.n_levels()
        )));
    }
    let nb = config.n_blocks();
    let dim = nl * nb;
    if dim > MAX_SAMBE_DIM {
        return Err(Error::invalid(format!(
            "Sambe dimension {dim} exceeds {MAX_SAMBE_DIM}; reduce n_levels or sideband_cutoff"
        )));
    }
    let ns = config.sideband_cutoff as i64;
    let shift = 0.25 * spectrum.params.e_l * (TWO_PI * drive.xi).powi(2);
    let v = drive_coupling(spectrum, nl, drive.xi);
    let mut m = DMatrix::zeros(dim, dim);
    for (b, n) in (-ns..=ns).enumerate() {
        for a in 0..nl {
            m[(b * nl + a, b * nl + a)] = spectrum.energies[a] - n as f64 * drive.omega + shift;
        }
        if b + 1 < nb {
            m.view_mut((b * nl, (b + 1) * nl), (nl, nl)).copy_from(&v);
            m.view_mut(((b + 1) * nl, b * nl), (nl, nl)).copy_from(&v);
        }
    }
    Ok(SambeMatrix { matrix: m, n_levels: nl, cutoff: config.sideband_cutoff })
}

/// Convenience wrapper returning only the matrix.
pub fn sambe_matrix(spectrum: &StaticSpectrum, drive: &DriveParams, config: &SambeConfig) -> Result<DMatrix<f64>> {
    build_sambe(spectrum, drive, config).map(|s| s.matrix)
}

struct Eigensystem {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

fn eigensystem(spectrum: &StaticSpectrum, drive: &DriveParams, config: &SambeConfig) -> Result<Eigensystem> {
    let s = build_sambe(spectrum, drive, config)?;
    let dim = s.dim();
    let eig = s.matrix.symmetric_eigen();
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver(format!(
            "non-finite Sambe eigenvalue (dim {dim}) at phi_dc = {}",
            drive.bias.phi_dc
        )));
    }
    Ok(Eigensystem { values: eig.eigenvalues, vectors: eig.eigenvectors })
}

/// Greedy unique assignment maximizing `score[(row, col)]`; returns the column per row and its
/// score.
pub(crate) fn greedy_assign(score: &DMatrix<f64>) -> Vec<(usize, f64)> {
    let (rows, cols) = score.shape();
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            cand.push((score[(r, c)], r, c));
        }
    }
    cand.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![(usize::MAX, 0.0); rows];
    let mut col_used = vec![false; cols];
    let mut left = rows;
    for (s, r, c) in cand {
        if left == 0 {
            break;
        }
        if out[r].0 == usize::MAX && !col_used[c] {
            out[r] = (c, s);
            col_used[c] = true;
            left -= 1;
        }
    }
    out
}

fn direct_labels(es: &Eigensystem, nl: usize, ns: usize) -> Vec<(usize, f64)> {
    let rows = DMatrix::from_fn(nl, es.vectors.ncols(), |a, j| es.vectors[(ns * nl + a, j)].powi(2));
    greedy_assign(&rows)
}

/// Follows the branches from `xi = 0` to the target amplitude in `steps` increments.
fn ramp_labels(
    spectrum: &StaticSpectrum,
    drive: &DriveParams,
    config: &SambeConfig,
    steps: usize,
) -> Result<Option<(Eigensystem, Vec<usize>)>> {
    let nl = config.n_levels;
    let ns = config.sideband_cutoff;
    let start = eigensystem(spectrum, &drive.with_xi(0.0), config)?;
    let mut picks: Vec<usize> = direct_labels(&start, nl, ns).into_iter().map(|p| p.0).collect();
    let mut prev = DMatrix::from_fn(start.vectors.nrows(), nl, |i, s| start.vectors[(i, picks[s])]);
    let mut last = start;
    for k in 1..=steps {
        let xi = drive.xi * k as f64 / steps as f64;
        let es = eigensystem(spectrum, &drive.with_xi(xi), config)?;
        let overlap = es.vectors.tr_mul(&prev).map(|x| x * x).transpose();
        let assign = greedy_assign(&overlap);
        if assign.iter().any(|&(_, f)| f < LABEL_THRESHOLD) {
            return Ok(None);
        }
        picks = assign.iter().map(|p| p.0).collect();
        prev = DMatrix::from_fn(es.vectors.nrows(), nl, |i, s| es.vectors[(i, picks[s])]);
        last = es;
    }
    Ok(Some((last, picks)))
}

pub(crate) fn solve_inner(
    spectrum: &Arc<StaticSpectrum>,
    drive: &DriveParams,
    config: &SambeConfig,
    allow_ramp: bool,
) -> Result<FloquetSolution> {
    let nl = config.n_levels;
    let ns = config.sideband_cutoff;
    let es = eigensystem(spectrum, drive, config)?;
    let direct = direct_labels(&es, nl, ns);
    let mut warnings = Vec::new();

    let weak = direct.iter().any(|&(_, f)| f < LABEL_THRESHOLD);
    let (es, picks) = if weak && allow_ramp && drive.xi > 0.0 {
        let mut found = None;
        let mut steps = 16;
        while steps <= 128 {
            if let Some(r) = ramp_labels(spectrum, drive, config, steps)? {
                found = Some(r);
                break;
            }
            steps *= 2;
        }
        match found {
            Some(r) => r,
            None => {
                for (state, &(_, f)) in direct.iter().enumerate() {
                    if f < LABEL_THRESHOLD {
                        warnings.push(SolveWarning::AmbiguousLabel { state, overlap: f });
                    }
                }
                (es, direct.iter().map(|p| p.0).collect())
            }
        }
    } else {
        if weak {
            for (state, &(_, f)) in direct.iter().enumerate() {
                if f < LABEL_THRESHOLD {
                    warnings.push(SolveWarning::AmbiguousLabel { state, overlap: f });
                }
            }
        }
        (es, direct.iter().map(|p| p.0).collect::<Vec<_>>())
    };

    let nb = config.n_blocks();
    let mut blocks = Vec::with_capacity(nl);
    let mut unfolded = Vec::with_capacity(nl);
    for &j in &picks {
        let col = es.vectors.column(j);
        // sign gauge: largest component positive
        let mut big = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[big].abs() {
                big = i;
            }
        }
        let sign = if col[big] < 0.0 { -1.0 } else { 1.0 };
        let state: Vec<DVector<Complex64>> = (0..nb)
            .map(|b| DVector::from_fn(nl, |a, _| Complex64::new(sign * col[b * nl + a], 0.0)))
            .collect();
        blocks.push(state);
        unfolded.push(es.values[j]);
    }

    let mut sol = FloquetSolution {
        quasienergies: Vec::new(),
        unfolded,
        fourier_blocks: blocks,
        labels: (0..nl).collect(),
        label_overlaps: vec![0.0; nl],
        drive: *drive,
        config: *config,
        spectrum: Arc::clone(spectrum),
        warnings,
        convergence_delta: None,
    };

    let c = ns as i64;
    for s in 0..nl {
        let centroid: f64 = (-c..=c).map(|n| n as f64 * sol.sideband_weight(s, n)).sum();
        sol.shift_copy(s, centroid.round() as i64);
        sol.label_overlaps[s] = sol.block(s, 0).map(|v| v[s].norm_sqr()).unwrap_or(0.0);
        let edge = sol.sideband_weight(s, -c) + sol.sideband_weight(s, c)
            + sol.sideband_weight(s, -c + 1)
            + sol.sideband_weight(s, c - 1);
        if edge > EDGE_WEIGHT_TOL {
            sol.warnings.push(SolveWarning::EdgeOfWindow { state: s, weight: edge });
        }
    }
    sol.quasienergies = sol.unfolded.iter().map(|&e| fold_to_zone(e, drive.omega)).collect();
    Ok(sol)
}
