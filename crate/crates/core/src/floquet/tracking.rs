//! Branch continuity between neighbouring Floquet solutions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sambe::greedy_assign;
use super::FloquetSolution;
use crate::circuit::{ladder, StaticSpectrum};
use crate::error::{Error, Result};

/// Squared overlap below which consecutive solutions are flagged as a tracking break.
pub const TRACKING_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct StateMatch {
    /// `target[i]`: state of the second solution continuing state `i` of the first.
    pub target: Vec<usize>,
    /// Copy shift aligning the second state's blocks with the first.
    pub shift: Vec<i64>,
    /// Squared overlap of each matched pair.
    pub fidelity: Vec<f64>,
}

impl StateMatch {
    pub fn min_fidelity(&self) -> f64 {
        self.fidelity.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    /// Smallest matched fidelity between path points `i` and `i + 1`.
    pub overlaps: Vec<f64>,
    pub min_overlap: f64,
    /// Path indices `i + 1` whose link to `i` fell below [`TRACKING_THRESHOLD`].
    pub breaks: Vec<usize>,
}

/// Overlap of the static eigenbases, `<a_i|b_j>`. Oscillator bases centred at different
/// fluxes are related by a translation in phase.
fn basis_overlap(a: &StaticSpectrum, b: &StaticSpectrum) -> DMatrix<f64> {
    let dim = a.eigenvectors.nrows();
    let d = b.bias.phase() - a.bias.phase();
    if d == 0.0 && a.params == b.params {
        return a.eigenvectors.tr_mul(&b.eigenvectors);
    }
    let lad = ladder(dim);
    let gen = (lad.transpose() - &lad) * (d / (2.0 * a.params.phi_zpf()));
    let t = gen.exp();
    a.eigenvectors.transpose() * t * &b.eigenvectors
}

fn overlap(a: &FloquetSolution, i: usize, b: &FloquetSolution, j: usize, s: i64, sov: &DMatrix<Complex64>) -> Complex64 {
    let c = a.cutoff().min(b.cutoff());
    let mut acc = Complex64::new(0.0, 0.0);
    for n in -c..=c {
        if let (Some(x), Some(y)) = (a.block(i, n), b.block(j, n + s)) {
            acc += x.dotc(&(sov * y));
        }
    }
    acc
}

pub fn match_states(a: &FloquetSolution, b: &FloquetSolution) -> Result<StateMatch> {
    let na = a.n_states();
    let nb = b.n_states();
    if na != nb {
        return Err(Error::invalid(format!("cannot match {na} states against {nb}")));
    }
    if a.spectrum.params.basis_dim != b.spectrum.params.basis_dim {
        return Err(Error::invalid("solutions use different oscillator bases"));
    }
    let sov = basis_overlap(&a.spectrum, &b.spectrum)
        .view((0, 0), (na, nb))
        .map(|x| Complex64::new(x, 0.0));
    let mut best = DMatrix::zeros(na, nb);
    let mut best_shift = DMatrix::<i64>::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            for s in -1..=1 {
                let f = overlap(a, i, b, j, s, &sov).norm_sqr();
                if f > best[(i, j)] {
                    best[(i, j)] = f;
                    best_shift[(i, j)] = s;
                }
            }
        }
    }
    let assign = greedy_assign(&best);
    Ok(StateMatch {
        target: assign.iter().map(|p| p.0).collect(),
        shift: assign.iter().enumerate().map(|(i, p)| best_shift[(i, p.0)]).collect(),
        fidelity: assign.iter().map(|p| p.1).collect(),
    })
}

/// Reorders every solution so that index `i` is the same branch along the path, and moves
/// representatives so that the unfolded quasienergies are continuous.
pub fn track_states(path: &mut [FloquetSolution]) -> Result<TrackingReport> {
    let mut report = TrackingReport { min_overlap: 1.0, ..Default::default() };
    for k in 1..path.len() {
        let (head, tail) = path.split_at_mut(k);
        let prev = &head[k - 1];
        let cur = &mut tail[0];
        let m = match_states(prev, cur)?;
        cur.permute(&m.target);
        for (i, &s) in m.shift.iter().enumerate() {
            cur.shift_copy(i, s);
        }
        let f = m.min_fidelity();
        report.overlaps.push(f);
        report.min_overlap = report.min_overlap.min(f);
        if f < TRACKING_THRESHOLD {
            report.breaks.push(k);
        }
    }
    Ok(report)
}
