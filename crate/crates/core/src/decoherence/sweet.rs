use serde::{Deserialize, Serialize};

use super::{derivatives_from_elements, FourierMatrixElements, NoiseModel};
use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::floquet::{solve_floquet, DriveParams, SambeConfig};
use crate::units::ghz_to_rad_per_s;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweetSpotGrid {
    pub phi_dc: Vec<f64>,
    pub xi: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SweetSpotGrid {
    fn axis(&self, a: usize) -> &[f64] {
        match a {
            0 => &self.phi_dc,
            1 => &self.xi,
            _ => &self.omega,
        }
    }

    fn len(&self) -> usize {
        self.phi_dc.len() * self.xi.len() * self.omega.len()
    }

    fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.xi.len() + i[1]) * self.omega.len() + i[2]
    }

    fn point(&self, i: [usize; 3]) -> [f64; 3] {
        [self.phi_dc[i[0]], self.xi[i[1]], self.omega[i[2]]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweetSpotKind {
    /// `d eps01/d phi_dc = 0`.
    Flux,
    /// `d eps01/d xi = 0` at `xi > 0`.
    Amplitude,
    /// Both derivatives below tolerance at `xi > 0`.
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweetSpot {
    pub kind: SweetSpotKind,
    pub phi_dc: f64,
    pub xi: f64,
    pub omega: f64,
    /// GHz per flux quantum.
    pub d_phi: f64,
    pub d_xi: f64,
    pub eps01: f64,
    /// Low-frequency pure-dephasing rate (1/s) at the spot.
    pub gamma_phi_low: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub phi_dc: f64,
    pub xi: f64,
    pub omega: f64,
    pub d_phi: f64,
    pub d_xi: f64,
    pub eps01: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweetSpotReport {
    pub spots: Vec<SweetSpot>,
    pub scan: Vec<ScanPoint>,
    pub diagnostics: Vec<String>,
}

impl SweetSpotReport {
    pub fn of_kind(&self, kind: SweetSpotKind) -> impl Iterator<Item = &SweetSpot> {
        self.spots.iter().filter(move |s| s.kind == kind)
    }
}

struct Evaluator<'a> {
    params: &'a CircuitParams,
    config: SambeConfig,
}

impl Evaluator<'_> {
    /// `(d_phi, d_xi, eps01)` at `x = [phi_dc, xi, omega]`.
    fn eval(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let sol = solve_floquet(self.params, &DriveParams::new(x[0], x[1], x[2]), &self.config)?;
        let el = FourierMatrixElements::from_solution(&sol)?;
        let (dp, dx) = derivatives_from_elements(&el, self.params.e_l);
        Ok([dp, dx, sol.eps01_nearest_static()])
    }
}

/// Root of `f` on `[a, b]` with `f(a) f(b) <= 0` by Illinois regula falsi with a bisection
/// safeguard.
fn bracket_root(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, ftol: f64) -> Result<(f64, f64)> {
    if fa == 0.0 {
        return Ok((a, 0.0));
    }
    if fb == 0.0 {
        return Ok((b, 0.0));
    }
    let mut side = 0i8;
    let xtol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 0..100 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) || it % 8 == 7 {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc.abs() < ftol || (b - a).abs() < xtol {
            return Ok(best);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best)
}

fn sign_change(a: f64, b: f64) -> bool {
    (a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0)
}

fn gamma_low(noise: &NoiseModel, d_phi: f64, d_xi: f64) -> f64 {
    noise.ir_factor()
        * (noise.a_dc.powi(2) * ghz_to_rad_per_s(d_phi).powi(2) + noise.a_ac.powi(2) * ghz_to_rad_per_s(d_xi).powi(2)).sqrt()
}

/// Locates points where `d eps01/d phi_dc` and/or `d eps01/d xi` vanish.
///
/// Every grid line is scanned for sign changes of each derivative and refined along that
/// line. Double spots are seeded from cells of two-axis slices in which both derivatives
/// change sign and refined by damped Newton iteration on both equations; `tol_d` (GHz per
/// flux quantum) is the acceptance threshold on both magnitudes.
pub fn find_sweet_spots(
    params: &CircuitParams,
    noise: &NoiseModel,
    grid: &SweetSpotGrid,
    config: &SambeConfig,
    tol_d: f64,
) -> Result<SweetSpotReport> {
    noise.validate()?;
    if grid.len() == 0 {
        return Err(Error::invalid("sweet-spot grid is empty"));
    }
    if !(tol_d > 0.0) {
        return Err(Error::invalid("tol_d must be positive"));
    }
    for a in 0..3 {
        if grid.axis(a).windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sweet-spot grid axes must be strictly ascending"));
        }
    }
    let ev = Evaluator { params, config: config.unchecked() };
    let mut report = SweetSpotReport::default();
    let dims = [grid.phi_dc.len(), grid.xi.len(), grid.omega.len()];

    let mut values = vec![None; grid.len()];
    for i0 in 0..dims[0] {
        for i1 in 0..dims[1] {
            for i2 in 0..dims[2] {
                let idx = [i0, i1, i2];
                let x = grid.point(idx);
                let r = ev.eval(x);
                let (vals, ok) = match r {
                    Ok(v) => (v, true),
                    Err(e) => {
                        report.diagnostics.push(format!("scan point {x:?}: {e}"));
                        ([f64::NAN; 3], false)
                    }
                };
                report.scan.push(ScanPoint {
                    phi_dc: x[0],
                    xi: x[1],
                    omega: x[2],
                    d_phi: vals[0],
                    d_xi: vals[1],
                    eps01: vals[2],
                    ok,
                });
                if ok {
                    values[grid.index(idx)] = Some(vals);
                }
            }
        }
    }

    let zero_tol = 1e-3 * tol_d;
    let push = |report: &mut SweetSpotReport, spot: SweetSpot| {
        let dup = report.spots.iter().any(|s| {
            s.kind == spot.kind
                && (s.phi_dc - spot.phi_dc).abs() < 1e-7
                && (s.xi - spot.xi).abs() < 1e-7
                && (s.omega - spot.omega).abs() < 1e-7
        });
        if !dup {
            report.spots.push(spot);
        }
    };

    // one-dimensional refinement of each derivative along each axis
    for (which, kind) in [(0usize, SweetSpotKind::Flux), (1, SweetSpotKind::Amplitude)] {
        for axis in 0..3 {
            if dims[axis] < 2 {
                continue;
            }
            let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
            for j in 0..dims[others[0]] {
                for l in 0..dims[others[1]] {
                    let at = |s: usize| {
                        let mut idx = [0; 3];
                        idx[axis] = s;
                        idx[others[0]] = j;
                        idx[others[1]] = l;
                        idx
                    };
                    for s in 0..dims[axis] - 1 {
                        let (ia, ib) = (at(s), at(s + 1));
                        let (Some(va), Some(vb)) = (values[grid.index(ia)], values[grid.index(ib)]) else {
                            continue;
                        };
                        let (fa, fb) = (va[which], vb[which]);
                        if !sign_change(fa, fb) {
                            continue;
                        }
                        // amplitude derivative vanishes identically at xi = 0
                        let base = grid.point(ia);
                        let xa = base[axis];
                        let xb = grid.point(ib)[axis];
                        if which == 1 && (base[1] == 0.0 || (axis == 1 && xa == 0.0 && fa == 0.0)) {
                            continue;
                        }
                        if fa.abs() < zero_tol && s > 0 {
                            // counted from the previous cell
                            continue;
                        }
                        let f = |x: f64| -> Result<f64> {
                            let mut p = base;
                            p[axis] = x;
                            Ok(ev.eval(p)?[which])
                        };
                        let (root, fr) = match bracket_root(f, xa, xb, fa, fb, zero_tol) {
                            Ok(r) => r,
                            Err(e) => {
                                report.diagnostics.push(format!("refinement near {base:?}: {e}"));
                                continue;
                            }
                        };
                        if fr.abs() >= tol_d {
                            report.diagnostics.push(format!(
                                "sign change of derivative {which} between {xa} and {xb} on axis {axis} is a \
                                 discontinuity (|d| = {:.3e} at the bracket root)",
                                fr.abs()
                            ));
                            continue;
                        }
                        let mut p = base;
                        p[axis] = root;
                        let v = ev.eval(p)?;
                        let kind = if which == 0 && p[1] > 0.0 && v[1].abs() < tol_d { SweetSpotKind::Double } else { kind };
                        push(
                            &mut report,
                            SweetSpot {
                                kind,
                                phi_dc: p[0],
                                xi: p[1],
                                omega: p[2],
                                d_phi: v[0],
                                d_xi: v[1],
                                eps01: v[2],
                                gamma_phi_low: gamma_low(noise, v[0], v[1]),
                            },
                        );
                    }
                }
            }
        }
    }

    // joint refinement on two-axis slices
    let varying: Vec<usize> = (0..3).filter(|&a| dims[a] > 1).collect();
    if varying.len() >= 2 {
        let (ax, ay) = if varying.len() == 3 { (1, 2) } else { (varying[0], varying[1]) };
        let fixed = 3 - ax - ay;
        for f in 0..dims[fixed] {
            for i in 0..dims[ax] - 1 {
                for j in 0..dims[ay] - 1 {
                    let mut corners = Vec::with_capacity(4);
                    for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let mut idx = [0; 3];
                        idx[fixed] = f;
                        idx[ax] = i + di;
                        idx[ay] = j + dj;
                        corners.push((idx, values[grid.index(idx)]));
                    }
                    if corners.iter().any(|c| c.1.is_none()) {
                        continue;
                    }
                    let v: Vec<[f64; 3]> = corners.iter().map(|c| c.1.unwrap()).collect();
                    let changes = |w: usize| {
                        v.iter().any(|x| x[w] <= 0.0) && v.iter().any(|x| x[w] >= 0.0)
                    };
                    if !(changes(0) && changes(1)) {
                        continue;
                    }
                    let lo = grid.point(corners[0].0);
                    let hi = grid.point(corners[3].0);
                    if hi[1] <= 0.0 {
                        continue;
                    }
                    let mut start = lo;
                    start[ax] = 0.5 * (lo[ax] + hi[ax]);
                    start[ay] = 0.5 * (lo[ay] + hi[ay]);
                    let span = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
                    match newton_2d(&ev, start, ax, ay, span, tol_d) {
                        Ok(Some((p, val))) => {
                            let inside = [ax, ay].iter().all(|&a| p[a] >= lo[a] - span[a] && p[a] <= hi[a] + span[a]);
                            if inside && p[1] > 0.0 {
                                push(
                                    &mut report,
                                    SweetSpot {
                                        kind: SweetSpotKind::Double,
                                        phi_dc: p[0],
                                        xi: p[1],
                                        omega: p[2],
                                        d_phi: val[0],
                                        d_xi: val[1],
                                        eps01: val[2],
                                        gamma_phi_low: gamma_low(noise, val[0], val[1]),
                                    },
                                );
                            }
                        }
                        Ok(None) => report.diagnostics.push(format!("joint refinement from {start:?} did not converge")),
                        Err(e) => report.diagnostics.push(format!("joint refinement from {start:?}: {e}")),
                    }
                }
            }
        }
    }
    if report.spots.is_empty() {
        report.diagnostics.push("no sign change of either derivative on the grid".into());
    }
    Ok(report)
}

/// Damped Newton iteration on `(d_phi, d_xi) = 0` over axes `ax`, `ay`.
fn newton_2d(ev: &Evaluator, start: [f64; 3], ax: usize, ay: usize, span: [f64; 3], tol_d: f64) -> Result<Option<([f64; 3], [f64; 3])>> {
    let mut x = start;
    let mut v = ev.eval(x)?;
    let norm = |v: &[f64; 3]| v[0].hypot(v[1]);
    for _ in 0..40 {
        if v[0].abs() < tol_d * 1e-2 && v[1].abs() < tol_d * 1e-2 {
            return Ok(Some((x, v)));
        }
        let hx = 1e-4 * span[ax].max(1e-6);
        let hy = 1e-4 * span[ay].max(1e-6);
        let mut px = x;
        px[ax] += hx;
        let mut py = x;
        py[ay] += hy;
        let vx = ev.eval(px)?;
        let vy = ev.eval(py)?;
        let j = [[(vx[0] - v[0]) / hx, (vy[0] - v[0]) / hy], [(vx[1] - v[1]) / hx, (vy[1] - v[1]) / hy]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Ok(None);
        }
        let dx = -(j[1][1] * v[0] - j[0][1] * v[1]) / det;
        let dy = -(-j[1][0] * v[0] + j[0][0] * v[1]) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = x;
            trial[ax] += lambda * dx;
            trial[ay] += lambda * dy;
            if trial[1] < 0.0 || trial[2] <= 0.0 {
                lambda *= 0.5;
                continue;
            }
            if let Ok(tv) = ev.eval(trial) {
                if norm(&tv) < norm(&v) {
                    x = trial;
                    v = tv;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((v[0].abs() < tol_d && v[1].abs() < tol_d).then_some((x, v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_half_flux_is_flux_sweet() {
        let grid = SweetSpotGrid { phi_dc: vec![0.47, 0.49, 0.51, 0.53], xi: vec![0.0], omega: vec![0.5] };
        let r = find_sweet_spots(&CircuitParams::device(), &NoiseModel::default(), &grid, &SambeConfig::new(5, 4), 1e-4)
            .unwrap();
        let flux: Vec<_> = r.of_kind(SweetSpotKind::Flux).collect();
        assert_eq!(flux.len(), 1, "{r:?}");
        assert!((flux[0].phi_dc - 0.5).abs() < 1e-8);
        assert_eq!(r.of_kind(SweetSpotKind::Double).count(), 0);
    }

    #[test]
    fn root_finder_handles_endpoint_zero() {
        let (x, f) = bracket_root(|x| Ok(x * x - 2.0), 0.0, 2.0, -2.0, 2.0, 1e-14).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-12 && f.abs() < 1e-13);
        assert_eq!(bracket_root(|x| Ok(x), 0.0, 1.0, 0.0, 1.0, 1e-9).unwrap().0, 0.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let grid = SweetSpotGrid::default();
        assert!(find_sweet_spots(&CircuitParams::device(), &NoiseModel::default(), &grid, &SambeConfig::default(), 1e-4).is_err());
    }
}
