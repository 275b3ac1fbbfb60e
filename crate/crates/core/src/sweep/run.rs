//! Sweep execution: one task evaluated over the grid on a bounded worker pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{RunConfig, Task};
use crate::circuit::{diagonalize_static, FluxBias, StaticSpectrum};
use crate::decoherence::{coherence_rates, derivatives_from_elements, find_sweet_spots, FourierMatrixElements, SweetSpot, SweetSpotGrid};
use crate::error::{Error, Result};
use crate::floquet::{solve_with_spectrum, static_for, DriveParams, FloquetSolution, SolveWarning};
use crate::polariton::{
    fit_polariton, floquet_dipole_coupling, parse_peak_file, rwa_coupling, rwa_from_circuit, rwa_phase_coefficients,
    CavityParams, CouplingForm, PolaritonFit, M_MAX, M_MIN,
};
use crate::spectroscopy::{
    charge_elements, count_lines, extract_t2r, rates_from_lines, sideband_lines, steady_state_population,
    synth_ramsey_signal, PEAK_THRESHOLD,
};
use crate::spline::CubicSpline;

pub const SCHEMA_VERSION: u32 = 1;
/// Derivative magnitude accepted as a sweet spot by the sweetspot task, GHz per flux quantum.
pub const SWEET_TOL: f64 = 1e-4;

/// One output row: grid coordinates, derived values and status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coords: Vec<f64>,
    #[serde(with = "crate::serde_util::vec_opt_f64")]
    pub values: Vec<Option<f64>>,
    /// Non-fatal solver notes (convergence, labelling).
    pub flags: Vec<String>,
    /// Failure reason; values are empty when set.
    pub mask: Option<String>,
}

/// Schema-versioned result table. Rows are in lexicographic grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub task: Task,
    pub axes: Vec<String>,
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spots: Option<Vec<SweetSpot>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<PolaritonFit>,
}

impl SweepTable {
    pub fn masked(&self) -> usize {
        self.rows.iter().filter(|r| r.mask.is_some()).count()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Table plus wall-clock timing per grid cell. Timing is kept out of the table so that
/// exports are reproducible.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub table: SweepTable,
    /// Seconds per cell, in cell order; zero for cache hits.
    pub timing: Vec<f64>,
    pub cache_hits: usize,
}

fn column_layout(config: &RunConfig) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut axes = vec!["phi_dc".to_string(), "xi".to_string(), "omega".to_string()];
    let mut cols: Vec<(String, &str)> = Vec::new();
    let nl = config.sambe.n_levels;
    match config.task {
        Task::StaticSpectrum => {
            axes.truncate(1);
            let n = config.circuit.n_levels.max(nl);
            cols.extend((0..n).map(|i| (format!("e{i}"), "GHz")));
            cols.extend((1..n).map(|i| (format!("w0{i}"), "GHz")));
        }
        Task::Floquet => {
            cols.extend((0..nl).map(|i| (format!("eps{i}"), "GHz")));
            cols.push(("eps01".into(), "GHz"));
            cols.push(("eps01_natural".into(), "GHz"));
            cols.push(("min_label_overlap".into(), "1"));
            cols.push(("convergence_delta".into(), "GHz"));
        }
        Task::SpectralFunction => {
            let k = (config.sambe.sideband_cutoff as i64).min(3);
            for s in 0..2 {
                cols.extend((-k..=k).map(|n| (format!("w{s}_{n}"), "1")));
            }
        }
        Task::Coherence | Task::Ramsey => {
            for c in ["eps01_natural", "d_phi", "d_xi"] {
                cols.push((c.into(), if c.starts_with('d') { "GHz/Phi0" } else { "GHz" }));
            }
            for c in ["gamma_up", "gamma_down", "gamma_phi", "gamma_phi_low"] {
                cols.push((c.into(), "1/s"));
            }
            for c in ["t1", "t2r", "tphi"] {
                cols.push((c.into(), "s"));
            }
            if config.task == Task::Ramsey {
                cols.push(("beat".into(), "GHz"));
                cols.push(("t2r_estimate".into(), "s"));
                cols.push(("t2r_estimate_stderr".into(), "s"));
            }
        }
        Task::Sweetspot => {
            cols.push(("d_phi".into(), "GHz/Phi0"));
            cols.push(("d_xi".into(), "GHz/Phi0"));
            cols.push(("eps01_natural".into(), "GHz"));
        }
        Task::Polariton => {
            cols.push(("g_bare".into(), "GHz"));
            for m in M_MIN..=M_MAX {
                cols.push((format!("g_floquet_{m}"), "GHz"));
            }
            for m in M_MIN..=M_MAX {
                cols.push((format!("g_rwa_{m}"), "GHz"));
            }
        }
        Task::Spectroscopy => {
            axes.push("probe".into());
            cols.push(("p1".into(), "1"));
            cols.push(("probe_rate".into(), "1/s"));
            cols.push(("visible_lines".into(), "1"));
        }
    }
    let (names, units) = cols.into_iter().map(|(n, u)| (n, u.to_string())).unzip();
    (axes, names, units)
}

/// Grid cells in lexicographic order over (phi_dc, xi, omega).
fn cells(config: &RunConfig) -> Vec<[f64; 3]> {
    let (p, x, o) = (config.grid.phi_dc.values(), config.grid.xi.values(), config.grid.omega.values());
    let mut out = Vec::with_capacity(p.len() * x.len() * o.len());
    for &a in &p {
        for &b in &x {
            for &c in &o {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn warning_flags(sol: &FloquetSolution) -> Vec<String> {
    sol.warnings
        .iter()
        .map(|w| match w {
            SolveWarning::NotConverged { delta } => format!("not-converged:{delta:.3e}"),
            SolveWarning::EdgeOfWindow { .. } => "edge-of-window".to_string(),
            SolveWarning::AmbiguousLabel { .. } => "ambiguous-label".to_string(),
        })
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn finite(x: f64) -> Option<f64> {
    if x.is_nan() {
        None
    } else {
        Some(x)
    }
}

struct Context<'a> {
    config: &'a RunConfig,
    statics: BTreeMap<u64, std::result::Result<Arc<StaticSpectrum>, String>>,
    probe_freqs: Vec<f64>,
}

impl Context<'_> {
    fn spectrum(&self, phi: f64) -> Result<Arc<StaticSpectrum>> {
        match self.statics.get(&phi.to_bits()) {
            Some(Ok(s)) => Ok(s.clone()),
            Some(Err(e)) => Err(Error::invalid(format!("static spectrum failed: {e}"))),
            None => Err(Error::invalid("static spectrum missing from cache")),
        }
    }

    fn solve(&self, cell: [f64; 3]) -> Result<FloquetSolution> {
        let spectrum = self.spectrum(cell[0])?;
        solve_with_spectrum(&spectrum, &DriveParams::new(cell[0], cell[1], cell[2]), &self.config.sambe)
    }

    /// Rows for one grid cell (several for spectroscopy, one otherwise).
    fn evaluate(&self, cell: [f64; 3]) -> Result<Vec<Row>> {
        let config = self.config;
        let single = |values: Vec<Option<f64>>, flags: Vec<String>| {
            Ok(vec![Row { coords: cell.to_vec(), values, flags, mask: None }])
        };
        match config.task {
            Task::StaticSpectrum => {
                let s = self.spectrum(cell[0])?;
                let mut v: Vec<Option<f64>> = s.energies.iter().map(|&e| Some(e)).collect();
                v.extend((1..s.energies.len()).map(|i| Some(s.transition(0, i))));
                Ok(vec![Row { coords: vec![cell[0]], values: v, flags: Vec::new(), mask: None }])
            }
            Task::Floquet => {
                let sol = self.solve(cell)?;
                let mut v: Vec<Option<f64>> = sol.quasienergies.iter().map(|&e| Some(e)).collect();
                v.push(Some(sol.eps01_folded()));
                v.push(Some(sol.eps01_nearest_static()));
                v.push(Some(sol.label_overlaps.iter().copied().fold(f64::INFINITY, f64::min)));
                v.push(sol.convergence_delta);
                single(v, warning_flags(&sol))
            }
            Task::SpectralFunction => {
                let sol = self.solve(cell)?;
                let k = sol.cutoff().min(3);
                let v = (0..2).flat_map(|s| (-k..=k).map(move |n| (s, n))).map(|(s, n)| Some(sol.sideband_weight(s, n))).collect();
                single(v, warning_flags(&sol))
            }
            Task::Coherence | Task::Ramsey => {
                let sol = self.solve(cell)?;
                let elems = FourierMatrixElements::from_solution(&sol)?;
                let (d_phi, d_xi) = derivatives_from_elements(&elems, config.circuit.e_l);
                let r = coherence_rates(&elems, &sol, &config.noise, &config.circuit, None)?;
                let mut v = vec![
                    Some(sol.eps01_nearest_static()),
                    Some(d_phi),
                    Some(d_xi),
                    Some(r.gamma_up),
                    Some(r.gamma_down),
                    Some(r.gamma_phi),
                    Some(r.dephasing.low_frequency),
                    finite(r.t1),
                    finite(r.t2r),
                    finite(r.tphi),
                ];
                if config.task == Task::Ramsey {
                    let mut rc = config.ramsey_or_default();
                    rc.t2r_true = r.t2r;
                    let signal = synth_ramsey_signal(&sol, &rc, None)?;
                    let est = extract_t2r(&signal)?;
                    v.push(Some(est.beat));
                    v.push(finite(est.t2r));
                    v.push(finite(est.t2r_stderr));
                }
                single(v, warning_flags(&sol))
            }
            Task::Polariton => {
                let cavity = config.cavity.unwrap_or_default();
                let sol = self.solve(cell)?;
                let drive = sol.drive;
                let g_bare = cavity.g_cap * sol.spectrum.n_elements[(3, 0)].norm();
                let mut v = vec![Some(g_bare)];
                for m in M_MIN..=M_MAX {
                    v.push(Some(floquet_dipole_coupling(&sol, &cavity, m, CouplingForm::default())?.norm()));
                }
                let rwa = rwa_from_circuit(&config.circuit, &drive, cavity.g_cap)?;
                let coeffs = rwa_phase_coefficients(&rwa, &drive, M_MAX + 2)?;
                for m in M_MIN..=M_MAX {
                    v.push(Some(rwa_coupling(&rwa, &coeffs, m)?.norm()));
                }
                single(v, warning_flags(&sol))
            }
            Task::Spectroscopy => {
                let probe = config.probe.as_ref().expect("validated").params();
                let sol = self.solve(cell)?;
                let elems = FourierMatrixElements::from_solution(&sol)?;
                let bath = coherence_rates(&elems, &sol, &config.noise, &config.circuit, None)?;
                let lines = sideband_lines(&charge_elements(&sol)?, &sol);
                let lo = self.probe_freqs.first().copied().unwrap_or(0.0);
                let hi = self.probe_freqs.last().copied().unwrap_or(0.0);
                let in_window: Vec<_> = lines.iter().filter(|l| l.center >= lo && l.center <= hi).copied().collect();
                let visible = count_lines(&in_window, PEAK_THRESHOLD) as f64;
                let flags = warning_flags(&sol);
                self.probe_freqs
                    .iter()
                    .map(|&f| {
                        let rates = rates_from_lines(&lines, &probe.at(f));
                        let p1 = steady_state_population(&rates, &bath)?;
                        Ok(Row {
                            coords: vec![cell[0], cell[1], cell[2], f],
                            values: vec![Some(p1), Some(rates.total()), Some(visible)],
                            flags: flags.clone(),
                            mask: None,
                        })
                    })
                    .collect()
            }
            Task::Sweetspot => unreachable!("sweet-spot search runs over the whole grid"),
        }
    }

    fn masked_rows(&self, cell: [f64; 3], reason: String, n_values: usize) -> Vec<Row> {
        let row = |coords: Vec<f64>| Row { coords, values: vec![None; n_values], flags: Vec::new(), mask: Some(reason.clone()) };
        match self.config.task {
            Task::StaticSpectrum => vec![row(vec![cell[0]])],
            Task::Spectroscopy => self.probe_freqs.iter().map(|&f| row(vec![cell[0], cell[1], cell[2], f])).collect(),
            _ => vec![row(cell.to_vec())],
        }
    }
}

fn cache_path(dir: &Path, key: &str, cell: [f64; 3]) -> PathBuf {
    let mut h = Sha256::new();
    h.update(key.as_bytes());
    for x in cell {
        h.update(x.to_bits().to_le_bytes());
    }
    dir.join(format!("{}.json", hex::encode(h.finalize())))
}

fn read_cache(path: &Path) -> Option<Vec<Row>> {
    let text = std::fs::read_to_string(path).ok()?;
    let rows: Vec<Row> = serde_json::from_str(&text).ok()?;
    rows.iter().all(|r| r.mask.is_none()).then_some(rows)
}

fn write_cache(path: &Path, rows: &[Row]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(rows)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Directory of per-cell cache files for a run writing to `output`.
pub fn cache_dir(output: &Path) -> PathBuf {
    output.join("cache")
}

/// Evaluates the configured task over the grid.
///
/// Cells run on a pool of `config.workers` threads; the row order is fixed by the grid, so
/// the table does not depend on the worker count. With an output directory each finished
/// cell is cached under `output/cache`, and a rerun only recomputes missing or masked cells.
/// Solver failures become masked rows; I/O failures abort.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let (axes, columns, units) = column_layout(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;

    if config.task == Task::Sweetspot {
        let grid = SweetSpotGrid {
            phi_dc: config.grid.phi_dc.values(),
            xi: config.grid.xi.values(),
            omega: config.grid.omega.values(),
        };
        let start = Instant::now();
        let report = pool.install(|| find_sweet_spots(&config.circuit, &config.noise, &grid, &config.sambe, SWEET_TOL))?;
        let rows = report
            .scan
            .iter()
            .map(|p| Row {
                coords: vec![p.phi_dc, p.xi, p.omega],
                values: if p.ok { vec![Some(p.d_phi), Some(p.d_xi), Some(p.eps01)] } else { vec![None; 3] },
                flags: Vec::new(),
                mask: (!p.ok).then(|| "solve failed".to_string()),
            })
            .collect::<Vec<_>>();
        let n = rows.len();
        let table = SweepTable {
            schema_version: SCHEMA_VERSION,
            task: config.task,
            axes,
            columns,
            units,
            rows,
            spots: Some(report.spots),
            fit: None,
        };
        let per_cell = start.elapsed().as_secs_f64() / n.max(1) as f64;
        return Ok(SweepResult { table, timing: vec![per_cell; n], cache_hits: 0 });
    }

    let grid_cells = cells(config);
    let probe_freqs = config.probe.as_ref().map(|p| p.freqs.values()).unwrap_or_default();
    let cache = config.output.as_ref().map(|o| cache_dir(o));
    if let Some(dir) = &cache {
        std::fs::create_dir_all(dir)?;
    }
    let key = config.result_key();

    let mut phis: Vec<f64> = grid_cells.iter().map(|c| c[0]).collect();
    phis.sort_by(f64::total_cmp);
    phis.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let statics = pool.install(|| {
        phis.par_iter()
            .map(|&phi| {
                let s = if config.task == Task::StaticSpectrum {
                    diagonalize_static(&config.circuit, FluxBias::new(phi))
                } else {
                    static_for(&config.circuit, FluxBias::new(phi), &config.sambe)
                };
                (phi.to_bits(), s.map(Arc::new).map_err(|e| e.to_string()))
            })
            .collect::<BTreeMap<_, _>>()
    });
    let ctx = Context { config, statics, probe_freqs };

    let outcomes: Vec<Result<(Vec<Row>, f64, bool)>> = pool.install(|| {
        grid_cells
            .par_iter()
            .map(|&cell| {
                let path = cache.as_ref().map(|d| cache_path(d, &key, cell));
                if let Some(rows) = path.as_deref().and_then(read_cache) {
                    return Ok((rows, 0.0, true));
                }
                let start = Instant::now();
                let rows = match ctx.evaluate(cell) {
                    Ok(rows) => rows,
                    Err(e) => ctx.masked_rows(cell, e.to_string(), columns.len()),
                };
                if let Some(p) = &path {
                    if rows.iter().all(|r| r.mask.is_none()) {
                        write_cache(p, &rows)?;
                    }
                }
                Ok((rows, start.elapsed().as_secs_f64(), false))
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut timing = Vec::with_capacity(grid_cells.len());
    let mut cache_hits = 0;
    for o in outcomes {
        let (r, t, hit) = o?;
        rows.extend(r);
        timing.push(t);
        cache_hits += hit as usize;
    }

    let fit = match (&config.task, config.polariton.as_ref().and_then(|p| p.data.as_ref())) {
        (Task::Polariton, Some(path)) => Some(fit_from_file(config, path)?),
        _ => None,
    };
    let table = SweepTable { schema_version: SCHEMA_VERSION, task: config.task, axes, columns, units, rows, spots: None, fit };
    Ok(SweepResult { table, timing, cache_hits })
}

/// Fits a peak file against the circuit's 0-3 dispersion at the first drive frequency.
fn fit_from_file(config: &RunConfig, path: &Path) -> Result<PolaritonFit> {
    let data = parse_peak_file(&std::fs::read_to_string(path)?)?;
    let cavity: CavityParams = config.cavity.unwrap_or_default();
    let lo = data.iter().map(|p| p.phi_dc).fold(f64::INFINITY, f64::min) - 0.01;
    let hi = data.iter().map(|p| p.phi_dc).fold(f64::NEG_INFINITY, f64::max) + 0.01;
    let params = config.circuit.with_levels(config.circuit.n_levels.max(4));
    let curve = CubicSpline::tabulate(lo, hi, 201, |phi| Ok(diagonalize_static(&params, FluxBias::new(phi))?.transition(0, 3)))?;
    let omega = config.grid.omega.values()[0];
    fit_polariton(&data, &cavity, &curve, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{solve_floquet, SambeConfig};
    use crate::sweep::{parse_config, Axis};

    fn floquet_config() -> RunConfig {
        let mut c = RunConfig { task: Task::Floquet, ..RunConfig::default() };
        c.sambe = SambeConfig::new(4, 6).unchecked();
        c.grid.phi_dc = Axis::Values(vec![0.45, 0.5]);
        c.grid.xi = Axis::Values(vec![0.0, 0.03]);
        c.grid.omega = Axis::single(0.4);
        c
    }

    #[test]
    fn single_cell_matches_direct_solve() {
        let mut c = floquet_config();
        c.grid.phi_dc = Axis::single(0.45);
        c.grid.xi = Axis::single(0.03);
        let table = run_sweep(&c).unwrap().table;
        assert_eq!(table.rows.len(), 1);
        let sol = solve_floquet(&c.circuit, &DriveParams::new(0.45, 0.03, 0.4), &c.sambe).unwrap();
        let col = table.column("eps01").unwrap();
        assert_eq!(table.rows[0].values[col], Some(sol.eps01_folded()));
        for (i, e) in sol.quasienergies.iter().enumerate() {
            assert_eq!(table.rows[0].values[i], Some(*e));
        }
    }

    #[test]
    fn rows_follow_grid_order_for_any_worker_count() {
        let mut c = floquet_config();
        let one = run_sweep(&c).unwrap().table;
        c.workers = 4;
        let four = run_sweep(&c).unwrap().table;
        assert_eq!(one, four);
        let coords: Vec<_> = one.rows.iter().map(|r| (r.coords[0], r.coords[1])).collect();
        assert_eq!(coords, vec![(0.45, 0.0), (0.45, 0.03), (0.5, 0.0), (0.5, 0.03)]);
    }

    #[test]
    fn rerun_reads_cells_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = floquet_config();
        c.output = Some(dir.path().to_path_buf());
        let first = run_sweep(&c).unwrap();
        assert_eq!(first.cache_hits, 0);
        // Drop one cell to mimic an interrupted run.
        let victim = std::fs::read_dir(cache_dir(dir.path())).unwrap().next().unwrap().unwrap().path();
        std::fs::remove_file(victim).unwrap();
        let second = run_sweep(&c).unwrap();
        assert_eq!(second.cache_hits, 3);
        assert_eq!(first.table, second.table);
    }

    #[test]
    fn bad_cells_are_masked() {
        let mut c = floquet_config();
        c.sambe = SambeConfig::new(4, 2).unchecked();
        c.grid.xi = Axis::Values(vec![0.0, 0.6]);
        let table = run_sweep(&c).unwrap().table;
        assert_eq!(table.rows.len(), 4);
        for r in &table.rows {
            if r.mask.is_some() {
                assert!(r.values.iter().all(Option::is_none));
            }
        }
    }

    #[test]
    fn static_task_uses_flux_axis_only() {
        let c = parse_config("task = \"static-spectrum\"\n[grid]\nphi_dc = [0.5]\n").unwrap();
        let table = run_sweep(&c).unwrap().table;
        assert_eq!(table.axes, vec!["phi_dc"]);
        let w = table.column("w01").unwrap();
        assert!((table.rows[0].values[w].unwrap() - 0.7220169975783).abs() < 1e-9);
    }
}
