use ff_core::decoherence::{find_sweet_spots, NoiseModel, SweetSpotGrid, SweetSpotKind};
use ff_core::floquet::SambeConfig;
use ff_core::sweep::{export_table, import_json, parse_config, render, run_sweep, Format, Task};

/// Required sections per task; everything else defaults.
fn minimal(task: Task) -> String {
    let mut text = format!("task = \"{}\"\n[sambe]\nn_levels = 4\nsideband_cutoff = 6\n", task.name());
    match task {
        Task::Polariton => text += "[cavity]\n",
        Task::Spectroscopy => text += "[probe]\nfreqs = { start = 0.5, stop = 1.0, num = 6 }\n",
        Task::Sweetspot => text += "[grid]\nphi_dc = [0.48, 0.5, 0.52]\n",
        _ => {}
    }
    text
}

#[test]
fn every_task_runs_from_defaults() {
    for task in Task::ALL {
        let config = parse_config(&minimal(task)).unwrap_or_else(|e| panic!("{}: {e}", task.name()));
        let table = run_sweep(&config).unwrap_or_else(|e| panic!("{}: {e}", task.name())).table;
        let expected = if task == Task::Spectroscopy { 6 } else if task == Task::Sweetspot { 3 } else { 1 };
        assert_eq!(table.rows.len(), expected, "{}", task.name());
        assert_eq!(table.masked(), 0, "{}: {:?}", task.name(), table.rows);
        assert!(table.rows.iter().all(|r| r.values.len() == table.columns.len()));
    }
}

#[test]
fn exports_have_grid_rows_and_reimport() {
    let config = parse_config(&format!(
        "{}[grid]\nphi_dc = [0.45, 0.5]\nxi = [0.0, 0.03]\n",
        minimal(Task::Coherence)
    ))
    .unwrap();
    let table = run_sweep(&config).unwrap().table;
    let dir = tempfile::tempdir().unwrap();
    let csv = export_table(&table, dir.path(), Format::Csv, false).unwrap();
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 4 + 2);
    let json = export_table(&table, dir.path(), Format::Json, false).unwrap();
    assert_eq!(import_json(&std::fs::read_to_string(json).unwrap()).unwrap(), table);
    let plot = render(&table, Format::Plotdata).unwrap();
    assert!(plot.starts_with("x,y,value,series\n"));
}

/// The T2R maximum of a coherence sweep over (xi, Omega) sits at the double sweet spot.
#[test]
fn coherence_maximum_matches_double_sweet_spot() {
    let text = r#"
task = "coherence"
workers = 4
[sambe]
n_levels = 5
sideband_cutoff = 15
[grid]
phi_dc = [0.451]
xi = { start = 0.065, stop = 0.105, num = 9 }
omega = { start = 0.73, stop = 0.82, num = 10 }
"#;
    let config = parse_config(text).unwrap();
    let table = run_sweep(&config).unwrap().table;
    let t2r = table.column("t2r").unwrap();
    let best = table
        .rows
        .iter()
        .filter(|r| r.mask.is_none())
        .max_by(|a, b| a.values[t2r].unwrap().total_cmp(&b.values[t2r].unwrap()))
        .unwrap();

    let grid = SweetSpotGrid { phi_dc: vec![0.451], xi: vec![0.075, 0.095], omega: vec![0.74, 0.80] };
    let report = find_sweet_spots(&config.circuit, &NoiseModel::default(), &grid, &SambeConfig::new(5, 15), 1e-4).unwrap();
    let spot = report.of_kind(SweetSpotKind::Double).next().expect("double spot");
    let (dxi, dom) = (0.005, 0.01);
    assert!((best.coords[1] - spot.xi).abs() <= dxi, "best {:?} vs spot {spot:?}", best.coords);
    assert!((best.coords[2] - spot.omega).abs() <= dom, "best {:?} vs spot {spot:?}", best.coords);
}

#[test]
fn polariton_task_fits_peak_file() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = dir.path().join("peaks.txt");
    let mut body = String::from("# phi_dc freq_ghz\n");
    for i in 0..=40 {
        let phi = 0.28 + 0.001 * i as f64;
        // two branches of an avoided crossing with the 0-3 line
        let w3 = 7.32 - 6.6 * (phi - 0.30);
        let mid = 0.5 * (w3 + 7.30);
        let half = (0.25 * (w3 - 7.30) * (w3 - 7.30) + 0.013f64.powi(2)).sqrt();
        body += &format!("{phi} {}\n{phi} {}\n", mid - half, mid + half);
    }
    std::fs::write(&peaks, body).unwrap();
    let text = format!(
        "{}[grid]\nphi_dc = [0.30]\nomega = [0.2]\n[polariton]\ndata = \"{}\"\n",
        minimal(Task::Polariton),
        peaks.display()
    );
    let config = parse_config(&text).unwrap();
    let table = run_sweep(&config).unwrap().table;
    let fit = table.fit.expect("fit");
    assert!(fit.g(0) > 0.005 && fit.g(0) < 0.03, "{fit:?}");
}
