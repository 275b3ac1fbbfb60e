use std::path::Path;
use std::process::{Command, Output};

fn ff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ff"))
        .current_dir(dir)
        .env_remove("FF_WORKERS")
        .args(args)
        .output()
        .expect("ff runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn static_spectrum_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "[grid]\nphi_dc = { start = 0.45, stop = 0.55, num = 5 }\n");
    let out = ff(dir.path(), &["static-spectrum", "--config", "run.toml", "--out", "res"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/static-spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5 + 2);
    assert!(csv.lines().next().unwrap().starts_with("phi_dc,e0,"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "[grid]\nphi_dc = [0.5]\nxii = [0.1]\n");
    let out = ff(dir.path(), &["floquet", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("`xi`"), "{err}");

    let out = ff(dir.path(), &["floquet", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn task_override_revalidates_sections() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "task = \"floquet\"\n");
    let out = ff(dir.path(), &["spectroscopy", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[probe]"));
}

#[test]
fn refuses_to_overwrite_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "[grid]\nphi_dc = [0.5]\n");
    let args = ["static-spectrum", "--config", "run.toml", "--format", "json"];
    assert_eq!(ff(dir.path(), &args).status.code(), Some(0));
    let again = ff(dir.path(), &args);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--overwrite"));
    let mut forced = args.to_vec();
    forced.push("--overwrite");
    assert_eq!(ff(dir.path(), &forced).status.code(), Some(0));
    assert!(dir.path().join("output/static-spectrum.json").exists());
}

#[test]
fn masked_cells_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // The 0-1 beat aliases at 1 ns sampling away from half flux.
    write(
        dir.path(),
        "run.toml",
        "[sambe]\nn_levels = 4\nsideband_cutoff = 6\n[grid]\nphi_dc = [0.45, 0.5]\n[ramsey]\nomega0 = 0.7\n",
    );
    let out = ff(dir.path(), &["ramsey", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("output/ramsey.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("under-sampled"));
    assert!(rows[1].ends_with(','));
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "[sambe]\nn_levels = 4\nsideband_cutoff = 6\n[grid]\nxi = [0.0, 0.02, 0.04]\n");
    let run = |workers: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_ff"))
            .current_dir(dir.path())
            .env("FF_WORKERS", workers)
            .args(["floquet", "--config", "run.toml", "--out", out, "--format", "plotdata"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        std::fs::read(dir.path().join(out).join("floquet.plot.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("3", "b"));
}
