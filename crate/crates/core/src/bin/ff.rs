//! `ff`: run a sweep task from a TOML config and export the table.
//!
//! Exit codes: 0 success, 1 config error, 2 some cells masked, 3 fatal.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use ff_core::sweep::{export_table, parse_config_as, run_sweep, Format, Task};
use ff_core::Error;

#[derive(Parser, Debug)]
#[command(name = "ff", version, about = "Floquet fluxonium sweeps")]
struct Cli {
    /// Task to run; overrides `task` in the config.
    #[arg(value_parser = parse_task)]
    task: Task,
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long, env = "FF_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Replace existing export files.
    #[arg(long)]
    overwrite: bool,
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Task::ALL.iter().map(Task::name).collect();
        format!("unknown task `{s}`; expected one of {}", names.join(", "))
    })
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FATAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ff: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut config = match parse_config_as(&text, Some(cli.task)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ff: {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(out) = cli.out {
        config.output = Some(out);
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("ff: --workers must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        config.workers = w;
    }
    let out = config.output.get_or_insert_with(|| PathBuf::from("output")).clone();

    let start = Instant::now();
    let result = match run_sweep(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("ff: {e}");
            return ExitCode::from(EXIT_FATAL);
        }
    };
    let path = match export_table(&result.table, &out, cli.format, cli.overwrite) {
        Ok(p) => p,
        Err(e @ Error::InvalidParams(_)) => {
            eprintln!("ff: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("ff: {e}");
            return ExitCode::from(EXIT_FATAL);
        }
    };

    let masked = result.table.masked();
    eprintln!(
        "ff: {} rows ({} masked, {} cells cached) in {:.6} s -> {}",
        result.table.rows.len(),
        masked,
        result.cache_hits,
        start.elapsed().as_secs_f64(),
        path.display()
    );
    if let Some(spots) = &result.table.spots {
        for s in spots {
            eprintln!("ff: sweet spot xi = {:.6}, omega = {:.6} GHz", s.xi, s.omega);
        }
    }
    if let Some(fit) = &result.table.fit {
        eprintln!("ff: polariton fit rms residual {:.6e} GHz", fit.residual);
    }
    if masked > 0 {
        for r in result.table.rows.iter().filter(|r| r.mask.is_some()).take(5) {
            eprintln!("ff: masked {:?}: {}", r.coords, r.mask.as_deref().unwrap_or(""));
        }
        return ExitCode::from(EXIT_PARTIAL);
    }
    ExitCode::SUCCESS
}
