//! Parameter sweeps: TOML run configs, grid execution with caching, and table export.

mod config;
mod export;
mod run;

pub use config::{emit_config, parse_config, parse_config_as, Axis, GridSection, PolaritonSection, ProbeSection, RunConfig, Task};
pub use export::{export_table, import_json, render, Format};
pub use run::{cache_dir, run_sweep, Row, SweepResult, SweepTable, SCHEMA_VERSION, SWEET_TOL};
