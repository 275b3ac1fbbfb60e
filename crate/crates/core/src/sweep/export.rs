//! Table writers. Numbers are printed with 17 significant digits so that a reimport is exact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::SweepTable;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    /// Long form (x, y, value, series) for plotting tools.
    Plotdata,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Plotdata => "plot.csv",
        }
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv(table: &SweepTable) -> String {
    let mut out = String::new();
    let header: Vec<&str> = table.axes.iter().chain(&table.columns).map(String::as_str).chain(["flags", "mask"]).collect();
    let _ = writeln!(out, "{}", header.join(","));
    let units: Vec<&str> = table
        .axes
        .iter()
        .map(|a| match a.as_str() {
            "phi_dc" | "xi" => "Phi0",
            _ => "GHz",
        })
        .chain(table.units.iter().map(String::as_str))
        .chain(["", ""])
        .collect();
    let _ = writeln!(out, "{}", units.join(","));
    for row in &table.rows {
        let mut cells: Vec<String> = row.coords.iter().map(|&c| num(c)).collect();
        cells.extend(row.values.iter().map(|&v| opt(v)));
        cells.push(quote(&row.flags.join(";")));
        cells.push(quote(row.mask.as_deref().unwrap_or("")));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Long form: x is the first axis, y the second (empty for one-axis tables), one line per
/// unmasked value. Extra axes are folded into the series name.
fn plotdata(table: &SweepTable) -> String {
    let mut out = String::from("x,y,value,series\n");
    for row in table.rows.iter().filter(|r| r.mask.is_none()) {
        let x = num(row.coords[0]);
        let y = row.coords.get(1).map(|&c| num(c)).unwrap_or_default();
        let suffix: String = table.axes.iter().zip(&row.coords).skip(2).map(|(a, c)| format!("@{a}={c}")).collect();
        for (name, v) in table.columns.iter().zip(&row.values) {
            if let Some(v) = v {
                let _ = writeln!(out, "{x},{y},{},{}", num(*v), quote(&format!("{name}{suffix}")));
            }
        }
    }
    out
}

/// Renders a table in the given format.
pub fn render(table: &SweepTable, format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => csv(table),
        Format::Json => serde_json::to_string_pretty(table)? + "\n",
        Format::Plotdata => plotdata(table),
    })
}

/// Writes `<dir>/<task>.<ext>` and returns its path. An existing file is only replaced
/// when `overwrite` is set.
pub fn export_table(table: &SweepTable, dir: &Path, format: Format, overwrite: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.{}", table.task.name(), format.extension()));
    if path.exists() && !overwrite {
        return Err(Error::invalid(format!("{} exists; pass --overwrite to replace it", path.display())));
    }
    std::fs::write(&path, render(table, format)?)?;
    Ok(path)
}

/// Reads a JSON export back, checking the schema version.
pub fn import_json(text: &str) -> Result<SweepTable> {
    let table: SweepTable = serde_json::from_str(text)?;
    if table.schema_version != super::run::SCHEMA_VERSION {
        return Err(Error::invalid(format!("unsupported schema version {}", table.schema_version)));
    }
    Ok(table)
}
