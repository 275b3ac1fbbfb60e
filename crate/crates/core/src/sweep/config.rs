//! Run configuration: a sectioned TOML file with every key checked.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::decoherence::NoiseModel;
use crate::error::{Error, Result};
use crate::floquet::SambeConfig;
use crate::polariton::CavityParams;
use crate::spectroscopy::{ProbeParams, RamseyConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    StaticSpectrum,
    Floquet,
    SpectralFunction,
    Polariton,
    Spectroscopy,
    Coherence,
    Sweetspot,
    Ramsey,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::StaticSpectrum,
        Task::Floquet,
        Task::SpectralFunction,
        Task::Polariton,
        Task::Spectroscopy,
        Task::Coherence,
        Task::Sweetspot,
        Task::Ramsey,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::StaticSpectrum => "static-spectrum",
            Task::Floquet => "floquet",
            Task::SpectralFunction => "spectral-function",
            Task::Polariton => "polariton",
            Task::Spectroscopy => "spectroscopy",
            Task::Coherence => "coherence",
            Task::Sweetspot => "sweetspot",
            Task::Ramsey => "ramsey",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Whether the task uses the drive axes.
    pub fn is_driven(&self) -> bool {
        !matches!(self, Task::StaticSpectrum)
    }
}

/// Grid axis: explicit values or an inclusive linear range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, num: usize },
}

impl Axis {
    pub fn single(x: f64) -> Self {
        Axis::Values(vec![x])
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Values(v) => v.len(),
            Axis::Range { num, .. } => *num,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub phi_dc: Axis,
    pub xi: Axis,
    pub omega: Axis,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { phi_dc: Axis::single(0.5), xi: Axis::single(0.0), omega: Axis::single(0.4) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "default_rabi")]
    pub rabi: f64,
    #[serde(default = "default_linewidth")]
    pub linewidth: f64,
    /// Probe frequencies, GHz.
    pub freqs: Axis,
}

fn default_rabi() -> f64 {
    ProbeParams::default().rabi
}

fn default_linewidth() -> f64 {
    ProbeParams::default().linewidth
}

impl ProbeSection {
    pub fn params(&self) -> ProbeParams {
        ProbeParams { omega_p: 0.0, rabi: self.rabi, linewidth: self.linewidth }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolaritonSection {
    /// Peak file to fit, columns `phi_dc freq_ghz [sigma_ghz]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub workers: usize,
    pub circuit: CircuitParams,
    pub sambe: SambeConfig,
    pub grid: GridSection,
    pub noise: NoiseModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramsey: Option<RamseyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polariton: Option<PolaritonSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::default(),
            output: None,
            workers: 1,
            circuit: CircuitParams::default(),
            sambe: SambeConfig::default(),
            grid: GridSection::default(),
            noise: NoiseModel::default(),
            cavity: None,
            probe: None,
            ramsey: None,
            polariton: None,
        }
    }
}

/// Keys accepted in each section, for suggestions on typos.
const TOP_KEYS: &[&str] =
    &["task", "output", "workers", "circuit", "sambe", "grid", "noise", "cavity", "probe", "ramsey", "polariton"];
const SECTION_KEYS: &[(&str, &[&str])] = &[
    ("circuit", &["e_c", "e_j", "e_l", "basis_dim", "n_levels"]),
    ("sambe", &["n_levels", "sideband_cutoff", "check_convergence"]),
    ("grid", &["phi_dc", "xi", "omega"]),
    ("noise", &["a_dc", "a_ac", "tan_delta_c", "temperature", "omega_ir", "t_m", "excitation_form"]),
    ("cavity", &["omega_c", "g_cap"]),
    ("probe", &["rabi", "linewidth", "freqs"]),
    ("ramsey", &["omega0", "offsets", "window", "step", "t2r_true", "baseline"]),
    ("polariton", &["data"]),
];

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map(|s| s.chars().count()).unwrap_or(0) + 1;
    (line, col)
}

/// Position of `key` in `section` ("" for top level), for validation messages.
fn locate(text: &str, section: &str, key: &str) -> (usize, usize) {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix('[') {
            current = rest.split(']').next().unwrap_or("").trim().to_string();
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return (i + 1, line.len() - t.len() + 1);
                }
            }
        }
    }
    let header = format!("[{section}]");
    for (i, line) in text.lines().enumerate() {
        if line.trim() == header {
            return (i + 1, 1);
        }
    }
    (1, 1)
}

fn nearest(name: &str, candidates: &[&str]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(name, c), *c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 2))
        .min()
        .map(|(_, c)| c.to_string())
}

/// Turns a deserializer error into a positioned config error, naming the nearest valid key
/// for unknown ones.
fn config_error(text: &str, err: toml::de::Error) -> Error {
    let (line, column) = err.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
    let msg = err.message().to_string();
    let message = match msg.strip_prefix("unknown field `") {
        Some(rest) => {
            let name = rest.split('`').next().unwrap_or("");
            // the message lists the accepted keys in backticks after the unknown one
            let expected: Vec<&str> = rest.split('`').skip(1).collect::<Vec<_>>().chunks(2).filter_map(|c| c.get(1).copied()).collect();
            let pool: Vec<&str> = if expected.is_empty() {
                SECTION_KEYS.iter().flat_map(|(_, k)| k.iter().copied()).chain(TOP_KEYS.iter().copied()).collect()
            } else {
                expected
            };
            match nearest(name, &pool) {
                Some(s) => format!("unknown key `{name}`; did you mean `{s}`?"),
                None => format!("unknown key `{name}`; valid keys: {}", pool.join(", ")),
            }
        }
        None => msg,
    };
    Error::Config { line, column, message }
}

impl RunConfig {
    /// Checks values and task requirements; `text` positions the messages.
    pub fn validate_in(&self, text: &str) -> Result<()> {
        let at = |section: &str, key: &str, message: String| {
            let (line, column) = locate(text, section, key);
            Error::Config { line, column, message }
        };
        let wrap = |section: &str, r: Result<()>| {
            r.map_err(|e| {
                let (line, column) = locate(text, section, "");
                Error::Config { line, column, message: format!("[{section}] {e}") }
            })
        };
        wrap("circuit", self.circuit.validate())?;
        wrap("sambe", self.sambe.validate())?;
        wrap("noise", self.noise.validate())?;
        if self.workers == 0 {
            return Err(at("", "workers", "workers must be at least 1".into()));
        }
        for (key, axis) in [("phi_dc", &self.grid.phi_dc), ("xi", &self.grid.xi), ("omega", &self.grid.omega)] {
            if axis.is_empty() {
                return Err(at("grid", key, format!("grid axis `{key}` is empty")));
            }
            if axis.values().iter().any(|v| !v.is_finite()) {
                return Err(at("grid", key, format!("grid axis `{key}` has non-finite values")));
            }
        }
        if self.task.is_driven() && self.grid.omega.values().iter().any(|&w| w <= 0.0) {
            return Err(at("grid", "omega", "drive frequencies must be positive".into()));
        }
        if !self.task.is_driven() && (self.grid.xi.len() > 1 || self.grid.omega.len() > 1) {
            return Err(at(
                "grid",
                "xi",
                "static-spectrum sweeps phi_dc only; give single xi and omega values".into(),
            ));
        }
        if let Some(c) = &self.cavity {
            wrap("cavity", c.validate())?;
        }
        if let Some(r) = &self.ramsey {
            wrap("ramsey", r.validate())?;
        }
        if let Some(p) = &self.probe {
            wrap("probe", p.params().validate())?;
            if p.freqs.is_empty() {
                return Err(at("probe", "freqs", "probe frequency axis is empty".into()));
            }
        }
        match self.task {
            Task::Polariton if self.cavity.is_none() => Err(Error::Config {
                line: 1,
                column: 1,
                message: "task `polariton` needs a [cavity] section (omega_c, g_cap)".into(),
            }),
            Task::Polariton if self.sambe.n_levels < 4 => {
                Err(at("sambe", "n_levels", "task `polariton` needs n_levels >= 4 to include level 3".into()))
            }
            Task::Spectroscopy if self.probe.is_none() => Err(Error::Config {
                line: 1,
                column: 1,
                message: "task `spectroscopy` needs a [probe] section with `freqs`".into(),
            }),
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_in("")
    }

    /// Config with everything that cannot change results removed; hashed for the cell cache.
    pub fn result_key(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.workers = 1;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn ramsey_or_default(&self) -> RamseyConfig {
        self.ramsey.clone().unwrap_or_default()
    }
}

/// Parses and validates a config. Unknown keys are rejected with the nearest valid key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_as(text, None)
}

/// As [`parse_config`], with `task` replacing the file's task before validation.
pub fn parse_config_as(text: &str, task: Option<Task>) -> Result<RunConfig> {
    let mut config: RunConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
    if let Some(t) = task {
        config.task = t;
    }
    config.validate_in(text)?;
    Ok(config)
}

/// Serializes a config in the same format; `parse_config(emit_config(c)) == c`.
pub fn emit_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}
