//! Run configuration: JSON schema, presets and conversion to core types.

use std::path::{Path, PathBuf};

use balfuse::filtering::{GapMode, Interval, ObservationPattern};
use balfuse::model::stationary_covariance;
use balfuse::{LtvSystem, MatrixPath, TimeGrid, TimeKind};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub horizon: f64,
    pub step: f64,
    #[serde(default)]
    pub p0: InitialCovariance,
    #[serde(default)]
    pub pattern: PatternConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_replications() -> usize {
    20_000
}

/// Continuous-time model `dx = A x dt + B dw`, `dy = C x dt + D dw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub a: MatrixSpec,
    pub b: MatrixSpec,
    pub c: MatrixSpec,
    pub d: MatrixSpec,
}

/// A constant matrix (list of rows) or one matrix per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Constant(Vec<Vec<f64>>),
    PerNode(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCovariance {
    /// Only `"stationary"` is accepted.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl Default for InitialCovariance {
    fn default() -> Self {
        InitialCovariance::Named("stationary".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    /// Only increments `dy` on observed intervals.
    Dy,
    /// Values `y`, so `Δy` across each gap is known.
    #[default]
    Y,
    /// The signal vanishes on gaps while the noise channel keeps reporting.
    SignalLoss,
}

impl ModeConfig {
    pub const ALL: [ModeConfig; 3] = [ModeConfig::Dy, ModeConfig::Y, ModeConfig::SignalLoss];

    pub fn gap_mode(self) -> GapMode {
        match self {
            ModeConfig::Dy => GapMode::IncrementsOnly,
            ModeConfig::Y => GapMode::ProcessValues,
            ModeConfig::SignalLoss => GapMode::SignalLoss,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeConfig::Dy => "dy",
            ModeConfig::Y => "y",
            ModeConfig::SignalLoss => "signal-loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateConfig {
    Observed,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub start: f64,
    pub end: f64,
    pub state: StateConfig,
}

/// An empty interval list means observed throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub intervals: Vec<IntervalConfig>,
}

pub const PRESETS: [&str; 2] = ["paper-example", "paper-example-coarse"];

fn rows(v: &[&[f64]]) -> MatrixSpec {
    MatrixSpec::Constant(v.iter().map(|r| r.to_vec()).collect())
}

fn example(horizon: f64, step: f64, intervals: Vec<IntervalConfig>) -> RunConfig {
    RunConfig {
        system: SystemConfig {
            n: 2,
            m: 1,
            p: 2,
            a: rows(&[&[0.0, 1.0], &[-0.3, -0.7]]),
            b: rows(&[&[0.0, 0.0], &[1.0, 0.0]]),
            c: rows(&[&[1.0, 0.0]]),
            d: rows(&[&[0.0, 1.0]]),
        },
        horizon,
        step,
        p0: InitialCovariance::default(),
        pattern: PatternConfig {
            mode: ModeConfig::Y,
            intervals,
        },
        seed: 1,
        out: default_out(),
        replications: default_replications(),
    }
}

/// Intervals of lengths 1, 2, ..., 9 with the 1st, 3rd, 5th and 9th observed, cut at `horizon`.
fn odd_pattern(horizon: f64) -> Vec<IntervalConfig> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for i in 1..=9 {
        let end = start + i as f64;
        if start >= horizon {
            break;
        }
        let state = if [1, 3, 5, 9].contains(&i) {
            StateConfig::Observed
        } else {
            StateConfig::Gap
        };
        out.push(IntervalConfig {
            start,
            end: end.min(horizon),
            state,
        });
        start = end;
    }
    out
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    match name {
        "paper-example" => Ok(example(45.0, 0.01, odd_pattern(45.0))),
        "paper-example-coarse" => Ok(example(5.0, 0.05, odd_pattern(5.0))),
        other => Err(CliError::Config {
            field: "preset".into(),
            message: format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")),
        }),
    }
}

fn bad(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn to_matrix(field: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != shape.0 {
        return Err(bad(field, format!("expected {} rows, got {}", shape.0, rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != shape.1 {
            return Err(bad(field, format!("row {i} has {} entries, expected {}", r.len(), shape.1)));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(bad(field, format!("row {i} has a non-finite entry")));
        }
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

fn to_path(field: &str, spec: &MatrixSpec, shape: (usize, usize), nodes: usize) -> Result<MatrixPath, CliError> {
    match spec {
        MatrixSpec::Constant(rows) => Ok(to_matrix(field, rows, shape)?.into()),
        MatrixSpec::PerNode(samples) => {
            if samples.len() != nodes {
                return Err(bad(field, format!("expected {nodes} per-node samples, got {}", samples.len())));
            }
            let mats = samples
                .iter()
                .enumerate()
                .map(|(k, rows)| to_matrix(&format!("{field}[{k}]"), rows, shape))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MatrixPath::Sampled(mats))
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without building the model.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.pattern()?;
        self.system()?;
        if self.replications == 0 {
            return Err(bad("replications", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(bad("step", format!("must be positive, got {}", self.step)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(bad("horizon", format!("must be positive, got {}", self.horizon)));
        }
        TimeGrid::new(0.0, self.horizon, self.step).map_err(|e| bad("horizon", e.to_string()))
    }

    pub fn system(&self) -> Result<LtvSystem, CliError> {
        let grid = self.grid()?;
        let s = &self.system;
        if s.n == 0 || s.m == 0 || s.p == 0 {
            return Err(bad("system", "dimensions n, m, p must be positive"));
        }
        let nodes = grid.nodes();
        let a = to_path("system.a", &s.a, (s.n, s.n), nodes)?;
        let b = to_path("system.b", &s.b, (s.n, s.p), nodes)?;
        let c = to_path("system.c", &s.c, (s.m, s.n), nodes)?;
        let d = to_path("system.d", &s.d, (s.m, s.p), nodes)?;
        let p0 = match &self.p0 {
            InitialCovariance::Named(name) if name == "stationary" => {
                let (MatrixPath::Constant(a0), MatrixPath::Constant(b0)) = (&a, &b) else {
                    return Err(bad("p0", "\"stationary\" needs constant system.a and system.b"));
                };
                stationary_covariance(TimeKind::Continuous, a0, b0).map_err(|e| bad("p0", e.to_string()))?
            }
            InitialCovariance::Named(other) => {
                return Err(bad("p0", format!("expected \"stationary\" or a matrix, got \"{other}\"")))
            }
            InitialCovariance::Matrix(rows) => to_matrix("p0", rows, (s.n, s.n))?,
        };
        LtvSystem::new(TimeKind::Continuous, grid, a, b, c, d, p0).map_err(|e| bad("system", e.to_string()))
    }

    pub fn pattern(&self) -> Result<ObservationPattern, CliError> {
        let h = self.step;
        let mut intervals = Vec::with_capacity(self.pattern.intervals.len());
        for (i, iv) in self.pattern.intervals.iter().enumerate() {
            for (name, t) in [("start", iv.start), ("end", iv.end)] {
                let r = t / h;
                if !t.is_finite() || (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) {
                    return Err(bad(
                        format!("pattern.intervals[{i}].{name}"),
                        format!("{t} is not a multiple of the step {h}"),
                    ));
                }
            }
            intervals.push(match iv.state {
                StateConfig::Observed => Interval::observed(iv.start, iv.end),
                StateConfig::Gap => Interval::gap(iv.start, iv.end),
            });
        }
        let pattern = ObservationPattern::new(self.pattern.mode.gap_mode(), intervals)
            .map_err(|e| bad("pattern.intervals", e.to_string()))?;
        pattern.resolve(&self.grid()?).map_err(|e| bad("pattern.intervals", e.to_string()))?;
        Ok(pattern)
    }
}
