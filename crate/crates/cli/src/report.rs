use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const REPORT: &str = "report.json";

/// Outcome of one check. A `null` tolerance marks a boolean or purely diagnostic entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub residual: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn within(residual: f64, tolerance: f64) -> Self {
        Check {
            residual,
            tolerance: Some(tolerance),
            pass: residual <= tolerance,
        }
    }

    pub fn flag(residual: f64, pass: bool) -> Self {
        Check {
            residual,
            tolerance: None,
            pass,
        }
    }

    pub fn diagnostic(residual: f64) -> Self {
        Check::flag(residual, true)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub checks: BTreeMap<String, Check>,
    pub files: Vec<PathBuf>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn insert(&mut self, name: impl Into<String>, check: Check) {
        let name = name.into();
        let previous = self.checks.insert(name.clone(), check);
        assert!(previous.is_none(), "check {name} recorded twice");
    }

    pub fn all_pass(&self) -> bool {
        self.checks.values().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, c)| !c.pass).map(|(k, _)| k.as_str()).collect()
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(REPORT);
        let mut text = serde_json::to_string_pretty(&self.checks).expect("report serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }
}
