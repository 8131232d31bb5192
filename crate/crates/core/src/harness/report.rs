//! Structured experiment reports and artifact writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::diagnostics::{write_energy_csv, EnergyRecord};
use crate::error::HarnessError;
use crate::snapshot::Snapshot;
use crate::stepper::TrajectoryLog;

/// One pass/fail line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Soft verdicts are reported but do not fail the experiment.
    pub soft: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
            soft: false,
        }
    }

    pub fn soft(mut self) -> Self {
        self.soft = true;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub runtime_seconds: f64,
    pub metrics: Map<String, Value>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            runtime_seconds: 0.0,
            metrics: Map::new(),
            verdicts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.into(), v);
    }

    pub fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    /// True when every hard verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed || v.soft)
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts
            .iter()
            .filter(|v| !v.passed && !v.soft)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Write `<dir>/<experiment>.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.experiment));
        fs::write(&path, self.to_json())?;
        Ok(path)
    }
}

/// Energy CSV for a list of records.
pub fn write_energy(
    dir: &Path,
    name: &str,
    records: &[EnergyRecord],
) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    write_energy_csv(std::io::BufWriter::new(file), records)?;
    Ok(path)
}

/// Energy CSV plus one binary snapshot per kept state.
pub fn write_trajectory(dir: &Path, prefix: &str, log: &TrajectoryLog) -> Result<(), HarnessError> {
    write_energy(dir, &format!("{prefix}energy.csv"), &log.records)?;
    for (i, (t, state)) in log.snapshots.iter().enumerate() {
        let path = dir.join(format!("{prefix}snapshot_{i:05}.bin"));
        let file = fs::File::create(path)?;
        Snapshot::from_state(state, *t).write_to(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_failures_do_not_fail() {
        let mut r = ExperimentReport::new("x", "h", 0);
        r.verdict(Verdict::new("a", true, ""));
        r.verdict(Verdict::new("b", false, "").soft());
        assert!(r.passed());
        r.verdict(Verdict::new("c", false, ""));
        assert!(!r.passed());
        assert_eq!(r.failures().len(), 1);
        assert!(r.to_json().contains("\"config_hash\": \"h\""));
    }
}
