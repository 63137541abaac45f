//! CSV traces, amplitude tables and the JSON run summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::ovf::fmt_num;
use crate::analysis::{theta_of, AmplitudeMap};
use crate::dynamics::{StepStats, TraceRecord};
use crate::error::{Error, Result};
use crate::geometry::LabeledMesh;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: &str = "t_s,region,mx,my,mz,theta_deg";

pub fn trace_csv_string(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in records {
        for (t, m) in r.t.iter().zip(&r.m) {
            let th = theta_of(*m).map(fmt_num).unwrap_or_else(|| "nan".into());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                fmt_num(*t),
                r.name,
                fmt_num(m[0]),
                fmt_num(m[1]),
                fmt_num(m[2]),
                th
            );
        }
    }
    s
}

pub fn write_trace_csv(records: &[TraceRecord], path: &Path) -> Result<()> {
    fs::write(path, trace_csv_string(records)).map_err(|e| Error::io(path, e))
}

/// Amplitude per magnetic cell: `i,j,k,x_nm,y_nm,region,amplitude`.
pub fn write_amplitude_csv(map: &AmplitudeMap, lm: &LabeledMesh, path: &Path) -> Result<()> {
    let mut s = String::from("i,j,k,x_nm,y_nm,region,amplitude\n");
    let spec = &lm.spec;
    for (idx, l) in lm.labels.iter().enumerate() {
        if !l.is_active() {
            continue;
        }
        let (i, j, k) = spec.coords(idx);
        let _ = writeln!(
            s,
            "{i},{j},{k},{},{},{},{}",
            fmt_num((i as f64 + 0.5) * spec.dx),
            fmt_num((j as f64 + 0.5) * spec.dy),
            l.name(),
            fmt_num(map.values[idx])
        );
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// One executed simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detected: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Scenario-specific numbers (ratios, max θ, ...).
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub steps: StepStats,
    /// Wall-clock seconds (timing field).
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub config: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrated_t_det: Option<f64>,
    pub runs: Vec<RunEntry>,
    pub checks: Vec<Check>,
    pub results: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub all_passed: bool,
    /// Wall-clock seconds for the whole scenario (timing field).
    pub wall_s: f64,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            scenario: cfg.scenario.name().to_string(),
            config: cfg.clone(),
            calibrated_t_det: None,
            runs: Vec::new(),
            checks: Vec::new(),
            results: serde_json::Map::new(),
            error: None,
            all_passed: false,
            wall_s: 0.0,
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn finalize(&mut self) {
        self.all_passed = self.error.is_none() && self.checks.iter().all(|c| c.passed);
    }
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
