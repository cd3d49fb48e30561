//! CSV and JSON output.
//!
//! The CSV holds one row per axis value and estimator. Floats use Rust's
//! shortest round-trip formatting, so equal results give equal bytes. A
//! disabled bound leaves `crlb_m` empty.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{PointResult, SweepResult};
use crate::io::write_json;
use crate::Result;

pub const CSV_HEADER: &str = "axis,estimator,rmse_m,crlb_m,n_trials";

pub fn csv_string(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &result.points {
        let crlb = p.crlb_m.map(|c| c.to_string()).unwrap_or_default();
        for s in &p.estimators {
            writeln!(out, "{},{},{},{},{}", p.axis, s.estimator, s.rmse_m, crlb, s.n_trials).expect("write to String");
        }
    }
    out
}

/// JSON document: the full configuration (including the seed) and results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub crate_version: String,
    pub config: RunConfig,
    pub points: Vec<PointResult>,
}

impl From<&SweepResult> for ResultDocument {
    fn from(result: &SweepResult) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: result.config.clone(),
            points: result.points.clone(),
        }
    }
}

/// Writes whichever of the two files has a path.
pub fn emit_results(result: &SweepResult, csv: Option<&Path>, json: Option<&Path>) -> Result<()> {
    if let Some(path) = csv {
        std::fs::write(path, csv_string(result))?;
    }
    if let Some(path) = json {
        write_json(path, &ResultDocument::from(result))?;
    }
    Ok(())
}
