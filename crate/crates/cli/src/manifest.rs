//! Run manifests: a scenario plus the artifacts to produce.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trailer_lab_core::sim::paths;
use trailer_lab_core::sim::SimScenario;

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    /// `trace.csv`
    TraceCsv,
    /// `trace.json`
    TraceJson,
    /// `report.json`
    ReportJson,
    /// `schedule.json` and `gains.csv`
    ScheduleJson,
    /// `roa.csv` and `roa.json`, with the scenario as the base
    RoaCsv,
}

pub fn default_outputs() -> Vec<Artifact> {
    vec![Artifact::TraceCsv, Artifact::TraceJson, Artifact::ReportJson]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: SimScenario,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Artifact>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(scenario: SimScenario) -> Self {
        Self { scenario, outputs: default_outputs(), out_dir: None }
    }

    /// Parses either a full manifest (an object with a `scenario` key) or a
    /// bare scenario.
    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("scenario").is_some() {
            Ok(serde_json::from_value(value)?)
        } else {
            Ok(Self::new(serde_json::from_value(value)?))
        }
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Straight,
    Eight,
    Parking,
    Roa,
}

impl Preset {
    pub fn scenario(self) -> SimScenario {
        match self {
            Preset::Straight => paths::straight_line_scenario(),
            Preset::Eight => paths::eight_scenario(),
            Preset::Parking => paths::parking_scenario(),
            Preset::Roa => paths::roa_base_scenario(),
        }
    }
}
