//! Synthetic scenario generators and a tagged scenario source for configs.

pub mod geometry;
pub mod grid;
pub mod presets;
pub mod prm;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use grid::{
    build_grid_scenario, CellRect, Coverage, Direction, GridScenario, GridScenarioConfig, ZoneKind,
    ZoneSpec,
};
pub use presets::{preset, preset_names};
pub use prm::{build_prm_scenario, PrmScenario, PrmScenarioConfig, PrmTask};

use crate::error::Result;
use crate::scenario::Scenario;

/// Where a scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ScenarioSource {
    Preset { name: String },
    File { path: PathBuf },
    Grid { config: GridScenarioConfig },
    Prm { config: PrmScenarioConfig },
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Preset { name } => preset(name),
            ScenarioSource::File { path } => Scenario::load(path),
            ScenarioSource::Grid { config } => Ok(build_grid_scenario(config)?.scenario),
            ScenarioSource::Prm { config } => Ok(build_prm_scenario(config)?.scenario),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScenarioSource::Preset { name } => name.clone(),
            ScenarioSource::File { path } => path.display().to_string(),
            ScenarioSource::Grid { config } => config.name.clone(),
            ScenarioSource::Prm { config } => config.name.clone(),
        }
    }
}
