//! Scenario documents: graph, constraints, tasks and optional render geometry.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    Constraint, EdgeId, EnvironmentGraph, TaskSpec, ValidationReport, WeightVector,
};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintShape {
    pub constraint_id: u32,
    pub color: String,
    pub polygon: Polygon,
    /// Travel direction for roads, as a unit vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Point>,
}

/// Geometry used only for drawing; the planner never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderInfo {
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size: Option<f64>,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
    #[serde(default)]
    pub constraints: Vec<ConstraintShape>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default = "default_schema_version")]
    schema_version: u32,
    #[serde(flatten)]
    graph: EnvironmentGraph,
    constraints: Vec<Constraint>,
    tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    render: Option<RenderInfo>,
}

fn default_schema_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: EnvironmentGraph,
    pub constraints: Vec<Constraint>,
    pub tasks: Vec<TaskSpec>,
    pub render: Option<RenderInfo>,
}

impl Scenario {
    /// Assembles and validates a scenario.
    pub fn new(
        graph: EnvironmentGraph,
        constraints: Vec<Constraint>,
        tasks: Vec<TaskSpec>,
        render: Option<RenderInfo>,
    ) -> Result<Self> {
        let scenario = Self {
            graph,
            constraints,
            tasks,
            render,
        };
        scenario.validate().into_result()?;
        Ok(scenario)
    }

    pub fn name(&self) -> &str {
        self.graph.name()
    }

    pub fn dim(&self) -> usize {
        self.constraints.len()
    }

    pub fn task(&self, index: usize) -> Result<TaskSpec> {
        self.tasks
            .get(index)
            .copied()
            .ok_or_else(|| Error::Config(format!("scenario has no task {index}")))
    }

    /// The hidden weight vector, when every constraint carries one.
    pub fn true_weights(&self) -> Option<WeightVector> {
        self.constraints
            .iter()
            .map(|c| c.true_weight)
            .collect::<Option<Vec<_>>>()
            .map(WeightVector)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = self.graph.validate();
        let m = self.graph.edge_count();
        let mut min_extra = vec![0.0f64; m];
        for (i, c) in self.constraints.iter().enumerate() {
            if c.id as usize != i {
                report.push(format!(
                    "constraint ids must be dense: position {i} holds {}",
                    c.id
                ));
            }
            if c.edge_ids.is_empty() {
                report.push(format!("constraint {} has no edges", c.id));
            }
            if !(c.weight_lo.is_finite() && c.weight_hi.is_finite()) || c.weight_lo > c.weight_hi {
                report.push(format!(
                    "constraint {} has invalid weight interval [{}, {}]",
                    c.id, c.weight_lo, c.weight_hi
                ));
            }
            if let Some(w) = c.true_weight {
                if !(c.weight_lo..=c.weight_hi).contains(&w) {
                    report.push(format!(
                        "constraint {} true weight {w} outside its interval",
                        c.id
                    ));
                }
            }
            let mut seen = Vec::with_capacity(c.edge_ids.len());
            for &e in &c.edge_ids {
                if e.index() >= m {
                    report.push(format!("constraint {} references unknown edge {e}", c.id));
                } else if seen.contains(&e) {
                    report.push(format!("constraint {} lists edge {e} twice", c.id));
                } else {
                    seen.push(e);
                    min_extra[e.index()] += c.weight_lo;
                }
            }
        }
        for (e, extra) in self.graph.edges().iter().zip(&min_extra) {
            if e.time + extra < 0.0 {
                report.push(format!(
                    "edge {} can reach negative combined cost {} at the lower weight corner",
                    e.id,
                    e.time + extra
                ));
            }
        }
        if self.tasks.is_empty() {
            report.push("scenario has no tasks");
        }
        for t in &self.tasks {
            if !self.graph.contains_vertex(t.start) || !self.graph.contains_vertex(t.goal) {
                report.push(format!(
                    "task {} -> {} references unknown vertex",
                    t.start, t.goal
                ));
            } else if t.start == t.goal {
                report.push(format!("task start equals goal ({})", t.start));
            }
        }
        report
    }

    /// Edges belonging to constraint `id`, for callers that only hold ids.
    pub fn constraint_edges(&self, id: u32) -> Option<&[EdgeId]> {
        self.constraints
            .get(id as usize)
            .map(|c| c.edge_ids.as_slice())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Scenario::new(file.graph, file.constraints, file.tasks, file.render)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_value(value)?;
        Scenario::new(file.graph, file.constraints, file.tasks, file.render)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("scenario serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }

    fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            schema_version: SCENARIO_SCHEMA_VERSION,
            graph: self.graph.clone(),
            constraints: self.constraints.clone(),
            tasks: self.tasks.clone(),
            render: self.render.clone(),
        }
    }
}
