//! Request and response payloads. Every response carries `api_version`.

use pathpref_core::graph::{ConstraintKind, TaskSpec};
use pathpref_core::scenario::{Point, RenderInfo};
use pathpref_core::session::{Feedback, SessionConfig, SessionStatus};
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 10;
pub const MAX_SAMPLES: usize = 100_000;

fn default_samples() -> usize {
    pathpref_core::regions::DEFAULT_SAMPLE_COUNT
}

/// `POST /sessions`. Exactly one of `preset` and `scenario` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// A full scenario document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<serde_json::Value>,
    #[serde(default)]
    pub task: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of the region sampler.
    #[serde(default)]
    pub region_seed: u64,
    /// Seed of the session (only the random selector uses it).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathView {
    pub region_id: u32,
    pub edge_ids: Vec<u32>,
    /// Vertex coordinates along the path; empty when the graph is unplaced.
    pub polyline: Vec<Point>,
    pub time: f64,
    /// Per-constraint violation counts.
    pub violations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintView {
    pub id: u32,
    pub kind: ConstraintKind,
    pub color: String,
    pub weight_lo: f64,
    pub weight_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub api_version: u32,
    pub scenario: String,
    pub task: TaskSpec,
    pub start: Option<Point>,
    pub goal: Option<Point>,
    pub constraints: Vec<ConstraintView>,
    pub render: Option<RenderInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub api_version: u32,
    pub id: String,
    pub version: u64,
    pub created_at: u64,
    pub status: SessionStatus,
    /// True when there is nothing to learn, e.g. a single region.
    pub converged: bool,
    pub budget: usize,
    pub region_count: usize,
    pub initial_path: PathView,
    pub render: RenderResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub api_version: u32,
    pub id: String,
    pub version: u64,
    pub iteration: usize,
    pub budget: usize,
    pub current: PathView,
    pub proposed: PathView,
}

/// `POST /sessions/{id}/feedback`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub choice: Feedback,
    /// The version the answer refers to.
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub api_version: u32,
    pub id: String,
    pub version: u64,
    pub iteration: usize,
    pub current_changed: bool,
    pub status: SessionStatus,
    pub current: PathView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestView {
    pub region_id: u32,
    pub probability: f64,
    /// Representative weight of the region, `ŵ_best`.
    pub weight: Vec<f64>,
    pub path: PathView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorItem {
    pub region_id: u32,
    pub probability: f64,
    pub path: PathView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    /// Bayesian posterior over regions.
    Bayes,
    /// Sampled-mass shares (MVR).
    Mass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResponse {
    pub api_version: u32,
    pub id: String,
    pub version: u64,
    pub iteration: usize,
    pub belief: BeliefKind,
    pub region_count: usize,
    /// Highest belief first; ties by region id.
    pub top: Vec<PosteriorItem>,
    pub best: BestView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub api_version: u32,
    pub id: String,
    pub version: u64,
    pub iteration: usize,
    pub status: SessionStatus,
    pub best: BestView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub api_version: u32,
    /// Stable machine-readable code.
    pub error: String,
    pub message: String,
    /// Current version, on conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    /// Final result, when the session is finished.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<FinalResult>,
}
