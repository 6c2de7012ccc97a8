//! Doubly weighted multigraphs: traversal times on edges plus constraint
//! memberships whose weights are latent.
//!
//! Vertex, edge and constraint ids are dense indices assigned at load time;
//! the constraint order fixes the component order of every [`WeightVector`].

mod enumerate;
mod planner;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use enumerate::enumerate_paths;
pub use planner::{shortest_path, Planner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: VertexId,
    pub head: VertexId,
    /// Traversal time in seconds.
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGraph {
    #[serde(default)]
    name: String,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

/// Directed multigraph with per-edge traversal times.
///
/// Construction only checks referential integrity (dense ids, known
/// endpoints). Semantic invariants such as strong connectivity are reported
/// by [`EnvironmentGraph::validate`] so that broken inputs can be diagnosed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct EnvironmentGraph {
    name: String,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<EdgeId>>,
}

impl PartialEq for EnvironmentGraph {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.vertices == other.vertices && self.edges == other.edges
    }
}

impl TryFrom<RawGraph> for EnvironmentGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        EnvironmentGraph::new(raw.name, raw.vertices, raw.edges)
    }
}

impl From<EnvironmentGraph> for RawGraph {
    fn from(g: EnvironmentGraph) -> Self {
        RawGraph {
            name: g.name,
            vertices: g.vertices,
            edges: g.edges,
        }
    }
}

impl EnvironmentGraph {
    pub fn new(name: impl Into<String>, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if v.id.index() != i {
                return Err(Error::Schema(format!(
                    "vertex ids must be dense and ordered: position {i} holds {}",
                    v.id
                )));
            }
        }
        let mut out_edges = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id.index() != i {
                return Err(Error::Schema(format!(
                    "edge ids must be dense and ordered: position {i} holds {}",
                    e.id
                )));
            }
            for v in [e.tail, e.head] {
                if v.index() >= vertices.len() {
                    return Err(Error::UnknownVertex(v));
                }
            }
            out_edges[e.tail.index()].push(e.id);
        }
        Ok(Self {
            name: name.into(),
            vertices,
            edges,
            out_edges,
        })
    }

    /// Builds a graph from `(tail, head, time)` triples over `n` unplaced vertices.
    pub fn from_edges(
        name: impl Into<String>,
        n: usize,
        edges: &[(u32, u32, f64)],
    ) -> Result<Self> {
        let vertices = (0..n as u32)
            .map(|i| Vertex {
                id: VertexId(i),
                x: None,
                y: None,
            })
            .collect();
        let edges = edges
            .iter()
            .enumerate()
            .map(|(i, &(tail, head, time))| Edge {
                id: EdgeId(i as u32),
                tail: VertexId(tail),
                head: VertexId(head),
                time,
            })
            .collect();
        Self::new(name, vertices, edges)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> Result<&Edge> {
        self.edges.get(id.index()).ok_or(Error::UnknownEdge(id))
    }

    /// Outgoing edges of `v`, ordered by edge id.
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v.index()]
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        v.index() < self.vertices.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.vertices.len() < 2 {
            report.push("graph needs at least two vertices");
        }
        for e in &self.edges {
            if e.tail == e.head {
                report.push(format!("self-loop forbidden: {} at {}", e.id, e.tail));
            }
            if !(e.time.is_finite() && e.time > 0.0) {
                report.push(format!(
                    "traverse time of {} must be positive and finite, got {}",
                    e.id, e.time
                ));
            }
        }
        if !self.vertices.is_empty() && !self.is_strongly_connected() {
            report.push("not strongly connected");
        }
        report
    }

    /// Forward and backward reachability from vertex 0.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        let mut reverse = vec![Vec::new(); n];
        for e in &self.edges {
            reverse[e.head.index()].push(e.tail.index());
        }
        let forward: Vec<Vec<usize>> = self
            .out_edges
            .iter()
            .map(|out| {
                out.iter()
                    .map(|&e| self.edges[e.index()].head.index())
                    .collect()
            })
            .collect();
        reaches_all(&forward) && reaches_all(&reverse)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Every violated invariant found by a validation pass; empty means usable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Schema(self.violations.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Avoid,
    SpeedLimit,
    RoadAgainst,
    RoadFollow,
    Generic,
}

impl ConstraintKind {
    /// Rendering color hint.
    pub fn color(self) -> &'static str {
        match self {
            ConstraintKind::Avoid => "red",
            ConstraintKind::SpeedLimit => "yellow",
            ConstraintKind::RoadAgainst | ConstraintKind::RoadFollow => "green",
            ConstraintKind::Generic => "gray",
        }
    }
}

/// An edge subset with a latent weight drawn from `[weight_lo, weight_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: u32,
    pub kind: ConstraintKind,
    pub edge_ids: Vec<EdgeId>,
    pub weight_lo: f64,
    pub weight_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub start: VertexId,
    pub goal: VertexId,
}

/// One weight per constraint, in constraint order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn upper_corner(constraints: &[Constraint]) -> Self {
        WeightVector(constraints.iter().map(|c| c.weight_hi).collect())
    }

    pub fn lower_corner(constraints: &[Constraint]) -> Self {
        WeightVector(constraints.iter().map(|c| c.weight_lo).collect())
    }
}

/// A start-goal path with its feature vector.
///
/// Cost under a weight is always derived via [`path_cost`], never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub edge_ids: Vec<EdgeId>,
    /// Per-constraint count of traversed edges.
    pub violations: Vec<u32>,
    /// Total traversal time in seconds.
    pub time: f64,
}

impl PathRecord {
    /// Builds the record for an edge sequence, checking it is a connected
    /// walk with distinct edges.
    pub fn from_edges(
        graph: &EnvironmentGraph,
        constraints: &[Constraint],
        edge_ids: Vec<EdgeId>,
    ) -> Result<Self> {
        let mut time = 0.0;
        let mut prev_head = None;
        for (k, &id) in edge_ids.iter().enumerate() {
            let e = graph.edge(id)?;
            if let Some(h) = prev_head {
                if h != e.tail {
                    return Err(Error::Config(format!(
                        "edges {} and {id} are not consecutive",
                        edge_ids[k - 1]
                    )));
                }
            }
            if edge_ids[..k].contains(&id) {
                return Err(Error::Config(format!("edge {id} repeated in path")));
            }
            prev_head = Some(e.head);
            time += e.time;
        }
        let violations = violation_vector(graph, constraints, &edge_ids)?;
        Ok(Self {
            edge_ids,
            violations,
            time,
        })
    }

    pub fn vertices(&self, graph: &EnvironmentGraph) -> Vec<VertexId> {
        let mut out = Vec::with_capacity(self.edge_ids.len() + 1);
        for (k, &id) in self.edge_ids.iter().enumerate() {
            let e = &graph.edges()[id.index()];
            if k == 0 {
                out.push(e.tail);
            }
            out.push(e.head);
        }
        out
    }
}

/// Per-edge list of constraint indices containing that edge.
pub fn edge_memberships(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
) -> Result<Vec<Vec<u32>>> {
    let mut membership = vec![Vec::new(); graph.edge_count()];
    for (i, c) in constraints.iter().enumerate() {
        for &e in &c.edge_ids {
            membership
                .get_mut(e.index())
                .ok_or(Error::UnknownEdge(e))?
                .push(i as u32);
        }
    }
    Ok(membership)
}

/// Counts, for each constraint, how many of the path's edges it contains.
pub fn violation_vector(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
    path: &[EdgeId],
) -> Result<Vec<u32>> {
    for &e in path {
        graph.edge(e)?;
    }
    Ok(constraints
        .iter()
        .map(|c| path.iter().filter(|e| c.edge_ids.contains(e)).count() as u32)
        .collect())
}

/// `φ·w` summed in constraint order. Every cost comparison in the crate goes
/// through this so that paths with equal features tie exactly.
#[inline]
pub(crate) fn dot_violations(phi: &[u32], w: &[f64]) -> f64 {
    phi.iter()
        .zip(w)
        .fold(0.0, |acc, (&k, &x)| acc + f64::from(k) * x)
}

/// `C(P) = φ·w + t`.
pub fn path_cost(path: &PathRecord, w: &WeightVector) -> Result<f64> {
    if path.violations.len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: path.violations.len(),
            actual: w.dim(),
        });
    }
    Ok(dot_violations(&path.violations, w.as_slice()) + path.time)
}
