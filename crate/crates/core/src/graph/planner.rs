use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{
    dot_violations, edge_memberships, Constraint, EdgeId, EnvironmentGraph, PathRecord, TaskSpec,
    VertexId, WeightVector,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    cost: f64,
    time: f64,
    vertex: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.time.total_cmp(&self.time))
            .then(other.vertex.cmp(&self.vertex))
    }
}

/// Label-setting shortest-path search under the combined cost `t(e) + w(e)`.
///
/// Labels carry the full violation vector so that a label's cost is exactly
/// `path_cost` of the path it represents. Ties on cost are broken by lower
/// total time, then by the lexicographically smallest edge-id sequence, which
/// makes the output a deterministic function of the weight.
///
/// Holds scratch buffers; reuse one planner across many weight samples.
#[derive(Clone)]
pub struct Planner<'g> {
    graph: &'g EnvironmentGraph,
    membership: Vec<Vec<u32>>,
    dim: usize,
    dist: Vec<f64>,
    time: Vec<f64>,
    pred: Vec<Option<EdgeId>>,
    settled: Vec<bool>,
    phi: Vec<u32>,
    scratch: Vec<u32>,
    heap: BinaryHeap<HeapEntry>,
}

impl<'g> Planner<'g> {
    pub fn new(graph: &'g EnvironmentGraph, constraints: &[Constraint]) -> Result<Self> {
        let n = graph.vertex_count();
        let dim = constraints.len();
        Ok(Self {
            graph,
            membership: edge_memberships(graph, constraints)?,
            dim,
            dist: vec![f64::INFINITY; n],
            time: vec![f64::INFINITY; n],
            pred: vec![None; n],
            settled: vec![false; n],
            phi: vec![0; n * dim],
            scratch: vec![0; dim],
            heap: BinaryHeap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fails on the first edge whose combined cost is negative under `w`.
    pub fn check_weights(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: w.len(),
            });
        }
        for e in self.graph.edges() {
            let members = &self.membership[e.id.index()];
            if members.is_empty() {
                continue;
            }
            let cost = e.time + members.iter().map(|&i| w[i as usize]).sum::<f64>();
            if cost < 0.0 {
                return Err(Error::NegativeEdgeCost {
                    edge: e.id,
                    cost,
                    constraints: members.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn solve(&mut self, w: &WeightVector, task: TaskSpec) -> Result<PathRecord> {
        self.solve_slice(w.as_slice(), task)
    }

    pub fn solve_slice(&mut self, w: &[f64], task: TaskSpec) -> Result<PathRecord> {
        self.check_weights(w)?;
        for v in [task.start, task.goal] {
            if !self.graph.contains_vertex(v) {
                return Err(Error::UnknownVertex(v));
            }
        }
        if task.start == task.goal {
            return Err(Error::Config(format!(
                "task start equals goal ({})",
                task.start
            )));
        }
        let d = self.dim;
        self.dist.fill(f64::INFINITY);
        self.time.fill(f64::INFINITY);
        self.pred.fill(None);
        self.settled.fill(false);
        self.heap.clear();

        let s = task.start.index();
        self.dist[s] = 0.0;
        self.time[s] = 0.0;
        self.phi[s * d..(s + 1) * d].fill(0);
        self.heap.push(HeapEntry {
            cost: 0.0,
            time: 0.0,
            vertex: s as u32,
        });

        let goal = task.goal.index();
        while let Some(entry) = self.heap.pop() {
            let v = entry.vertex as usize;
            if self.settled[v]
                || entry.cost.to_bits() != self.dist[v].to_bits()
                || entry.time.to_bits() != self.time[v].to_bits()
            {
                continue;
            }
            self.settled[v] = true;
            if v == goal {
                break;
            }
            let graph = self.graph;
            for &eid in graph.out_edges(VertexId(v as u32)) {
                let e = &graph.edges()[eid.index()];
                let u = e.head.index();
                if self.settled[u] {
                    continue;
                }
                self.scratch.copy_from_slice(&self.phi[v * d..(v + 1) * d]);
                for &i in &self.membership[eid.index()] {
                    self.scratch[i as usize] += 1;
                }
                let time = self.time[v] + e.time;
                let cost = dot_violations(&self.scratch, w) + time;
                let better = match cost
                    .total_cmp(&self.dist[u])
                    .then(time.total_cmp(&self.time[u]))
                {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => self.extension_is_lex_smaller(v, eid, u),
                };
                if better {
                    let fresh_key = cost.to_bits() != self.dist[u].to_bits()
                        || time.to_bits() != self.time[u].to_bits();
                    self.dist[u] = cost;
                    self.time[u] = time;
                    self.pred[u] = Some(eid);
                    self.phi[u * d..(u + 1) * d].copy_from_slice(&self.scratch);
                    if fresh_key {
                        self.heap.push(HeapEntry {
                            cost,
                            time,
                            vertex: u as u32,
                        });
                    }
                }
            }
        }

        if !self.settled[goal] {
            return Err(Error::Unreachable {
                start: task.start,
                goal: task.goal,
            });
        }
        Ok(PathRecord {
            edge_ids: self.path_to(goal),
            violations: self.phi[goal * d..(goal + 1) * d].to_vec(),
            time: self.time[goal],
        })
    }

    fn path_to(&self, mut v: usize) -> Vec<EdgeId> {
        let mut out = Vec::new();
        while let Some(e) = self.pred[v] {
            out.push(e);
            v = self.graph.edges()[e.index()].tail.index();
        }
        out.reverse();
        out
    }

    fn extension_is_lex_smaller(&self, v: usize, via: EdgeId, u: usize) -> bool {
        let mut candidate = self.path_to(v);
        candidate.push(via);
        candidate < self.path_to(u)
    }
}

/// Minimum-cost start-goal path under `w`; see [`Planner`] for tie-breaking.
pub fn shortest_path(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
    w: &WeightVector,
    task: TaskSpec,
) -> Result<PathRecord> {
    Planner::new(graph, constraints)?.solve(w, task)
}
