use super::{
    edge_memberships, Constraint, EdgeId, EnvironmentGraph, PathRecord, TaskSpec, VertexId,
};
use crate::error::{Error, Result};

/// All simple start-goal paths, in lexicographic edge-id order.
///
/// Counting these is #P-hard in general, so the search aborts with
/// [`Error::InstanceTooLarge`] once more than `max_count` paths are found.
/// Intended as a ground-truth oracle on small graphs.
pub fn enumerate_paths(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
    task: TaskSpec,
    max_count: usize,
) -> Result<Vec<PathRecord>> {
    for v in [task.start, task.goal] {
        if !graph.contains_vertex(v) {
            return Err(Error::UnknownVertex(v));
        }
    }
    let membership = edge_memberships(graph, constraints)?;
    let mut search = Search {
        graph,
        membership: &membership,
        goal: task.goal,
        max_count,
        visited: vec![false; graph.vertex_count()],
        edges: Vec::new(),
        phi: vec![0; constraints.len()],
        out: Vec::new(),
    };
    search.visited[task.start.index()] = true;
    search.extend(task.start, 0.0)?;
    Ok(search.out)
}

struct Search<'a> {
    graph: &'a EnvironmentGraph,
    membership: &'a [Vec<u32>],
    goal: VertexId,
    max_count: usize,
    visited: Vec<bool>,
    edges: Vec<EdgeId>,
    phi: Vec<u32>,
    out: Vec<PathRecord>,
}

impl Search<'_> {
    fn extend(&mut self, v: VertexId, time: f64) -> Result<()> {
        if v == self.goal {
            if self.out.len() == self.max_count {
                return Err(Error::InstanceTooLarge {
                    limit: self.max_count,
                });
            }
            self.out.push(PathRecord {
                edge_ids: self.edges.clone(),
                violations: self.phi.clone(),
                time,
            });
            return Ok(());
        }
        let graph = self.graph;
        for &eid in graph.out_edges(v) {
            let e = &graph.edges()[eid.index()];
            if self.visited[e.head.index()] {
                continue;
            }
            self.visited[e.head.index()] = true;
            self.edges.push(eid);
            for &i in &self.membership[eid.index()] {
                self.phi[i as usize] += 1;
            }
            let result = self.extend(e.head, time + e.time);
            for &i in &self.membership[eid.index()] {
                self.phi[i as usize] -= 1;
            }
            self.edges.pop();
            self.visited[e.head.index()] = false;
            result?;
        }
        Ok(())
    }
}
