#![allow(dead_code)]

use std::sync::Arc;

use pathpref_core::graph::{
    Constraint, ConstraintKind, EdgeId, EnvironmentGraph, TaskSpec, VertexId,
};
use pathpref_core::problem::LearningProblem;
use pathpref_core::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub graph: EnvironmentGraph,
    pub constraints: Vec<Constraint>,
    pub task: TaskSpec,
}

/// Random strongly connected multigraph: a bidirectional ring plus chords,
/// with a few constraints over random edge subsets.
pub fn random_instance(seed: u64, max_vertices: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=max_vertices);
    let mut edges = Vec::new();
    for v in 0..n as u32 {
        let u = (v + 1) % n as u32;
        edges.push((v, u, rng.random_range(1.0..10.0)));
        edges.push((u, v, rng.random_range(1.0..10.0)));
    }
    for _ in 0..n + n / 2 {
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a != b {
            edges.push((a, b, rng.random_range(1.0..10.0)));
        }
    }
    let graph = EnvironmentGraph::from_edges("random", n, &edges).unwrap();
    let dim = rng.random_range(2..=4);
    let constraints = (0..dim)
        .map(|id| {
            let mut edge_ids: Vec<EdgeId> = (0..edges.len() as u32)
                .filter(|_| rng.random_bool(0.3))
                .map(EdgeId)
                .collect();
            if edge_ids.is_empty() {
                edge_ids.push(EdgeId(rng.random_range(0..edges.len() as u32)));
            }
            Constraint {
                id,
                kind: ConstraintKind::Generic,
                edge_ids,
                weight_lo: 0.0,
                weight_hi: rng.random_range(2.0..8.0),
                true_weight: None,
            }
        })
        .collect();
    Instance {
        graph,
        constraints,
        task: TaskSpec {
            start: VertexId(0),
            goal: VertexId(n as u32 / 2),
        },
    }
}

/// Searches seeds from `from` for an instance whose sampled region count is in `range`.
pub fn problem_with_regions(
    from: u64,
    range: std::ops::RangeInclusive<usize>,
    samples: usize,
) -> (u64, Instance, LearningProblem) {
    for seed in from.. {
        let inst = random_instance(seed, 8);
        let scenario = Scenario::new(
            inst.graph.clone(),
            inst.constraints.clone(),
            vec![inst.task],
            None,
        )
        .unwrap();
        let problem = LearningProblem::build(Arc::new(scenario), 0, samples, seed).unwrap();
        if range.contains(&problem.region_count()) {
            return (seed, inst, problem);
        }
    }
    unreachable!()
}
