//! A sampled learning instance shared by every session on one scenario task.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{dot_violations, path_cost, shortest_path, TaskSpec, WeightVector};
use crate::regions::{sample_regions, RegionId, RegionSet, Side};
use crate::scenario::Scenario;

/// Region set plus the precomputed cost of every canonical path at every
/// sample, and a cache of region classifications per query pair.
///
/// Immutable apart from the cache, so one instance can back many concurrent
/// sessions.
pub struct LearningProblem {
    scenario: Option<Arc<Scenario>>,
    task: Option<TaskSpec>,
    regions: RegionSet,
    /// Region-major: `costs[r * samples + s]`.
    costs: Vec<f64>,
    sides: RwLock<HashMap<(u32, u32), Arc<[Side]>>>,
}

impl std::fmt::Debug for LearningProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LearningProblem")
            .field("task", &self.task)
            .field("regions", &self.regions.len())
            .field("samples", &self.regions.sample_count())
            .finish()
    }
}

impl LearningProblem {
    /// Samples the region set for one task of a scenario.
    pub fn build(
        scenario: Arc<Scenario>,
        task_index: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let task = scenario.task(task_index)?;
        let regions = sample_regions(&scenario.graph, &scenario.constraints, task, samples, seed)?;
        let mut problem = Self::from_regions(regions);
        problem.scenario = Some(scenario);
        problem.task = Some(task);
        Ok(problem)
    }

    /// Wraps a prepared region set with no scenario attached.
    pub fn from_regions(regions: RegionSet) -> Self {
        let n = regions.sample_count();
        let samples = regions.samples();
        let costs = regions
            .regions()
            .par_iter()
            .flat_map_iter(|r| {
                (0..n)
                    .map(move |s| dot_violations(&r.path.violations, samples.row(s)) + r.path.time)
            })
            .collect();
        Self {
            scenario: None,
            task: None,
            regions,
            costs,
            sides: RwLock::new(HashMap::new()),
        }
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn sample_count(&self) -> usize {
        self.regions.sample_count()
    }

    pub fn scenario(&self) -> Option<&Arc<Scenario>> {
        self.scenario.as_ref()
    }

    pub fn task(&self) -> Option<TaskSpec> {
        self.task
    }

    /// Costs of region `r`'s canonical path at every sample.
    pub fn cost_row(&self, r: RegionId) -> &[f64] {
        let n = self.sample_count();
        &self.costs[r.index() * n..(r.index() + 1) * n]
    }

    /// Region holding the upper-corner weight.
    pub fn initial_region(&self) -> RegionId {
        self.regions.sample_region(0)
    }

    /// Cost of every canonical path under `w`.
    pub fn path_costs(&self, w: &WeightVector) -> Result<Vec<f64>> {
        self.regions
            .regions()
            .iter()
            .map(|r| path_cost(&r.path, w))
            .collect()
    }

    /// Region whose canonical path is optimal at `w`, if that path was
    /// discovered by sampling. Needs the scenario.
    pub fn region_of_weight(&self, w: &WeightVector) -> Result<Option<RegionId>> {
        let (scenario, task) = self
            .scenario
            .as_ref()
            .zip(self.task)
            .ok_or_else(|| Error::Config("problem has no scenario attached".into()))?;
        let p = shortest_path(&scenario.graph, &scenario.constraints, w, task)?;
        Ok(self.regions.find_path(&p.edge_ids))
    }

    /// Classification of every region against `Λ^{ij}`.
    pub fn sides(&self, i: RegionId, j: RegionId) -> Result<Arc<[Side]>> {
        if i == j {
            return Err(Error::DegenerateHalfspace);
        }
        let r = self.region_count();
        if i.index() >= r || j.index() >= r {
            return Err(Error::Config(format!("unknown region in pair ({i}, {j})")));
        }
        let key = (i.0, j.0);
        if let Some(row) = self.sides.read().expect("side cache poisoned").get(&key) {
            return Ok(row.clone());
        }
        let row: Arc<[Side]> = self.compute_sides(i, j).into();
        // Only the computed orientation is cached: ties count for path i, so
        // the mirrored row of (j, i) can differ from (i, j).
        let mut cache = self.sides.write().expect("side cache poisoned");
        Ok(cache.entry(key).or_insert(row).clone())
    }

    fn compute_sides(&self, i: RegionId, j: RegionId) -> Vec<Side> {
        let ci = self.cost_row(i);
        let cj = self.cost_row(j);
        self.regions
            .regions()
            .iter()
            .map(|region| {
                let (mut any_in, mut any_out) = (false, false);
                for &s in &region.support {
                    if ci[s as usize] <= cj[s as usize] {
                        any_in = true;
                    } else {
                        any_out = true;
                    }
                    if any_in && any_out {
                        return Side::Mixed;
                    }
                }
                if any_out {
                    Side::InsideJI
                } else {
                    Side::InsideIJ
                }
            })
            .collect()
    }
}
