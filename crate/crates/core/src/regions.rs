//! Equivalence regions: groups of weight samples that share an optimal path.
//!
//! The exact region arrangement is intractable to enumerate, so regions are
//! discovered by sampling the weight box and grouping samples by the planner's
//! answer. Containment of a region in a halfspace is tested on its support
//! samples.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    dot_violations, Constraint, EdgeId, EnvironmentGraph, PathRecord, Planner, TaskSpec,
    WeightVector,
};

/// Sample count used when a caller does not choose one.
pub const DEFAULT_SAMPLE_COUNT: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub u32);

impl RegionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Per-constraint sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl WeightBox {
    pub fn from_constraints(constraints: &[Constraint]) -> Self {
        Self {
            lo: constraints.iter().map(|c| c.weight_lo).collect(),
            hi: constraints.iter().map(|c| c.weight_hi).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim()
            && w.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        for (l, h) in self.lo.iter().zip(&self.hi) {
            out.push(l + (h - l) * rng.random::<f64>());
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> WeightVector {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_into(rng, &mut out);
        WeightVector(out)
    }
}

/// Row-major table of weight samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    dim: usize,
    rows: usize,
    data: Vec<f64>,
}

impl SampleTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: 0,
            data: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut t = Self::new(dim);
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }
}

/// Sample `index` of the stream for `seed`. Independent of every other
/// index, so sample sets can be extended and drawn in parallel.
pub fn stream_sample(bounds: &WeightBox, seed: u64, index: u64, out: &mut Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    bounds.sample_into(&mut rng, out);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRegion {
    pub id: RegionId,
    /// Optimal path for every support sample.
    pub path: PathRecord,
    /// Indices into the region set's sample table, ascending.
    pub support: Vec<u32>,
}

impl EquivalenceRegion {
    pub fn support_count(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMeta {
    /// Uniform draws, excluding the forced corners.
    pub sample_count: usize,
    pub seed: u64,
    pub bounds: WeightBox,
    /// Forced corner samples placed before the uniform ones
    /// (index 0: upper corner, index 1: lower corner).
    pub forced: usize,
}

/// The sampled estimate of the region set.
///
/// Region ids follow the order in which regions are first hit by the sample
/// sequence, so region 0 always belongs to the upper-corner weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    regions: Vec<EquivalenceRegion>,
    samples: SampleTable,
    sample_region: Vec<RegionId>,
    meta: SamplingMeta,
}

impl RegionSet {
    /// Assembles a region set from parts, checking that supports partition the samples.
    pub fn from_parts(
        regions: Vec<EquivalenceRegion>,
        samples: SampleTable,
        meta: SamplingMeta,
    ) -> Result<Self> {
        let n = samples.len();
        let mut sample_region = vec![None; n];
        for (k, r) in regions.iter().enumerate() {
            if r.id.index() != k {
                return Err(Error::Config(format!(
                    "region ids must be dense: position {k} holds {}",
                    r.id
                )));
            }
            if r.support.is_empty() {
                return Err(Error::Config(format!("region {} has empty support", r.id)));
            }
            if r.path.violations.len() != samples.dim() {
                return Err(Error::DimensionMismatch {
                    expected: samples.dim(),
                    actual: r.path.violations.len(),
                });
            }
            for &s in &r.support {
                let slot = sample_region
                    .get_mut(s as usize)
                    .ok_or_else(|| Error::Config(format!("support index {s} out of range")))?;
                if slot.replace(r.id).is_some() {
                    return Err(Error::Config(format!("sample {s} belongs to two regions")));
                }
            }
        }
        let sample_region = sample_region
            .into_iter()
            .enumerate()
            .map(|(s, r)| {
                r.ok_or_else(|| Error::Config(format!("sample {s} belongs to no region")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            regions,
            samples,
            sample_region,
            meta,
        })
    }

    pub fn regions(&self) -> &[EquivalenceRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn region(&self, id: RegionId) -> Result<&EquivalenceRegion> {
        self.regions
            .get(id.index())
            .ok_or_else(|| Error::Config(format!("unknown region {id}")))
    }

    pub fn samples(&self) -> &SampleTable {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.sample_region.len()
    }

    pub fn sample_region(&self, sample: usize) -> RegionId {
        self.sample_region[sample]
    }

    pub fn meta(&self) -> &SamplingMeta {
        &self.meta
    }

    pub fn representative_weight(&self, id: RegionId) -> Result<WeightVector> {
        let r = self.region(id)?;
        Ok(WeightVector(
            self.samples.row(r.support[0] as usize).to_vec(),
        ))
    }

    pub fn support_weights(&self, id: RegionId) -> impl Iterator<Item = &[f64]> + '_ {
        self.regions[id.index()]
            .support
            .iter()
            .map(move |&s| self.samples.row(s as usize))
    }

    pub fn find_path(&self, edge_ids: &[EdgeId]) -> Option<RegionId> {
        self.regions
            .iter()
            .find(|r| r.path.edge_ids == edge_ids)
            .map(|r| r.id)
    }

    /// Adds uniform samples continuing the same seed stream.
    pub fn extend(
        &mut self,
        graph: &EnvironmentGraph,
        constraints: &[Constraint],
        task: TaskSpec,
        extra: usize,
    ) -> Result<()> {
        let first = self.meta.sample_count as u64;
        let new_rows: Vec<Vec<f64>> = (first..first + extra as u64)
            .map(|i| {
                let mut row = Vec::with_capacity(self.dim());
                stream_sample(&self.meta.bounds, self.meta.seed, i, &mut row);
                row
            })
            .collect();
        let paths = solve_all(graph, constraints, task, &new_rows)?;
        let mut index: HashMap<Vec<EdgeId>, RegionId> = self
            .regions
            .iter()
            .map(|r| (r.path.edge_ids.clone(), r.id))
            .collect();
        for (row, path) in new_rows.iter().zip(paths) {
            let s = self.sample_region.len() as u32;
            self.samples.push(row)?;
            let id = assign(&mut self.regions, &mut index, path, s);
            self.sample_region.push(id);
        }
        self.meta.sample_count += extra;
        Ok(())
    }

    pub fn export(&self) -> RegionDump {
        RegionDump {
            sample_count: self.meta.sample_count,
            seed: self.meta.seed,
            bounds: self.meta.bounds.clone(),
            regions: self
                .regions
                .iter()
                .map(|r| RegionDumpEntry {
                    id: r.id,
                    edge_ids: r.path.edge_ids.clone(),
                    violations: r.path.violations.clone(),
                    time: r.path.time,
                    support_count: r.support_count(),
                    representative_weight: self.samples.row(r.support[0] as usize).to_vec(),
                })
                .collect(),
        }
    }
}

/// Debug/UI dump of a region set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDump {
    pub sample_count: usize,
    pub seed: u64,
    pub bounds: WeightBox,
    pub regions: Vec<RegionDumpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDumpEntry {
    pub id: RegionId,
    pub edge_ids: Vec<EdgeId>,
    pub violations: Vec<u32>,
    pub time: f64,
    pub support_count: usize,
    pub representative_weight: Vec<f64>,
}

fn solve_all(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
    task: TaskSpec,
    rows: &[Vec<f64>],
) -> Result<Vec<PathRecord>> {
    let base = Planner::new(graph, constraints)?;
    rows.par_iter()
        .map_init(|| base.clone(), |planner, w| planner.solve_slice(w, task))
        .collect()
}

fn assign(
    regions: &mut Vec<EquivalenceRegion>,
    index: &mut HashMap<Vec<EdgeId>, RegionId>,
    path: PathRecord,
    sample: u32,
) -> RegionId {
    if let Some(&id) = index.get(&path.edge_ids) {
        regions[id.index()].support.push(sample);
        return id;
    }
    let id = RegionId(regions.len() as u32);
    index.insert(path.edge_ids.clone(), id);
    regions.push(EquivalenceRegion {
        id,
        path,
        support: vec![sample],
    });
    id
}

/// Draws `m` uniform weights from the constraint box (after the two forced
/// corners), plans each, and groups samples by optimal edge sequence.
pub fn sample_regions(
    graph: &EnvironmentGraph,
    constraints: &[Constraint],
    task: TaskSpec,
    m: usize,
    seed: u64,
) -> Result<RegionSet> {
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let bounds = WeightBox::from_constraints(constraints);
    let mut rows = Vec::with_capacity(m + 2);
    rows.push(bounds.hi.clone());
    rows.push(bounds.lo.clone());
    for i in 0..m as u64 {
        let mut row = Vec::with_capacity(bounds.dim());
        stream_sample(&bounds, seed, i, &mut row);
        rows.push(row);
    }
    let paths = solve_all(graph, constraints, task, &rows)?;

    let mut samples = SampleTable::new(bounds.dim());
    let mut regions = Vec::new();
    let mut index = HashMap::new();
    let mut sample_region = Vec::with_capacity(rows.len());
    for (s, (row, path)) in rows.iter().zip(paths).enumerate() {
        samples.push(row)?;
        sample_region.push(assign(&mut regions, &mut index, path, s as u32));
    }
    Ok(RegionSet {
        regions,
        samples,
        sample_region,
        meta: SamplingMeta {
            sample_count: m,
            seed,
            bounds,
            forced: 2,
        },
    })
}

/// Which side of a pairwise halfspace a region falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Every support sample prefers path i (ties included).
    InsideIJ,
    /// No support sample prefers path i.
    InsideJI,
    Mixed,
}

impl Side {
    pub fn mirrored(self) -> Side {
        match self {
            Side::InsideIJ => Side::InsideJI,
            Side::InsideJI => Side::InsideIJ,
            Side::Mixed => Side::Mixed,
        }
    }

    pub fn is_decisive(self) -> bool {
        self != Side::Mixed
    }
}

/// `Λ^{ij} = { w : (φⁱ − φʲ)·w ≤ tʲ − tⁱ }`, the weights under which path i
/// costs no more than path j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<i64>,
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<(RegionId, RegionId)>,
    phi_i: Vec<u32>,
    phi_j: Vec<u32>,
    time_i: f64,
    time_j: f64,
}

impl Halfspace {
    pub fn from_paths(i: &PathRecord, j: &PathRecord) -> Result<Self> {
        if i.violations.len() != j.violations.len() {
            return Err(Error::DimensionMismatch {
                expected: i.violations.len(),
                actual: j.violations.len(),
            });
        }
        if i.violations == j.violations && i.time == j.time {
            return Err(Error::DegenerateHalfspace);
        }
        Ok(Self {
            normal: i
                .violations
                .iter()
                .zip(&j.violations)
                .map(|(&a, &b)| i64::from(a) - i64::from(b))
                .collect(),
            offset: j.time - i.time,
            source: None,
            phi_i: i.violations.clone(),
            phi_j: j.violations.clone(),
            time_i: i.time,
            time_j: j.time,
        })
    }

    pub fn with_source(mut self, i: RegionId, j: RegionId) -> Self {
        self.source = Some((i, j));
        self
    }

    /// Membership test, evaluated as `C(Pⁱ, w) ≤ C(Pʲ, w)` with the same
    /// arithmetic the planner uses, so boundary decisions agree with it.
    pub fn contains(&self, w: &[f64]) -> bool {
        dot_violations(&self.phi_i, w) + self.time_i <= dot_violations(&self.phi_j, w) + self.time_j
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: self.normal.iter().map(|x| -x).collect(),
            offset: -self.offset,
            source: self.source.map(|(a, b)| (b, a)),
            phi_i: self.phi_j.clone(),
            phi_j: self.phi_i.clone(),
            time_i: self.time_j,
            time_j: self.time_i,
        }
    }
}

/// `halfspace_from_pair` under its descriptive name.
pub fn halfspace_from_pair(i: &PathRecord, j: &PathRecord) -> Result<Halfspace> {
    Halfspace::from_paths(i, j)
}

/// Support-sample test of a region against `Λ^{ij}`.
pub fn classify_support<'a>(
    support: impl IntoIterator<Item = &'a [f64]>,
    halfspace: &Halfspace,
) -> Side {
    let (mut any_in, mut any_out) = (false, false);
    for w in support {
        if halfspace.contains(w) {
            any_in = true;
        } else {
            any_out = true;
        }
        if any_in && any_out {
            return Side::Mixed;
        }
    }
    match (any_in, any_out) {
        (_, false) => Side::InsideIJ,
        (false, true) => Side::InsideJI,
        (true, true) => Side::Mixed,
    }
}

pub fn classify_region(regions: &RegionSet, region: RegionId, halfspace: &Halfspace) -> Side {
    classify_support(regions.support_weights(region), halfspace)
}
