//! Discrete posterior over equivalence regions under noisy pairwise feedback.
//!
//! Each observation multiplies a region's measure by `p̂` when the region lies
//! entirely on the chosen side, by `1 − p̂` when it lies entirely on the other
//! side, and by `½` when the halfspace splits it. Measures are kept in log
//! scale so long sessions do not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::LearningProblem;
use crate::regions::{RegionId, RegionSet, Side};

/// Which path of an ordered pair `(i, j)` the user preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    First,
    Second,
}

impl Choice {
    pub fn other(self) -> Choice {
        match self {
            Choice::First => Choice::Second,
            Choice::Second => Choice::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub first: RegionId,
    pub second: RegionId,
    pub choice: Choice,
    /// Assumed user accuracy.
    pub p_hat: f64,
    pub iteration: usize,
}

impl Observation {
    pub fn new(
        first: RegionId,
        second: RegionId,
        choice: Choice,
        p_hat: f64,
        iteration: usize,
    ) -> Result<Self> {
        check_accuracy(p_hat)?;
        if first == second {
            return Err(Error::DegenerateHalfspace);
        }
        Ok(Self {
            first,
            second,
            choice,
            p_hat,
            iteration,
        })
    }

    pub fn preferred(&self) -> RegionId {
        match self.choice {
            Choice::First => self.first,
            Choice::Second => self.second,
        }
    }
}

pub(crate) fn check_accuracy(p_hat: f64) -> Result<()> {
    if p_hat > 0.5 && p_hat <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "assumed accuracy must lie in (0.5, 1], got {p_hat}"
        )))
    }
}

/// Likelihood of `choice` for a region on `side` of `Λ^{ij}`.
pub fn likelihood(side: Side, choice: Choice, p_hat: f64) -> f64 {
    match (side, choice) {
        (Side::Mixed, _) => 0.5,
        (Side::InsideIJ, Choice::First) | (Side::InsideJI, Choice::Second) => p_hat,
        _ => 1.0 - p_hat,
    }
}

pub fn region_likelihood(
    problem: &LearningProblem,
    obs: &Observation,
    region: RegionId,
) -> Result<f64> {
    let sides = problem.sides(obs.first, obs.second)?;
    let side = sides
        .get(region.index())
        .ok_or_else(|| Error::Config(format!("unknown region {region}")))?;
    Ok(likelihood(*side, obs.choice, obs.p_hat))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `1 / |regions|` each.
    #[default]
    Uniform,
    /// Proportional to support count, i.e. sampled volume.
    SupportProportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    prior: PriorKind,
    log_prior: Vec<f64>,
    log_q: Vec<f64>,
    prob: Vec<f64>,
    observations: usize,
}

impl PosteriorState {
    pub fn new(regions: &RegionSet, prior: PriorKind) -> Self {
        let n = regions.len();
        let weights: Vec<f64> = match prior {
            PriorKind::Uniform => vec![1.0; n],
            PriorKind::SupportProportional => regions
                .regions()
                .iter()
                .map(|r| r.support_count() as f64)
                .collect(),
        };
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Self::from_prior(prior, &probs)
    }

    /// Starts from explicit prior probabilities (must sum to one).
    pub fn from_prior(kind: PriorKind, probs: &[f64]) -> Self {
        let log_prior: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Self {
            prior: kind,
            log_q: log_prior.clone(),
            prob: probs.to_vec(),
            log_prior,
            observations: 0,
        }
    }

    pub fn prior_kind(&self) -> PriorKind {
        self.prior
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn observation_count(&self) -> usize {
        self.observations
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn probability(&self, r: RegionId) -> f64 {
        self.prob[r.index()]
    }

    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    /// Unnormalized posterior measure: prior times the likelihood product.
    pub fn q(&self) -> Vec<f64> {
        self.log_q.iter().map(|l| l.exp()).collect()
    }

    pub fn prior(&self) -> Vec<f64> {
        self.log_prior.iter().map(|l| l.exp()).collect()
    }

    pub fn total_measure(&self) -> f64 {
        self.log_q.iter().map(|l| l.exp()).sum()
    }

    /// `f = 1 − Σ q`, the decrease in posterior measure so far.
    pub fn total_measure_deficit(&self) -> f64 {
        1.0 - self.total_measure()
    }

    /// Multiplies every region's measure by `likelihood(k)` and renormalizes.
    /// Leaves the state untouched if every region would reach zero.
    pub fn apply_likelihoods(&mut self, likelihood: impl Fn(usize) -> f64) -> Result<()> {
        let updated: Vec<f64> = self
            .log_q
            .iter()
            .enumerate()
            .map(|(k, l)| l + likelihood(k).ln())
            .collect();
        let max = updated.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::PosteriorCollapse);
        }
        let scaled: Vec<f64> = updated.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = scaled.iter().sum();
        self.prob = scaled.into_iter().map(|x| x / z).collect();
        self.log_q = updated;
        self.observations += 1;
        Ok(())
    }

    pub fn apply_sides(&mut self, sides: &[Side], choice: Choice, p_hat: f64) -> Result<()> {
        if sides.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: sides.len(),
            });
        }
        self.apply_likelihoods(|k| likelihood(sides[k], choice, p_hat))
    }

    /// Sequential Bayes update for one observation.
    pub fn update(&mut self, problem: &LearningProblem, obs: &Observation) -> Result<()> {
        check_accuracy(obs.p_hat)?;
        let sides = problem.sides(obs.first, obs.second)?;
        self.apply_sides(&sides, obs.choice, obs.p_hat)
    }

    /// Rebuilds the posterior from a prior and an observation log.
    pub fn replay<'a>(
        problem: &LearningProblem,
        prior: PriorKind,
        log: impl IntoIterator<Item = &'a Observation>,
    ) -> Result<Self> {
        let mut state = Self::new(problem.regions(), prior);
        for obs in log {
            state.update(problem, obs)?;
        }
        Ok(state)
    }

    /// Highest-probability region; ties go to the lowest id.
    pub fn best_region(&self) -> RegionId {
        argmax_lowest(&self.prob)
    }

    pub fn snapshot(&self) -> Vec<PosteriorEntry> {
        let q = self.q();
        self.prob
            .iter()
            .zip(q)
            .enumerate()
            .map(|(k, (&p, q))| PosteriorEntry {
                region_id: RegionId(k as u32),
                probability: p,
                q,
                path_id: RegionId(k as u32),
            })
            .collect()
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> RegionId {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    RegionId(best as u32)
}

/// One row of a serialized posterior snapshot. Canonical paths are
/// identified by the id of the region they define.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEntry {
    pub region_id: RegionId,
    pub probability: f64,
    pub q: f64,
    pub path_id: RegionId,
}
