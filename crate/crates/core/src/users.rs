//! Simulated users answering pairwise queries from a hidden weight vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::Choice;
use crate::error::{Error, Result};
use crate::graph::{path_cost, WeightVector};
use crate::problem::LearningProblem;
use crate::regions::RegionId;
use crate::select::{logistic_preference, sigmoid, QueryPair};

pub const CALIBRATION_PANEL: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum UserModel {
    /// Picks the cheaper path with fixed probability `accuracy`.
    MerrConstant { accuracy: f64 },
    /// Picks path `i` with probability `σ(−β (Cᵢ − Cⱼ))`.
    MvrLogistic { beta: f64 },
}

impl UserModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UserModel::MerrConstant { accuracy } if !(accuracy > 0.5 && accuracy <= 1.0) => {
                Err(Error::Config(format!(
                    "user accuracy must lie in (0.5, 1], got {accuracy}"
                )))
            }
            UserModel::MvrLogistic { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::Config(format!("user beta must be positive, got {beta}")),
            ),
            _ => Ok(()),
        }
    }

    /// Probability of answering `First` given the two true costs.
    pub fn prob_first(&self, c_first: f64, c_second: f64) -> f64 {
        match *self {
            UserModel::MerrConstant { accuracy } => {
                if c_first < c_second {
                    accuracy
                } else if c_first > c_second {
                    1.0 - accuracy
                } else {
                    0.5
                }
            }
            UserModel::MvrLogistic { beta } => logistic_preference(beta, c_first, c_second),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedUser {
    model: UserModel,
    true_weight: WeightVector,
    rng: ChaCha8Rng,
}

impl SimulatedUser {
    pub fn new(model: UserModel, true_weight: WeightVector, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            true_weight,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> UserModel {
        self.model
    }

    pub fn true_weight(&self) -> &WeightVector {
        &self.true_weight
    }

    /// Answers from the two true costs. An exact tie under the constant model
    /// is a fair coin.
    pub fn respond_costs(&mut self, c_first: f64, c_second: f64) -> Choice {
        let p = self.model.prob_first(c_first, c_second);
        if self.rng.random::<f64>() < p {
            Choice::First
        } else {
            Choice::Second
        }
    }

    /// Answers a query; `First` is the current path.
    pub fn respond(&mut self, problem: &LearningProblem, pair: &QueryPair) -> Result<Choice> {
        let regions = problem.regions();
        let ci = path_cost(&regions.region(pair.current)?.path, &self.true_weight)?;
        let cj = path_cost(&regions.region(pair.proposed)?.path, &self.true_weight)?;
        Ok(self.respond_costs(ci, cj))
    }
}

/// Draws `count` random ordered pairs of distinct regions.
pub fn region_pair_panel(
    regions: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(RegionId, RegionId)>> {
    if regions < 2 {
        return Err(Error::Calibration(
            "need at least two regions to form query pairs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let i = rng.random_range(0..regions);
            let mut j = rng.random_range(0..regions - 1);
            if j >= i {
                j += 1;
            }
            (RegionId(i as u32), RegionId(j as u32))
        })
        .collect())
}

/// Absolute true cost gaps of a panel of pairs.
pub fn panel_gaps(
    problem: &LearningProblem,
    w: &WeightVector,
    panel: &[(RegionId, RegionId)],
) -> Result<Vec<f64>> {
    let costs = problem.path_costs(w)?;
    Ok(panel
        .iter()
        .map(|&(i, j)| (costs[i.index()] - costs[j.index()]).abs())
        .collect())
}

/// Mean probability that a logistic user answers correctly; tied pairs count ½.
pub fn logistic_accuracy(beta: f64, gaps: &[f64]) -> f64 {
    let total: f64 = gaps
        .iter()
        .map(|&g| if g == 0.0 { 0.5 } else { sigmoid(beta * g) })
        .sum();
    total / gaps.len() as f64
}

/// Finds `β` whose panel accuracy lies within `tolerance` of `target`.
///
/// The panel holds `CALIBRATION_PANEL` random region pairs drawn with `seed`.
pub fn calibrate_beta(
    problem: &LearningProblem,
    true_weight: &WeightVector,
    target: f64,
    tolerance: f64,
    seed: u64,
) -> Result<f64> {
    if !(0.5..1.0).contains(&target) {
        return Err(Error::Calibration(format!(
            "target accuracy must lie in [0.5, 1), got {target}"
        )));
    }
    let panel = region_pair_panel(problem.region_count(), CALIBRATION_PANEL, seed)?;
    let gaps = panel_gaps(problem, true_weight, &panel)?;
    calibrate_on_gaps(&gaps, target, tolerance)
}

pub fn calibrate_on_gaps(gaps: &[f64], target: f64, tolerance: f64) -> Result<f64> {
    if target <= 0.5 + tolerance {
        return Ok(0.0);
    }
    let decisive = gaps.iter().filter(|&&g| g > 0.0).count();
    if decisive == 0 {
        return Err(Error::Calibration(
            "every panel pair has equal true cost".into(),
        ));
    }
    // Accuracy tends to this as β grows.
    let ceiling = (decisive as f64 + 0.5 * (gaps.len() - decisive) as f64) / gaps.len() as f64;
    if ceiling < target - tolerance {
        return Err(Error::Calibration(format!(
            "target {target} unreachable: panel accuracy saturates at {ceiling:.4}"
        )));
    }
    let mut hi = 1.0;
    let mut iterations = 0;
    while logistic_accuracy(hi, gaps) < target {
        hi *= 2.0;
        iterations += 1;
        if iterations > 200 || !hi.is_finite() {
            return Ok(hi);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let acc = logistic_accuracy(mid, gaps);
        if (acc - target).abs() <= tolerance / 4.0 {
            return Ok(mid);
        }
        if acc < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
