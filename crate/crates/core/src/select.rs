//! Query selection: MERR greedy, the MVR baseline and a uniform random control.
//!
//! Every query pairs the current path with one proposed alternative.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{likelihood, Choice, PosteriorState};
use crate::error::{Error, Result};
use crate::problem::LearningProblem;
use crate::regions::{RegionId, Side};

/// Relative tolerance under which two candidate scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Merr,
    Mvr,
    Random,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Merr => "merr",
            SelectorKind::Mvr => "mvr",
            SelectorKind::Random => "random",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merr" => Ok(SelectorKind::Merr),
            "mvr" => Ok(SelectorKind::Mvr),
            "random" => Ok(SelectorKind::Random),
            other => Err(Error::Config(format!("unknown selector `{other}`"))),
        }
    }
}

/// A pending comparison between the current path and a proposed one.
///
/// `score` is selector specific: the expected retained fraction of posterior
/// measure for MERR, the expected removed mass fraction for MVR, and zero for
/// the random control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPair {
    pub current: RegionId,
    pub proposed: RegionId,
    pub selector: SelectorKind,
    pub score: f64,
}

/// Predicted probability of each answer under the normalized posterior.
pub fn response_probabilities(probs: &[f64], sides: &[Side], p_hat: f64) -> [f64; 2] {
    let mut first = 0.0;
    let mut second = 0.0;
    for (p, &side) in probs.iter().zip(sides) {
        first += likelihood(side, Choice::First, p_hat) * p;
        second += likelihood(side, Choice::Second, p_hat) * p;
    }
    [first, second]
}

/// Expected posterior measure after asking the pair behind `sides`:
/// `Σ_U ℙ(U) · Σ_Ω ℓ(U|Ω) q(Ω)`.
///
/// Since `Σ_Ω ℓ(U|Ω) q(Ω) = Σq · ℙ(U)`, this is `Σq · Σ_U ℙ(U)²`.
pub fn expected_measure_after(posterior: &PosteriorState, sides: &[Side], p_hat: f64) -> f64 {
    posterior.total_measure() * retained_fraction(posterior, sides, p_hat)
}

/// Expected increase of `f = 1 − Σq` from asking the pair behind `sides`.
/// The pair need not contain the current path.
pub fn expected_gain(posterior: &PosteriorState, sides: &[Side], p_hat: f64) -> f64 {
    posterior.total_measure() * (1.0 - retained_fraction(posterior, sides, p_hat))
}

fn retained_fraction(posterior: &PosteriorState, sides: &[Side], p_hat: f64) -> f64 {
    let [a, b] = response_probabilities(posterior.probabilities(), sides, p_hat);
    a * a + b * b
}

/// Keeps the first index among scores within `TIE_TOLERANCE` of the best.
struct Best {
    minimize: bool,
    best: Option<(RegionId, f64)>,
}

impl Best {
    fn new(minimize: bool) -> Self {
        Self {
            minimize,
            best: None,
        }
    }

    fn offer(&mut self, id: RegionId, score: f64) {
        match self.best {
            None => self.best = Some((id, score)),
            Some((_, b)) => {
                let margin = TIE_TOLERANCE * b.abs().max(score.abs());
                let better = if self.minimize {
                    score < b - margin
                } else {
                    score > b + margin
                };
                if better {
                    self.best = Some((id, score));
                }
            }
        }
    }
}

fn live_candidates(weights: &[f64], current: RegionId) -> impl Iterator<Item = RegionId> + '_ {
    weights
        .iter()
        .enumerate()
        .filter(move |&(k, &w)| k != current.index() && w > 0.0)
        .map(|(k, _)| RegionId(k as u32))
}

/// Candidate minimizing the expected post-query measure; ties go to the
/// lowest region id.
pub fn merr_select(
    problem: &LearningProblem,
    posterior: &PosteriorState,
    current: RegionId,
    p_hat: f64,
) -> Result<QueryPair> {
    let mut best = Best::new(true);
    for j in live_candidates(posterior.probabilities(), current) {
        let sides = problem.sides(current, j)?;
        best.offer(j, retained_fraction(posterior, &sides, p_hat));
    }
    let (proposed, score) = best.best.ok_or(Error::NothingToAsk)?;
    Ok(QueryPair {
        current,
        proposed,
        selector: SelectorKind::Merr,
        score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvrConfig {
    /// Rationality coefficient in 1/seconds.
    pub beta: f64,
}

impl MvrConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self { beta })
        } else {
            Err(Error::Config(format!(
                "beta must be positive and finite, got {beta}"
            )))
        }
    }
}

/// `ln σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `σ(x) = 1 / (1 + e^{−x})` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a logistic user with rationality `beta` prefers the path
/// costing `c_first` over the one costing `c_second`.
pub fn logistic_preference(beta: f64, c_first: f64, c_second: f64) -> f64 {
    sigmoid(-beta * (c_first - c_second))
}

/// Probability mass over the weight samples of a problem, kept in log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassTable {
    log_mass: Vec<f64>,
}

impl MassTable {
    pub fn uniform(samples: usize) -> Self {
        Self {
            log_mass: vec![0.0; samples],
        }
    }

    pub fn len(&self) -> usize {
        self.log_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mass.is_empty()
    }

    /// Masses normalized to sum to one.
    pub fn masses(&self) -> Vec<f64> {
        let max = self
            .log_mass
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = self.log_mass.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / z).collect()
    }

    /// Multiplies each sample's mass by the probability of the observed answer.
    pub fn update(
        &mut self,
        problem: &LearningProblem,
        pair: &QueryPair,
        choice: Choice,
        cfg: MvrConfig,
    ) {
        let (ci, cj) = (
            problem.cost_row(pair.current),
            problem.cost_row(pair.proposed),
        );
        for (s, lm) in self.log_mass.iter_mut().enumerate() {
            let d = ci[s] - cj[s];
            *lm += match choice {
                Choice::First => log_sigmoid(-cfg.beta * d),
                Choice::Second => log_sigmoid(cfg.beta * d),
            };
        }
    }

    /// Each region's share of the mass, via its supporting samples.
    pub fn region_shares(&self, problem: &LearningProblem) -> Vec<f64> {
        let m = self.masses();
        problem
            .regions()
            .regions()
            .iter()
            .map(|r| r.support.iter().map(|&s| m[s as usize]).sum())
            .collect()
    }
}

/// Expected removed mass fraction for the pair `(i, j)`:
/// `Σ_choice ℙ̂(choice) · Σ_s m(s) (1 − f_choice(s))`.
pub fn mvr_score(
    problem: &LearningProblem,
    masses: &[f64],
    i: RegionId,
    j: RegionId,
    cfg: MvrConfig,
) -> f64 {
    let (ci, cj) = (problem.cost_row(i), problem.cost_row(j));
    let mut p_first = 0.0;
    for (s, m) in masses.iter().enumerate() {
        p_first += m * logistic_preference(cfg.beta, ci[s], cj[s]);
    }
    let total: f64 = masses.iter().sum();
    let p_second = total - p_first;
    // Removed mass is (total − p_first) if i is chosen and (total − p_second) otherwise.
    (p_first * (total - p_first) + p_second * (total - p_second)) / total
}

pub fn mvr_select(
    problem: &LearningProblem,
    masses: &MassTable,
    current: RegionId,
    cfg: MvrConfig,
) -> Result<QueryPair> {
    if masses.len() != problem.sample_count() {
        return Err(Error::DimensionMismatch {
            expected: problem.sample_count(),
            actual: masses.len(),
        });
    }
    let m = masses.masses();
    let shares = masses.region_shares(problem);
    let mut best = Best::new(false);
    for j in live_candidates(&shares, current) {
        best.offer(j, mvr_score(problem, &m, current, j, cfg));
    }
    let (proposed, score) = best.best.ok_or(Error::NothingToAsk)?;
    Ok(QueryPair {
        current,
        proposed,
        selector: SelectorKind::Mvr,
        score,
    })
}

/// Uniform choice among live regions other than the current one.
pub fn random_select<R: Rng>(
    posterior: &PosteriorState,
    current: RegionId,
    rng: &mut R,
) -> Result<QueryPair> {
    let candidates: Vec<RegionId> = live_candidates(posterior.probabilities(), current).collect();
    if candidates.is_empty() {
        return Err(Error::NothingToAsk);
    }
    let proposed = candidates[rng.random_range(0..candidates.len())];
    Ok(QueryPair {
        current,
        proposed,
        selector: SelectorKind::Random,
        score: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::PriorKind;
    use crate::graph::{Constraint, ConstraintKind, EdgeId, EnvironmentGraph, PathRecord};
    use crate::regions::{EquivalenceRegion, RegionSet, SampleTable, SamplingMeta, WeightBox};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Regions built directly from hand-picked (φ, t) and one support sample
    /// each; only the cost rows matter for selection.
    fn hand_problem(paths: &[(Vec<u32>, f64)], supports: &[Vec<f64>]) -> LearningProblem {
        let owners: Vec<u32> = (0..supports.len() as u32)
            .map(|s| s.min(paths.len() as u32 - 1))
            .collect();
        owned_problem(paths, supports, &owners)
    }

    fn owned_problem(
        paths: &[(Vec<u32>, f64)],
        supports: &[Vec<f64>],
        owners: &[u32],
    ) -> LearningProblem {
        let dim = supports[0].len();
        let regions = paths
            .iter()
            .enumerate()
            .map(|(k, (phi, t))| EquivalenceRegion {
                id: RegionId(k as u32),
                path: PathRecord {
                    edge_ids: vec![EdgeId(k as u32)],
                    violations: phi.clone(),
                    time: *t,
                },
                support: (0..owners.len() as u32)
                    .filter(|&s| owners[s as usize] == k as u32)
                    .collect(),
            })
            .collect();
        let samples = SampleTable::from_rows(dim, supports).unwrap();
        let meta = SamplingMeta {
            sample_count: supports.len(),
            seed: 0,
            bounds: WeightBox {
                lo: vec![0.0; dim],
                hi: vec![10.0; dim],
            },
            forced: 0,
        };
        LearningProblem::from_regions(RegionSet::from_parts(regions, samples, meta).unwrap())
    }

    fn three_region_problem() -> LearningProblem {
        hand_problem(
            &[(vec![0, 0], 10.0), (vec![1, 0], 6.0), (vec![0, 1], 7.0)],
            &[vec![9.0, 9.0], vec![1.0, 8.0], vec![8.0, 1.0]],
        )
    }

    /// Direct double sum over both answers and all regions.
    fn oracle_expected(
        problem: &LearningProblem,
        posterior: &PosteriorState,
        i: RegionId,
        j: RegionId,
        p: f64,
    ) -> f64 {
        let sides = problem.sides(i, j).unwrap();
        let q = posterior.q();
        let probs = posterior.probabilities();
        let mut total = 0.0;
        for choice in [Choice::First, Choice::Second] {
            let pu: f64 = (0..q.len())
                .map(|k| likelihood(sides[k], choice, p) * probs[k])
                .sum();
            let mass: f64 = (0..q.len())
                .map(|k| likelihood(sides[k], choice, p) * q[k])
                .sum();
            total += pu * mass;
        }
        total
    }

    #[test]
    fn two_regions_propose_the_other() {
        let p = hand_problem(&[(vec![0], 10.0), (vec![1], 5.0)], &[vec![9.0], vec![1.0]]);
        let post = PosteriorState::new(p.regions(), PriorKind::Uniform);
        let q = merr_select(&p, &post, RegionId(0), 0.9).unwrap();
        assert_eq!(q.proposed, RegionId(1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            random_select(&post, RegionId(1), &mut rng)
                .unwrap()
                .proposed,
            RegionId(0)
        );
        let masses = MassTable::uniform(p.sample_count());
        let q = mvr_select(&p, &masses, RegionId(0), MvrConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(q.proposed, RegionId(1));
    }

    #[test]
    fn single_region_has_nothing_to_ask() {
        let p = hand_problem(&[(vec![0], 10.0)], &[vec![1.0]]);
        let post = PosteriorState::new(p.regions(), PriorKind::Uniform);
        assert!(matches!(
            merr_select(&p, &post, RegionId(0), 0.9),
            Err(Error::NothingToAsk)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            random_select(&post, RegionId(0), &mut rng),
            Err(Error::NothingToAsk)
        ));
    }

    #[test]
    fn merr_matches_exhaustive_expectation_on_three_regions() {
        let p = three_region_problem();
        let mut post = PosteriorState::new(p.regions(), PriorKind::Uniform);
        for round in 0..4 {
            let cur = RegionId(round % 3);
            let pick = merr_select(&p, &post, cur, 0.9).unwrap();
            let mut expected: Vec<(RegionId, f64)> = (0..3)
                .map(RegionId)
                .filter(|&j| j != cur)
                .map(|j| (j, oracle_expected(&p, &post, cur, j, 0.9)))
                .collect();
            expected.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(pick.proposed, expected[0].0);
            let sides = p.sides(cur, pick.proposed).unwrap();
            assert!((expected_measure_after(&post, &sides, 0.9) - expected[0].1).abs() < 1e-14);
            post.apply_sides(&sides, Choice::Second, 0.9).unwrap();
        }
    }

    #[test]
    fn expected_measure_never_exceeds_current() {
        let p = three_region_problem();
        let post = PosteriorState::from_prior(PriorKind::Uniform, &[0.2, 0.5, 0.3]);
        for j in 1..3 {
            let sides = p.sides(RegionId(0), RegionId(j)).unwrap();
            assert!(expected_measure_after(&post, &sides, 0.8) <= post.total_measure());
        }
    }

    #[test]
    fn all_mixed_candidate_halves_measure() {
        let post = PosteriorState::from_prior(PriorKind::Uniform, &[0.25; 4]);
        let mixed = [Side::Mixed; 4];
        assert!((expected_measure_after(&post, &mixed, 0.9) - 0.5).abs() < 1e-15);
        // A balanced decisive split ties it; an unbalanced one does worse.
        let balanced = [
            Side::InsideIJ,
            Side::InsideIJ,
            Side::InsideJI,
            Side::InsideJI,
        ];
        assert!((expected_measure_after(&post, &balanced, 0.9) - 0.5).abs() < 1e-15);
        let skewed = [
            Side::InsideIJ,
            Side::InsideJI,
            Side::InsideJI,
            Side::InsideJI,
        ];
        assert!(expected_measure_after(&post, &skewed, 0.9) > 0.5);
    }

    #[test]
    fn mvr_equal_costs_remove_half() {
        // Paths with identical cost rows at every sample.
        let p = hand_problem(&[(vec![0], 5.0), (vec![0], 5.0)], &[vec![1.0], vec![2.0]]);
        let m = MassTable::uniform(2).masses();
        let s = mvr_score(
            &p,
            &m,
            RegionId(0),
            RegionId(1),
            MvrConfig::new(3.0).unwrap(),
        );
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mvr_large_beta_approaches_smaller_side() {
        // Region 0 wins on one sample, region 1 on three.
        let p = owned_problem(
            &[(vec![1], 0.0), (vec![0], 5.0)],
            &[vec![1.0], vec![9.0], vec![8.0], vec![7.0]],
            &[0, 1, 1, 1],
        );
        let m = MassTable::uniform(4).masses();
        let s = mvr_score(
            &p,
            &m,
            RegionId(0),
            RegionId(1),
            MvrConfig::new(1e6).unwrap(),
        );
        // Deterministic split: ℙ = (¼, ¾), removed = ¼·¾ + ¾·¼.
        assert!((s - 0.375).abs() < 1e-12);
    }

    #[test]
    fn mvr_update_is_multiplicative() {
        let p = hand_problem(&[(vec![1], 0.0), (vec![0], 5.0)], &[vec![1.0], vec![9.0]]);
        let cfg = MvrConfig::new(0.5).unwrap();
        let pair = QueryPair {
            current: RegionId(0),
            proposed: RegionId(1),
            selector: SelectorKind::Mvr,
            score: 0.0,
        };
        let mut t = MassTable::uniform(2);
        t.update(&p, &pair, Choice::First, cfg);
        let f0 = logistic_preference(0.5, 1.0, 5.0);
        let f1 = logistic_preference(0.5, 9.0, 5.0);
        let m = t.masses();
        assert!((m[0] - f0 / (f0 + f1)).abs() < 1e-15);
        assert!((m[1] - f1 / (f0 + f1)).abs() < 1e-15);
    }

    #[test]
    fn random_is_uniform_and_reproducible() {
        let post = PosteriorState::from_prior(PriorKind::Uniform, &[0.2; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[random_select(&post, RegionId(2), &mut rng)
                .unwrap()
                .proposed
                .index()] += 1;
        }
        assert_eq!(counts[2], 0);
        for (k, &c) in counts.iter().enumerate() {
            if k != 2 {
                assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
            }
        }
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| random_select(&post, RegionId(0), &mut r).unwrap().proposed)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
        assert_eq!(logistic_preference(2.0, 3.0, 3.0), 0.5);
    }

    fn scaled_scenario_problem(factor: f64) -> LearningProblem {
        use crate::graph::{TaskSpec, VertexId};
        use crate::scenario::Scenario;
        let g = EnvironmentGraph::from_edges(
            "scale",
            5,
            &[
                (0, 1, 4.0 * factor),
                (1, 4, 4.0 * factor),
                (0, 2, 2.0 * factor),
                (2, 4, 2.5 * factor),
                (0, 3, 1.0 * factor),
                (3, 4, 1.5 * factor),
                (4, 0, 1.0 * factor),
                (0, 4, 5.0 * factor),
            ],
        )
        .unwrap();
        let c = |id, edges: Vec<u32>| Constraint {
            id,
            kind: ConstraintKind::Avoid,
            edge_ids: edges.into_iter().map(EdgeId).collect(),
            weight_lo: 0.0,
            weight_hi: 6.0 * factor,
            true_weight: None,
        };
        let s = Scenario::new(
            g,
            vec![c(0, vec![2, 4]), c(1, vec![5, 7]), c(2, vec![0])],
            vec![TaskSpec {
                start: VertexId(0),
                goal: VertexId(4),
            }],
            None,
        )
        .unwrap();
        LearningProblem::build(std::sync::Arc::new(s), 0, 300, 17).unwrap()
    }

    #[test]
    fn merr_is_scale_invariant_and_mvr_needs_rescaled_beta() {
        let base = scaled_scenario_problem(1.0);
        let big = scaled_scenario_problem(2.0);
        assert_eq!(base.region_count(), big.region_count());
        assert!(base.region_count() >= 3);
        let post = PosteriorState::new(base.regions(), PriorKind::Uniform);
        let big_post = PosteriorState::new(big.regions(), PriorKind::Uniform);
        for r in 0..base.region_count() as u32 {
            let a = merr_select(&base, &post, RegionId(r), 0.85).unwrap();
            let b = merr_select(&big, &big_post, RegionId(r), 0.85).unwrap();
            assert_eq!(a.proposed, b.proposed);
            let masses = MassTable::uniform(base.sample_count());
            let a = mvr_select(&base, &masses, RegionId(r), MvrConfig::new(0.7).unwrap()).unwrap();
            let b = mvr_select(&big, &masses, RegionId(r), MvrConfig::new(0.35).unwrap()).unwrap();
            assert_eq!(a.proposed, b.proposed);
            assert_eq!(a.score, b.score);
        }
    }
}
