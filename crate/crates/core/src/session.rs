//! The interactive learning loop: query, feedback, posterior update, promotion.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{argmax_lowest, check_accuracy, Choice, Observation, PosteriorState, PriorKind};
use crate::error::{Error, Result};
use crate::graph::WeightVector;
use crate::problem::LearningProblem;
use crate::regions::RegionId;
use crate::select::{
    merr_select, mvr_select, random_select, MassTable, MvrConfig, QueryPair, SelectorKind,
};
use crate::users::SimulatedUser;

/// Which belief the session reports as "the posterior".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefModel {
    /// Mass shares for the MVR selector, the Bayesian posterior otherwise.
    #[default]
    Auto,
    Bayes,
    Mass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub selector: SelectorKind,
    /// Assumed user accuracy.
    pub p_hat: f64,
    /// Query budget `N`.
    pub budget: usize,
    /// Stop early once the top belief reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at: Option<f64>,
    #[serde(default)]
    pub prior: PriorKind,
    /// Learner rationality for MVR scoring and mass updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub belief: BeliefModel,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            selector: SelectorKind::Merr,
            p_hat: 0.9,
            budget: 30,
            stop_at: None,
            prior: PriorKind::Uniform,
            beta: None,
            belief: BeliefModel::Auto,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        check_accuracy(self.p_hat)?;
        if let Some(t) = self.stop_at {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!(
                    "stop_at must lie in (0, 1], got {t}"
                )));
            }
        }
        if self.uses_masses() {
            MvrConfig::new(
                self.beta
                    .ok_or_else(|| Error::Config("mvr needs `beta`".into()))?,
            )?;
        }
        Ok(())
    }

    fn uses_masses(&self) -> bool {
        self.selector == SelectorKind::Mvr || self.belief == BeliefModel::Mass
    }

    fn reports_masses(&self) -> bool {
        match self.belief {
            BeliefModel::Auto => self.selector == SelectorKind::Mvr,
            BeliefModel::Bayes => false,
            BeliefModel::Mass => true,
        }
    }
}

/// Answer to a pending query, relative to the current path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Current,
    New,
}

impl From<Choice> for Feedback {
    fn from(c: Choice) -> Self {
        match c {
            Choice::First => Feedback::Current,
            Choice::Second => Feedback::New,
        }
    }
}

impl From<Feedback> for Choice {
    fn from(f: Feedback) -> Self {
        match f {
            Feedback::Current => Choice::First,
            Feedback::New => Choice::Second,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// A query is pending.
    Active,
    /// The budget is used up.
    Exhausted,
    /// Early stop threshold reached, or only one region exists.
    Converged,
    /// The selector found no live alternative to the current path.
    NothingToAsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub current_changed: bool,
    pub status: SessionStatus,
}

#[derive(Debug, Clone)]
pub struct Session {
    problem: Arc<LearningProblem>,
    config: SessionConfig,
    seed: u64,
    posterior: PosteriorState,
    masses: Option<MassTable>,
    log: Vec<Observation>,
    current: RegionId,
    current_weight: WeightVector,
    iteration: usize,
    informative: Vec<u64>,
    pending: Option<QueryPair>,
    status: SessionStatus,
    rng: ChaCha8Rng,
}

impl Session {
    /// Starts at the upper-corner region with the prior as posterior.
    pub fn new(problem: Arc<LearningProblem>, config: SessionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let regions = problem.regions();
        let posterior = PosteriorState::new(regions, config.prior);
        let masses = config
            .uses_masses()
            .then(|| MassTable::uniform(problem.sample_count()));
        let current = problem.initial_region();
        let current_weight = WeightVector(regions.meta().bounds.hi.clone());
        let informative = vec![0; problem.region_count()];
        let mut session = Self {
            problem,
            config,
            seed,
            posterior,
            masses,
            log: Vec::new(),
            current,
            current_weight,
            iteration: 0,
            informative,
            pending: None,
            status: SessionStatus::Active,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        session.advance()?;
        Ok(session)
    }

    /// Rebuilds a session by feeding recorded answers through `step`.
    pub fn replay(
        problem: Arc<LearningProblem>,
        config: SessionConfig,
        seed: u64,
        answers: impl IntoIterator<Item = Feedback>,
    ) -> Result<Self> {
        let mut s = Self::new(problem, config, seed)?;
        for a in answers {
            s.step(a)?;
        }
        Ok(s)
    }

    pub fn problem(&self) -> &Arc<LearningProblem> {
        &self.problem
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn masses(&self) -> Option<&MassTable> {
        self.masses.as_ref()
    }

    pub fn log(&self) -> &[Observation] {
        &self.log
    }

    pub fn current_region(&self) -> RegionId {
        self.current
    }

    pub fn current_weight(&self) -> &WeightVector {
        &self.current_weight
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Decisive-classification counts per region.
    pub fn informative_counts(&self) -> &[u64] {
        &self.informative
    }

    pub fn pending_query(&self) -> Option<&QueryPair> {
        self.pending.as_ref()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    /// Reported belief over regions: the Bayesian posterior or MVR mass shares.
    pub fn belief(&self) -> Vec<f64> {
        match (&self.masses, self.config.reports_masses()) {
            (Some(m), true) => m.region_shares(&self.problem),
            _ => self.posterior.probabilities().to_vec(),
        }
    }

    /// Top-belief region (lowest id on ties) and its representative weight.
    pub fn best(&self) -> Result<(RegionId, WeightVector)> {
        let r = argmax_lowest(&self.belief());
        Ok((r, self.problem.regions().representative_weight(r)?))
    }

    pub fn step(&mut self, feedback: Feedback) -> Result<StepOutcome> {
        let pair = match self.pending {
            Some(p) => p,
            None if self.status == SessionStatus::Exhausted => {
                return Err(Error::BudgetExhausted(self.config.budget))
            }
            None => return Err(Error::NoPendingQuery),
        };
        let choice = Choice::from(feedback);
        let obs = Observation::new(
            pair.current,
            pair.proposed,
            choice,
            self.config.p_hat,
            self.iteration,
        )?;
        let sides = self.problem.sides(pair.current, pair.proposed)?;
        self.posterior
            .apply_sides(&sides, choice, self.config.p_hat)?;
        if let Some(m) = self.masses.as_mut() {
            let beta = self.config.beta.expect("validated");
            m.update(&self.problem, &pair, choice, MvrConfig { beta });
        }
        for (n, side) in self.informative.iter_mut().zip(sides.iter()) {
            if side.is_decisive() {
                *n += 1;
            }
        }
        self.log.push(obs);
        self.iteration += 1;
        let changed = feedback == Feedback::New;
        if changed {
            self.current = pair.proposed;
            self.current_weight = self
                .problem
                .regions()
                .representative_weight(pair.proposed)?;
        }
        self.pending = None;
        self.advance()?;
        Ok(StepOutcome {
            current_changed: changed,
            status: self.status,
        })
    }

    /// Decides the next status and, while active, the next query.
    fn advance(&mut self) -> Result<()> {
        if self.problem.region_count() < 2 {
            self.status = SessionStatus::Converged;
            return Ok(());
        }
        if self.iteration >= self.config.budget {
            self.status = SessionStatus::Exhausted;
            return Ok(());
        }
        if let Some(t) = self.config.stop_at {
            if self.belief().iter().any(|&b| b >= t) {
                self.status = SessionStatus::Converged;
                return Ok(());
            }
        }
        let next = match self.config.selector {
            SelectorKind::Merr => merr_select(
                &self.problem,
                &self.posterior,
                self.current,
                self.config.p_hat,
            ),
            SelectorKind::Mvr => mvr_select(
                &self.problem,
                self.masses.as_ref().expect("validated"),
                self.current,
                MvrConfig {
                    beta: self.config.beta.expect("validated"),
                },
            ),
            SelectorKind::Random => random_select(&self.posterior, self.current, &mut self.rng),
        };
        match next {
            Ok(q) => {
                self.pending = Some(q);
                self.status = SessionStatus::Active;
            }
            Err(Error::NothingToAsk) => self.status = SessionStatus::NothingToAsk,
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub seed: u64,
    pub config: SessionConfig,
    pub status: SessionStatus,
    pub iterations: usize,
    pub best_region: RegionId,
    pub best_weight: WeightVector,
    pub true_region: Option<RegionId>,
    /// Belief over all regions before any query and after each one.
    pub trajectory: Vec<Vec<f64>>,
    /// Belief in the true region per entry of `trajectory`; zero when the
    /// true region was not discovered by sampling.
    pub true_trajectory: Vec<f64>,
    pub current_trajectory: Vec<RegionId>,
    pub iterations_to_half: Option<usize>,
    pub iterations_to_ninety: Option<usize>,
    pub log: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub seed: u64,
    pub iteration: usize,
    pub region_id: u32,
    pub posterior: f64,
    pub is_true_region: bool,
    pub current_path_id: u32,
}

impl SessionResult {
    pub fn final_true_belief(&self) -> f64 {
        self.true_trajectory.last().copied().unwrap_or(0.0)
    }

    pub fn trajectory_rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for (n, (belief, cur)) in self
            .trajectory
            .iter()
            .zip(&self.current_trajectory)
            .enumerate()
        {
            for (r, &p) in belief.iter().enumerate() {
                rows.push(TrajectoryRow {
                    seed: self.seed,
                    iteration: n,
                    region_id: r as u32,
                    posterior: p,
                    is_true_region: self.true_region == Some(RegionId(r as u32)),
                    current_path_id: cur.0,
                });
            }
        }
        rows
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.trajectory_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First iteration whose value reaches `threshold`.
pub fn first_crossing(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|&v| v >= threshold)
}

/// Runs a full session against a simulated user.
///
/// `true_region` is the region of the user's true weight, when known.
pub fn run_session(
    problem: Arc<LearningProblem>,
    user: &mut SimulatedUser,
    config: SessionConfig,
    seed: u64,
    true_region: Option<RegionId>,
) -> Result<SessionResult> {
    let mut s = Session::new(problem.clone(), config, seed)?;
    let mut trajectory = vec![s.belief()];
    let mut current_trajectory = vec![s.current_region()];
    while let Some(pair) = s.pending_query().copied() {
        let choice = user.respond(&problem, &pair)?;
        s.step(choice.into())?;
        trajectory.push(s.belief());
        current_trajectory.push(s.current_region());
    }
    let true_trajectory: Vec<f64> = trajectory
        .iter()
        .map(|b| true_region.map_or(0.0, |r| b[r.index()]))
        .collect();
    let (best_region, best_weight) = s.best()?;
    Ok(SessionResult {
        seed,
        status: s.status(),
        iterations: s.iteration(),
        best_region,
        best_weight,
        true_region,
        iterations_to_half: first_crossing(&true_trajectory, 0.5),
        iterations_to_ninety: first_crossing(&true_trajectory, 0.9),
        trajectory,
        true_trajectory,
        current_trajectory,
        log: s.log().to_vec(),
        config: s.config().clone(),
    })
}
