//! Batch experiments over scenario × user × selector × p̂ grids, and their
//! summaries.
//!
//! Seeds: every trial seed is `derive(derive(master, scenario_index), trial)`
//! with `derive(a, b) = splitmix64(a ^ splitmix64(b))`, so cells that differ
//! only in user model, selector or p̂ policy see the same true weights and the
//! same user random stream. Sub-seeds are `derive(trial_seed, k)` for
//! `k = 1` (user), `2` (session), `3` (true weights), `4` (calibration).
//! Region sets use `derive(derive(master, REGION_STREAM), scenario_index * 1024 + task)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{check_accuracy, Observation, PriorKind};
use crate::error::{Error, Result};
use crate::graph::WeightVector;
use crate::problem::LearningProblem;
use crate::regions::{WeightBox, DEFAULT_SAMPLE_COUNT};
use crate::scenario::Scenario;
use crate::scenarios::ScenarioSource;
use crate::select::SelectorKind;
use crate::session::{run_session, BeliefModel, SessionConfig, SessionResult, SessionStatus};
use crate::users::{calibrate_beta, logistic_accuracy, panel_gaps, SimulatedUser, UserModel};

pub const BATCH_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SNAPSHOT_ITERATIONS: [usize; 3] = [10, 20, 30];
const REGION_STREAM: u64 = 0x5245_4749_4f4e;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

pub fn trial_seed(master: u64, scenario: usize, trial: usize) -> u64 {
    derive(derive(master, scenario as u64), trial as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum UserSpec {
    MerrConstant {
        accuracy: f64,
    },
    /// Either a fixed `beta` or a `target_accuracy` to calibrate per trial.
    MvrLogistic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_accuracy: Option<f64>,
    },
}

impl UserSpec {
    /// Accuracy the learner should assume under the `match` policy.
    pub fn nominal_accuracy(&self) -> Option<f64> {
        match *self {
            UserSpec::MerrConstant { accuracy } => Some(accuracy),
            UserSpec::MvrLogistic {
                target_accuracy, ..
            } => target_accuracy,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            UserSpec::MerrConstant { accuracy } => format!("merr_p{accuracy}"),
            UserSpec::MvrLogistic { beta: Some(b), .. } => format!("mvr_beta{b}"),
            UserSpec::MvrLogistic {
                target_accuracy: Some(t),
                ..
            } => format!("mvr_acc{t}"),
            UserSpec::MvrLogistic { .. } => "mvr".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            UserSpec::MerrConstant { accuracy } => UserModel::MerrConstant { accuracy }.validate(),
            UserSpec::MvrLogistic {
                beta,
                target_accuracy,
            } => match (beta, target_accuracy) {
                (Some(b), _) => UserModel::MvrLogistic { beta: b }.validate(),
                (None, Some(t)) if t > 0.5 && t < 1.0 => Ok(()),
                (None, Some(t)) => Err(Error::Config(format!(
                    "target_accuracy must lie in (0.5, 1), got {t}"
                ))),
                (None, None) => Err(Error::Config(
                    "mvr_logistic user needs `beta` or `target_accuracy`".into(),
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PHatPolicy {
    /// `p̂ = p`.
    #[default]
    Match,
    /// `p̂ = p + delta`.
    Offset {
        delta: f64,
    },
    Fixed {
        value: f64,
    },
}

impl PHatPolicy {
    pub fn resolve(&self, nominal: Option<f64>) -> Result<f64> {
        let need = || {
            nominal
                .ok_or_else(|| Error::Config("p̂ policy needs the user's nominal accuracy".into()))
        };
        let p = match *self {
            PHatPolicy::Match => need()?,
            PHatPolicy::Offset { delta } => need()? + delta,
            PHatPolicy::Fixed { value } => value,
        };
        check_accuracy(p)?;
        Ok(p)
    }

    pub fn label(&self) -> String {
        match *self {
            PHatPolicy::Match => "match".into(),
            PHatPolicy::Offset { delta } => format!("offset{delta:+}"),
            PHatPolicy::Fixed { value } => format!("fixed{value}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueWeightSource {
    /// The scenario's hidden weights, or uniform draws when it has none.
    #[default]
    Scenario,
    /// Uniform draws from the weight box per trial.
    Uniform,
}

/// What a logistic user's target accuracy is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Random region pairs drawn before the session.
    #[default]
    Panel,
    /// The queries the session actually asks. `β` is searched so the mean
    /// correct-answer probability over the asked queries meets the target.
    Queries,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLE_COUNT
}

fn default_p_hat() -> Vec<PHatPolicy> {
    vec![PHatPolicy::Match]
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub master_seed: u64,
    pub trials: usize,
    /// Query budget `N`.
    pub budget: usize,
    /// Uniform weight samples per region set.
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub scenarios: Vec<ScenarioSource>,
    pub users: Vec<UserSpec>,
    pub selectors: Vec<SelectorKind>,
    #[serde(default = "default_p_hat")]
    pub p_hat: Vec<PHatPolicy>,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default)]
    pub true_weights: TrueWeightSource,
    #[serde(default = "default_tolerance")]
    pub calibration_tolerance: f64,
    #[serde(default)]
    pub calibration: CalibrationMode,
    /// Selector whose queries `queries` calibration runs against; defaults to
    /// the cell's own selector. Fixing it gives every cell the same user.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_selector: Option<SelectorKind>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        for (what, empty) in [
            ("scenarios", self.scenarios.is_empty()),
            ("users", self.users.is_empty()),
            ("selectors", self.selectors.is_empty()),
            ("p_hat", self.p_hat.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("`{what}` must not be empty")));
            }
        }
        for u in &self.users {
            u.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (s, scenario) in self.scenarios.iter().enumerate() {
            for user in &self.users {
                for &selector in &self.selectors {
                    for &p_hat in &self.p_hat {
                        out.push(Cell {
                            index: out.len(),
                            scenario_index: s,
                            scenario: scenario.label(),
                            user: *user,
                            selector,
                            p_hat,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub scenario_index: usize,
    pub scenario: String,
    pub user: UserSpec,
    pub selector: SelectorKind,
    pub p_hat: PHatPolicy,
}

/// One CSV row. Error rows leave the numeric fields empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub schema_version: u32,
    pub cell: usize,
    pub scenario: String,
    pub task: usize,
    pub user: String,
    pub selector: String,
    pub p_hat_policy: String,
    pub p_hat: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub iteration: Option<usize>,
    pub posterior_true: Option<f64>,
    pub max_posterior: Option<f64>,
    pub current_correct: Option<bool>,
    pub best_correct: Option<bool>,
    pub iters_to_05: Option<usize>,
    pub iters_to_09: Option<usize>,
    pub user_beta: Option<f64>,
    pub learner_beta: Option<f64>,
    pub status: String,
    pub error: String,
}

/// Everything a finished trial reports.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub task: usize,
    pub p_hat: Option<f64>,
    pub user_beta: Option<f64>,
    pub learner_beta: Option<f64>,
    pub result: std::result::Result<SessionResult, String>,
}

/// Mean correct-answer probability of a logistic user over the queries in
/// `log`; exact ties count ½.
pub fn query_accuracy(
    problem: &LearningProblem,
    w: &WeightVector,
    beta: f64,
    log: &[Observation],
) -> Result<f64> {
    if log.is_empty() {
        return Ok(f64::NAN);
    }
    let pairs: Vec<_> = log.iter().map(|o| (o.first, o.second)).collect();
    Ok(logistic_accuracy(beta, &panel_gaps(problem, w, &pairs)?))
}

/// Searches `β` so the accuracy over the session's own queries meets `target`.
/// The queries depend on `β`, so the map is not monotone in general; the
/// closest value seen is kept and an error returned if it misses by more
/// than `tolerance`.
fn calibrate_on_queries(
    problem: &LearningProblem,
    w: &WeightVector,
    target: f64,
    tolerance: f64,
    start: f64,
    session: &dyn Fn(UserModel) -> Result<SessionResult>,
) -> Result<f64> {
    let mut best = (f64::INFINITY, start);
    let eval = |beta: f64, best: &mut (f64, f64)| -> Result<f64> {
        let r = session(UserModel::MvrLogistic { beta })?;
        let acc = query_accuracy(problem, w, beta, &r.log)?;
        if acc.is_nan() {
            return Ok(target);
        }
        if (acc - target).abs() < best.0 {
            *best = ((acc - target).abs(), beta);
        }
        Ok(acc)
    };
    let (mut lo, mut hi) = (0.0, start.max(1e-3));
    let mut acc = eval(hi, &mut best)?;
    let mut doublings = 0;
    while acc < target && doublings < 40 {
        lo = hi;
        hi *= 2.0;
        acc = eval(hi, &mut best)?;
        doublings += 1;
    }
    for _ in 0..40 {
        if best.0 <= tolerance / 4.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut best)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > tolerance {
        return Err(Error::Calibration(format!(
            "no β puts accuracy over the asked queries within {tolerance} of {target}"
        )));
    }
    Ok(best.1)
}

/// Region sets for every (scenario, task).
pub struct PreparedBatch {
    pub config: ExperimentConfig,
    pub scenarios: Vec<Arc<Scenario>>,
    problems: Vec<Vec<Arc<LearningProblem>>>,
}

impl PreparedBatch {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenarios: Vec<Arc<Scenario>> = config
            .scenarios
            .iter()
            .map(|s| s.load().map(Arc::new))
            .collect::<Result<_>>()?;
        let region_master = derive(config.master_seed, REGION_STREAM);
        let mut problems = Vec::new();
        for (si, sc) in scenarios.iter().enumerate() {
            let per_task = (0..sc.tasks.len())
                .map(|t| {
                    let seed = derive(region_master, (si * 1024 + t) as u64);
                    LearningProblem::build(sc.clone(), t, config.samples, seed).map(Arc::new)
                })
                .collect::<Result<Vec<_>>>()?;
            problems.push(per_task);
        }
        Ok(Self {
            config,
            scenarios,
            problems,
        })
    }

    pub fn problem(&self, scenario: usize, task: usize) -> &Arc<LearningProblem> {
        &self.problems[scenario][task]
    }

    pub fn run_trial(&self, cell: &Cell, trial: usize) -> TrialOutcome {
        let seed = trial_seed(self.config.master_seed, cell.scenario_index, trial);
        let scenario = &self.scenarios[cell.scenario_index];
        let task = trial % scenario.tasks.len();
        let mut out = TrialOutcome {
            cell: cell.index,
            trial,
            seed,
            task,
            p_hat: None,
            user_beta: None,
            learner_beta: None,
            result: Err(String::new()),
        };
        out.result = self
            .try_trial(cell, scenario, task, seed, &mut out)
            .map_err(|e| e.to_string());
        out
    }

    fn try_trial(
        &self,
        cell: &Cell,
        scenario: &Scenario,
        task: usize,
        seed: u64,
        out: &mut TrialOutcome,
    ) -> Result<SessionResult> {
        let problem = self.problem(cell.scenario_index, task).clone();
        let w_star = match (self.config.true_weights, scenario.true_weights()) {
            (TrueWeightSource::Scenario, Some(w)) => w,
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 3));
                WeightBox::from_constraints(&scenario.constraints).sample(&mut rng)
            }
        };
        let true_region = problem.region_of_weight(&w_star)?;
        let calib_seed = derive(seed, 4);
        let tol = self.config.calibration_tolerance;
        let p_hat = cell.p_hat.resolve(cell.user.nominal_accuracy())?;
        out.p_hat = Some(p_hat);
        let session = |model: UserModel, selector: SelectorKind| -> Result<SessionResult> {
            let user_beta = match model {
                UserModel::MvrLogistic { beta } => Some(beta),
                UserModel::MerrConstant { .. } => None,
            };
            let learner_beta = match (selector, user_beta) {
                (SelectorKind::Mvr, Some(b)) => Some(b),
                (SelectorKind::Mvr, None) => Some(calibrate_beta(
                    &problem,
                    &w_star,
                    p_hat.min(0.99),
                    tol,
                    calib_seed,
                )?),
                _ => None,
            };
            let config = SessionConfig {
                selector,
                p_hat,
                budget: self.config.budget,
                stop_at: None,
                prior: self.config.prior,
                beta: learner_beta,
                belief: BeliefModel::Auto,
            };
            let mut user = SimulatedUser::new(model, w_star.clone(), derive(seed, 1))?;
            run_session(
                problem.clone(),
                &mut user,
                config,
                derive(seed, 2),
                true_region,
            )
        };
        let model = match cell.user {
            UserSpec::MerrConstant { accuracy } => UserModel::MerrConstant { accuracy },
            UserSpec::MvrLogistic {
                beta: Some(beta), ..
            } => UserModel::MvrLogistic { beta },
            UserSpec::MvrLogistic {
                target_accuracy: Some(t),
                ..
            } => {
                let panel = calibrate_beta(&problem, &w_star, t, tol, calib_seed)?;
                let beta = match self.config.calibration {
                    CalibrationMode::Panel => panel,
                    CalibrationMode::Queries => {
                        calibrate_on_queries(&problem, &w_star, t, tol, panel, &|m| {
                            session(m, self.config.calibration_selector.unwrap_or(cell.selector))
                        })?
                    }
                };
                UserModel::MvrLogistic { beta }
            }
            UserSpec::MvrLogistic { .. } => unreachable!("validated"),
        };
        let result = session(model, cell.selector)?;
        out.user_beta = match model {
            UserModel::MvrLogistic { beta } => Some(beta),
            UserModel::MerrConstant { .. } => None,
        };
        out.learner_beta = result.config.beta;
        Ok(result)
    }

    /// Runs every (cell, trial) and returns outcomes ordered by (cell, trial).
    pub fn run_all(&self) -> Vec<TrialOutcome> {
        let cells = self.config.cells();
        let jobs: Vec<(&Cell, usize)> = cells
            .iter()
            .flat_map(|c| (0..self.config.trials).map(move |t| (c, t)))
            .collect();
        jobs.par_iter()
            .map(|&(c, t)| self.run_trial(c, t))
            .collect()
    }

    pub fn rows(&self, outcomes: &[TrialOutcome]) -> Vec<BatchRow> {
        let cells = self.config.cells();
        outcomes
            .iter()
            .flat_map(|o| trial_rows(&cells[o.cell], o, self.config.budget))
            .collect()
    }
}

fn trial_rows(cell: &Cell, o: &TrialOutcome, budget: usize) -> Vec<BatchRow> {
    let base = BatchRow {
        schema_version: BATCH_SCHEMA_VERSION,
        cell: cell.index,
        scenario: cell.scenario.clone(),
        task: o.task,
        user: cell.user.label(),
        selector: cell.selector.to_string(),
        p_hat_policy: cell.p_hat.label(),
        p_hat: o.p_hat,
        trial: o.trial,
        seed: o.seed,
        iteration: None,
        posterior_true: None,
        max_posterior: None,
        current_correct: None,
        best_correct: None,
        iters_to_05: None,
        iters_to_09: None,
        user_beta: o.user_beta,
        learner_beta: o.learner_beta,
        status: "error".into(),
        error: String::new(),
    };
    let r = match &o.result {
        Ok(r) => r,
        Err(e) => {
            return vec![BatchRow {
                error: e.clone(),
                ..base
            }]
        }
    };
    let status = match r.status {
        SessionStatus::Active => "active",
        SessionStatus::Exhausted => "exhausted",
        SessionStatus::Converged => "converged",
        SessionStatus::NothingToAsk => "nothing_to_ask",
    };
    let best_correct = Some(r.true_region == Some(r.best_region));
    // Sessions that stop early hold their last state for the rest of the budget.
    (0..=budget)
        .map(|n| {
            let k = n.min(r.trajectory.len() - 1);
            let belief = &r.trajectory[k];
            BatchRow {
                iteration: Some(n),
                posterior_true: Some(r.true_trajectory[k]),
                max_posterior: Some(belief.iter().copied().fold(0.0, f64::max)),
                current_correct: Some(r.true_region == Some(r.current_trajectory[k])),
                best_correct,
                iters_to_05: r.iterations_to_half,
                iters_to_09: r.iterations_to_ninety,
                status: status.into(),
                ..base.clone()
            }
        })
        .collect()
}

/// Runs a batch on `jobs` worker threads (all cores when `None`).
pub fn run_batch(config: ExperimentConfig, jobs: Option<usize>) -> Result<Vec<BatchRow>> {
    let run = move || -> Result<Vec<BatchRow>> {
        let prepared = PreparedBatch::new(config)?;
        let outcomes = prepared.run_all();
        Ok(prepared.rows(&outcomes))
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Writes rows as CSV, preceded by an optional `#` header line.
pub fn write_batch_csv<W: Write>(
    rows: &[BatchRow],
    header: Option<&str>,
    mut out: W,
) -> Result<()> {
    if let Some(h) = header {
        writeln!(out, "# {h}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch_csv<R: Read>(input: R) -> Result<Vec<BatchRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<BatchRow>, _>>()?;
    if let Some(row) = rows
        .iter()
        .find(|r| r.schema_version != BATCH_SCHEMA_VERSION)
    {
        return Err(Error::Schema(format!(
            "unsupported batch schema_version {} (expected {BATCH_SCHEMA_VERSION})",
            row.schema_version
        )));
    }
    Ok(rows)
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub values: Vec<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub scenario: String,
    pub user: String,
    pub selector: String,
    pub p_hat_policy: String,
    pub trials: usize,
    pub errors: usize,
    /// Fraction of successful trials whose true-region belief reached 0.5.
    pub reached_05: f64,
    pub reached_09: f64,
    pub median_by_iteration: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub median_final: Option<f64>,
    pub median_iters_to_05: Option<f64>,
    pub median_iters_to_09: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub cells: Vec<CellSummary>,
}

impl BatchReport {
    pub fn cell(&self, index: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == index)
    }
}

pub fn summarize(rows: &[BatchRow]) -> Result<BatchReport> {
    if rows.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let mut by_cell: BTreeMap<usize, BTreeMap<usize, Vec<&BatchRow>>> = BTreeMap::new();
    for r in rows {
        by_cell
            .entry(r.cell)
            .or_default()
            .entry(r.trial)
            .or_default()
            .push(r);
    }
    let mut cells = Vec::new();
    for (cell, trials) in by_cell {
        let first = trials.values().next().expect("nonempty")[0];
        let mut series: Vec<Vec<f64>> = Vec::new();
        let mut errors = 0;
        for rows in trials.values() {
            let mut s: Vec<(usize, f64)> = rows
                .iter()
                .filter_map(|r| Some((r.iteration?, r.posterior_true?)))
                .collect();
            if s.is_empty() {
                errors += 1;
                continue;
            }
            s.sort_by_key(|&(n, _)| n);
            series.push(s.into_iter().map(|(_, p)| p).collect());
        }
        let ok = series.len();
        let reached = |t: f64| {
            if ok == 0 {
                0.0
            } else {
                series.iter().filter(|s| s.iter().any(|&p| p >= t)).count() as f64 / ok as f64
            }
        };
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let at =
            |n: usize| -> Vec<f64> { series.iter().filter_map(|s| s.get(n).copied()).collect() };
        let median_by_iteration = (0..len).filter_map(|n| median(&at(n))).collect();
        let snapshots = SNAPSHOT_ITERATIONS
            .iter()
            .filter(|&&n| n < len)
            .map(|&n| {
                let values = at(n);
                Snapshot {
                    iteration: n,
                    median: median(&values),
                    q1: quantile(&values, 0.25),
                    q3: quantile(&values, 0.75),
                    values,
                }
            })
            .collect();
        let finals: Vec<f64> = series.iter().filter_map(|s| s.last().copied()).collect();
        let crossing = |t: f64| -> Vec<f64> {
            series
                .iter()
                .filter_map(|s| s.iter().position(|&p| p >= t).map(|n| n as f64))
                .collect()
        };
        cells.push(CellSummary {
            cell,
            scenario: first.scenario.clone(),
            user: first.user.clone(),
            selector: first.selector.clone(),
            p_hat_policy: first.p_hat_policy.clone(),
            trials: trials.len(),
            errors,
            reached_05: reached(0.5),
            reached_09: reached(0.9),
            median_by_iteration,
            snapshots,
            median_final: median(&finals),
            median_iters_to_05: median(&crossing(0.5)),
            median_iters_to_09: median(&crossing(0.9)),
        });
    }
    Ok(BatchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        cells,
    })
}

/// Fraction of trials in `rows` for `cell` whose true-region belief reached
/// `threshold` by iteration `within`.
pub fn fraction_reaching(rows: &[BatchRow], cell: usize, threshold: f64, within: usize) -> f64 {
    let mut per_trial: BTreeMap<usize, bool> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.cell == cell) {
        let hit = matches!((r.iteration, r.posterior_true), (Some(n), Some(p)) if n <= within && p >= threshold);
        *per_trial.entry(r.trial).or_default() |= hit;
    }
    if per_trial.is_empty() {
        return 0.0;
    }
    per_trial.values().filter(|&&h| h).count() as f64 / per_trial.len() as f64
}
