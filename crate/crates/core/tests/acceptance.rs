//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion outside `NOT_REPRODUCED` fails.
//!
//! Run with `cargo test -p pathpref-core --test acceptance`.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use pathpref_core::bayes::{Choice, PosteriorState, PriorKind};
use pathpref_core::experiments::{
    derive, fraction_reaching, run_batch, summarize, write_batch_csv, CalibrationMode,
    ExperimentConfig, PHatPolicy, TrueWeightSource, UserSpec,
};
use pathpref_core::graph::{enumerate_paths, path_cost, WeightVector};
use pathpref_core::problem::LearningProblem;
use pathpref_core::regions::{sample_regions, RegionId, Side, WeightBox};
use pathpref_core::scenarios::presets::prm_config;
use pathpref_core::scenarios::ScenarioSource;
use pathpref_core::select::{expected_gain, merr_select, SelectorKind, TIE_TOLERANCE};
use pathpref_core::session::{run_session, SessionConfig};
use pathpref_core::users::{SimulatedUser, UserModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{problem_with_regions, random_instance};

/// Criteria that do not hold on the bundled stand-in layouts. They are still
/// run and reported as FAIL, but do not abort the suite.
const NOT_REPRODUCED: &[&str] = &["selector_comparison", "robustness"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("oracle_equivalence", oracle_equivalence),
        ("bayes_correctness", bayes_correctness),
        ("convergence", convergence),
        ("greedy_optimality", greedy_optimality),
        ("selector_comparison", selector_comparison),
        ("accuracy_sensitivity", accuracy_sensitivity),
        ("robustness", robustness),
        ("adaptive_submodularity", adaptive_submodularity),
        ("prm_extension", prm_extension),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut unexpected = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && NOT_REPRODUCED.contains(&name) {
            " [known, not reproduced]"
        } else {
            ""
        };
        println!(
            "{tag} {name}: {} ({:.1}s){note}",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass && note.is_empty() {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}

/// Sampled region sets agree with exhaustive classification of the same
/// samples over every simple path.
fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut cost_mismatches = 0;
    let mut samples = 0;
    let mut max_paths = 0;
    for k in 0..25 {
        let inst = random_instance(1000 + k, 12);
        let regions = sample_regions(&inst.graph, &inst.constraints, inst.task, 10_000, k).unwrap();
        let paths = enumerate_paths(&inst.graph, &inst.constraints, inst.task, 1_000_000).unwrap();
        max_paths = max_paths.max(paths.len());
        // Oracle grouping: min cost, then min time, then lexicographic edges.
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for s in 0..regions.sample_count() {
            let w = WeightVector(regions.samples().row(s).to_vec());
            let mut best: Option<(f64, f64, usize)> = None;
            for (p, path) in paths.iter().enumerate() {
                let c = path_cost(path, &w).unwrap();
                let better = match best {
                    None => true,
                    Some((bc, bt, bp)) => {
                        c < bc
                            || (c == bc && path.time < bt)
                            || (c == bc && path.time == bt && path.edge_ids < paths[bp].edge_ids)
                    }
                };
                if better {
                    best = Some((c, path.time, p));
                }
            }
            let (min_cost, _, p) = best.unwrap();
            groups.entry(p).or_default().push(s);
            let r = regions.sample_region(s);
            let planned = &regions.region(r).unwrap().path;
            if path_cost(planned, &w).unwrap() != min_cost {
                cost_mismatches += 1;
            }
            samples += 1;
        }
        // Identical groups with identical canonical paths.
        if groups.len() != regions.len() {
            mismatches += 1;
        }
        for (p, members) in &groups {
            let r = regions.sample_region(members[0]);
            let region = regions.region(r).unwrap();
            let support: Vec<usize> = region.support.iter().map(|&s| s as usize).collect();
            if region.path.edge_ids != paths[*p].edge_ids || &support != members {
                mismatches += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && cost_mismatches == 0 && secs < 60.0,
        format!(
            "25 instances, {samples} samples, up to {max_paths} simple paths; {mismatches} group mismatches, {cost_mismatches} cost mismatches"
        ),
    )
}

fn lik(side: Side, first: bool, p: f64) -> f64 {
    match side {
        Side::Mixed => 0.5,
        Side::InsideIJ => {
            if first {
                p
            } else {
                1.0 - p
            }
        }
        Side::InsideJI => {
            if first {
                1.0 - p
            } else {
                p
            }
        }
    }
}

/// Sequential updates equal the batch product; the two-region posterior
/// matches its closed form.
fn bayes_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mut state = PosteriorState::from_prior(PriorKind::Uniform, &prior);
        let mut product = prior.clone();
        for _ in 0..rng.random_range(1..=40) {
            let sides: Vec<Side> = (0..n)
                .map(|_| [Side::InsideIJ, Side::InsideJI, Side::Mixed][rng.random_range(0..3)])
                .collect();
            let first = rng.random_bool(0.5);
            let p = rng.random_range(0.55..0.99);
            let choice = if first { Choice::First } else { Choice::Second };
            state.apply_sides(&sides, choice, p).unwrap();
            for (q, &s) in product.iter_mut().zip(&sides) {
                *q *= lik(s, first, p);
            }
        }
        let z: f64 = product.iter().sum();
        for (a, b) in state.probabilities().iter().zip(&product) {
            worst = worst.max((a - b / z).abs());
        }
        worst = worst.max((state.total_measure() - z).abs());
    }
    let mut worst_closed: f64 = 0.0;
    for p in [0.6, 0.75, 0.9, 0.97] {
        for n in 0..=50i32 {
            for k in 0..=n {
                let mut state = PosteriorState::from_prior(PriorKind::Uniform, &[0.5, 0.5]);
                let mut answers: Vec<bool> = (0..n).map(|m| m < k).collect();
                for m in (1..answers.len()).rev() {
                    answers.swap(m, rng.random_range(0..=m));
                }
                for &first in &answers {
                    let choice = if first { Choice::First } else { Choice::Second };
                    state
                        .apply_sides(&[Side::InsideIJ, Side::InsideJI], choice, p)
                        .unwrap();
                }
                let a = p.powi(k) * (1.0 - p).powi(n - k);
                let b = (1.0 - p).powi(k) * p.powi(n - k);
                worst_closed = worst_closed.max((state.probabilities()[0] - a / (a + b)).abs());
            }
        }
    }
    outcome(
        worst <= 1e-12 && worst_closed <= 1e-12,
        format!(
            "1000 logs max error {worst:.1e}; closed form n <= 50 max error {worst_closed:.1e}"
        ),
    )
}

fn true_weight_in_sampled_region(
    problem: &LearningProblem,
    bounds: &WeightBox,
    rng: &mut ChaCha8Rng,
) -> (WeightVector, RegionId) {
    loop {
        let w = bounds.sample(rng);
        if let Some(r) = problem.region_of_weight(&w).unwrap() {
            return (w, r);
        }
    }
}

fn convergence_battery(p: f64) -> Vec<f64> {
    (0..100u64)
        .map(|t| {
            let (seed, inst, problem) =
                problem_with_regions(derive(31, t) % 1_000_000, 2..=6, 2000);
            let problem = Arc::new(problem);
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 3));
            let bounds = WeightBox::from_constraints(&inst.constraints);
            let (w, r) = true_weight_in_sampled_region(&problem, &bounds, &mut rng);
            let mut user =
                SimulatedUser::new(UserModel::MerrConstant { accuracy: p }, w, derive(seed, 1))
                    .unwrap();
            let config = SessionConfig {
                selector: SelectorKind::Merr,
                p_hat: p,
                budget: 500,
                ..SessionConfig::default()
            };
            run_session(problem, &mut user, config, derive(seed, 2), Some(r))
                .map(|res| res.final_true_belief())
                .unwrap_or(0.0)
        })
        .collect()
}

fn convergence() -> Outcome {
    let noisy = convergence_battery(0.9);
    let hit = noisy.iter().filter(|&&b| b >= 0.99).count();
    let exact = convergence_battery(1.0);
    let ones = exact.iter().filter(|&&b| b == 1.0).count();
    outcome(
        hit >= 95 && ones == 100,
        format!("p = 0.9: {hit}/100 trials reach 0.99 after 500 queries; p = 1: {ones}/100 end at exactly 1"),
    )
}

/// Independent exhaustive expectation over both answers, computed from
/// support samples and path costs.
fn oracle_select(
    problem: &LearningProblem,
    q: &[f64],
    current: RegionId,
    p: f64,
) -> Option<RegionId> {
    let regions = problem.regions();
    let total: f64 = q.iter().sum();
    let side = |k: usize, i: usize, j: usize| {
        let (pi, pj) = (&regions.regions()[i].path, &regions.regions()[j].path);
        let (mut any_in, mut any_out) = (false, false);
        for w in regions.support_weights(RegionId(k as u32)) {
            let w = WeightVector(w.to_vec());
            if path_cost(pi, &w).unwrap() <= path_cost(pj, &w).unwrap() {
                any_in = true;
            } else {
                any_out = true;
            }
        }
        match (any_in, any_out) {
            (_, false) => Side::InsideIJ,
            (false, true) => Side::InsideJI,
            _ => Side::Mixed,
        }
    };
    let scores: Vec<(usize, f64)> = (0..q.len())
        .filter(|&j| j != current.index() && q[j] > 0.0)
        .map(|j| {
            let mut expected = 0.0;
            for first in [true, false] {
                let retained: f64 = (0..q.len())
                    .map(|k| q[k] * lik(side(k, current.index(), j), first, p))
                    .sum();
                expected += retained / total * retained;
            }
            (j, expected)
        })
        .collect();
    let min = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    scores
        .iter()
        .find(|s| s.1 <= min + TIE_TOLERANCE * min.abs())
        .map(|s| RegionId(s.0 as u32))
}

fn greedy_optimality() -> Outcome {
    let mut agree = 0;
    let mut from = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (seed, _, problem) = problem_with_regions(from, 2..=6, 500);
        from = seed + 1;
        let n = problem.region_count();
        let mut state = PosteriorState::new(problem.regions(), PriorKind::Uniform);
        let p = rng.random_range(0.6..0.99);
        for _ in 0..rng.random_range(0..6) {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let sides = problem
                .sides(RegionId(i as u32), RegionId(j as u32))
                .unwrap();
            let choice = if rng.random_bool(0.5) {
                Choice::First
            } else {
                Choice::Second
            };
            state.apply_sides(&sides, choice, p).unwrap();
        }
        let current = RegionId(rng.random_range(0..n) as u32);
        let got = merr_select(&problem, &state, current, p)
            .ok()
            .map(|qp| qp.proposed);
        if got == oracle_select(&problem, &state.q(), current, p) {
            agree += 1;
        }
    }
    outcome(
        agree == 100,
        format!("{agree}/100 instances agree with the exhaustive oracle"),
    )
}

fn spec_a() -> ScenarioSource {
    ScenarioSource::Preset {
        name: "spec-A".into(),
    }
}

fn batch_config(
    scenarios: Vec<ScenarioSource>,
    users: Vec<UserSpec>,
    selectors: Vec<SelectorKind>,
    p_hat: Vec<PHatPolicy>,
    trials: usize,
    budget: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        name: "acceptance".into(),
        master_seed: 2024,
        trials,
        budget,
        samples: 2000,
        scenarios,
        users,
        selectors,
        p_hat,
        prior: PriorKind::Uniform,
        true_weights: TrueWeightSource::Uniform,
        calibration_tolerance: 0.02,
        calibration: CalibrationMode::Panel,
        calibration_selector: None,
    }
}

fn selector_comparison() -> Outcome {
    let mvr_user = UserSpec::MvrLogistic {
        beta: None,
        target_accuracy: Some(0.9),
    };
    let mut cfg = batch_config(
        vec![spec_a()],
        vec![mvr_user],
        vec![SelectorKind::Merr, SelectorKind::Mvr],
        vec![PHatPolicy::Match],
        60,
        30,
    );
    let rows = run_batch(cfg.clone(), None).unwrap();
    let merr = fraction_reaching(&rows, 0, 0.5, 30);
    let mvr = fraction_reaching(&rows, 1, 0.5, 30);
    // Same comparison with the accuracy measured on the queries each
    // selector actually asks, reported for context.
    cfg.calibration = CalibrationMode::Queries;
    let rows_q = run_batch(cfg, None).unwrap();
    let merr_q = fraction_reaching(&rows_q, 0, 0.5, 30);
    let mvr_q = fraction_reaching(&rows_q, 1, 0.5, 30);
    outcome(
        merr - mvr >= 0.10,
        format!(
            "spec-A, 60 seeds, reach 0.5 within 30: merr {merr:.2} vs mvr {mvr:.2} (need +0.10); query-calibrated users: merr {merr_q:.2} vs mvr {mvr_q:.2}"
        ),
    )
}

fn accuracy_sensitivity() -> Outcome {
    let cfg = batch_config(
        vec![spec_a()],
        vec![
            UserSpec::MerrConstant { accuracy: 0.9 },
            UserSpec::MerrConstant { accuracy: 0.8 },
        ],
        vec![SelectorKind::Merr],
        vec![PHatPolicy::Match],
        60,
        30,
    );
    let rows = run_batch(cfg, None).unwrap();
    let high = fraction_reaching(&rows, 0, 0.5, 30);
    let low = fraction_reaching(&rows, 1, 0.5, 30);
    outcome(
        high > low,
        format!("spec-A, 60 seeds, reach 0.5 within 30: p = 0.9 {high:.2} vs p = 0.8 {low:.2}"),
    )
}

/// Uses a 20-query budget per trial.
fn robustness() -> Outcome {
    let cfg = batch_config(
        vec![
            spec_a(),
            ScenarioSource::Preset {
                name: "spec-C".into(),
            },
        ],
        vec![
            UserSpec::MerrConstant { accuracy: 0.7 },
            UserSpec::MerrConstant { accuracy: 0.85 },
        ],
        vec![SelectorKind::Merr],
        vec![
            PHatPolicy::Match,
            PHatPolicy::Offset { delta: -0.1 },
            PHatPolicy::Offset { delta: 0.1 },
        ],
        20,
        20,
    );
    let report = summarize(&run_batch(cfg, None).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for group in report.cells.chunks(3) {
        let base = group[0].median_final.unwrap_or(f64::NAN);
        let deltas: Vec<f64> = group[1..]
            .iter()
            .map(|c| (c.median_final.unwrap_or(f64::NAN) - base).abs())
            .collect();
        for &d in &deltas {
            worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
        }
        parts.push(format!(
            "{} {}: {:.2} (±{:.2}/{:.2})",
            group[0].scenario, group[0].user, base, deltas[0], deltas[1]
        ));
    }
    outcome(
        worst <= 0.15,
        format!(
            "max |Δ median final| {worst:.3} (limit 0.15); {}",
            parts.join(", ")
        ),
    )
}

/// The expected gain of an unasked pair never grows as the history extends.
fn adaptive_submodularity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = f64::NEG_INFINITY;
    let mut from = 9000;
    let mut checks = 0;
    for _ in 0..100 {
        let (seed, _, problem) = problem_with_regions(from, 3..=6, 500);
        from = seed + 1;
        let n = problem.region_count();
        let p = rng.random_range(0.55..1.0);
        let pair = |rng: &mut ChaCha8Rng| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (RegionId(i as u32), RegionId(j as u32))
        };
        let probe = pair(&mut rng);
        let probe_sides = problem.sides(probe.0, probe.1).unwrap();
        let mut state = PosteriorState::new(problem.regions(), PriorKind::Uniform);
        let mut prev = expected_gain(&state, &probe_sides, p);
        for _ in 0..8 {
            let (i, j) = pair(&mut rng);
            if (i, j) == probe || (j, i) == probe {
                continue;
            }
            let sides = problem.sides(i, j).unwrap();
            let choice = if rng.random_bool(0.5) {
                Choice::First
            } else {
                Choice::Second
            };
            if state.apply_sides(&sides, choice, p).is_err() {
                break;
            }
            let gain = expected_gain(&state, &probe_sides, p);
            worst = worst.max(gain - prev);
            prev = gain;
            checks += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("100 instances, {checks} history extensions; max gain increase {worst:.1e}"),
    )
}

fn prm_extension() -> Outcome {
    let cfg = batch_config(
        vec![ScenarioSource::Prm {
            config: prm_config(400, 10, 20, 400),
        }],
        vec![UserSpec::MerrConstant { accuracy: 0.9 }],
        vec![SelectorKind::Merr],
        vec![PHatPolicy::Match],
        20,
        50,
    );
    let rows = run_batch(cfg, None).unwrap();
    let reach = fraction_reaching(&rows, 0, 0.9, 50);
    let report = summarize(&rows).unwrap();
    let crossing = report.cells[0]
        .median_by_iteration
        .iter()
        .position(|&m| m >= 0.5);
    outcome(
        reach >= 0.4 && crossing.is_some_and(|c| c < 25),
        format!(
            "n = 400, k = 10, 20 constraints, 20 trials: {reach:.2} reach 0.9 within 50; median crosses 0.5 at iteration {}",
            crossing.map_or("never".into(), |c| c.to_string())
        ),
    )
}

fn determinism() -> Outcome {
    let mut cfg = batch_config(
        vec![spec_a()],
        vec![
            UserSpec::MerrConstant { accuracy: 0.85 },
            UserSpec::MvrLogistic {
                beta: None,
                target_accuracy: Some(0.9),
            },
        ],
        vec![SelectorKind::Merr, SelectorKind::Mvr, SelectorKind::Random],
        vec![PHatPolicy::Match],
        6,
        20,
    );
    cfg.calibration = CalibrationMode::Queries;
    let render = |jobs: usize, stamp: &str| {
        let rows = run_batch(cfg.clone(), Some(jobs)).unwrap();
        let mut buf = Vec::new();
        write_batch_csv(&rows, Some(stamp), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = render(1, "generated 2024-01-01T00:00:00Z");
    let b = render(4, "generated 2025-06-30T12:34:56Z");
    let c = render(2, "generated later");
    outcome(
        a == b && b == c && !a.is_empty(),
        format!(
            "{} bytes identical across 3 reruns with 1, 4 and 2 workers",
            a.len()
        ),
    )
}
