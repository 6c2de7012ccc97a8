//! Bundled layouts. The grid presets are random warehouse-style stand-ins
//! tuned to a target constraint count and coverage; the roadmap preset is a
//! desk-scale outdoor map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::{
    build_grid_scenario, coverage, CellRect, Direction, GridScenarioConfig, GridTask, ZoneKind,
    ZoneSpec,
};
use super::prm::{build_prm_scenario, PrmScenarioConfig, PrmTask};
use crate::error::{Error, Result};
use crate::scenario::{Polygon, Scenario};

pub const GRID_SIZE: u32 = 24;
pub const GRID_W_MAX: f64 = 8.0;
pub const FOLLOW_REWARD: f64 = 0.5;
pub const COVERAGE_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPreset {
    pub name: &'static str,
    pub constraints: usize,
    pub coverage: f64,
    pub seed: u64,
}

pub const GRID_PRESETS: [GridPreset; 3] = [
    GridPreset {
        name: "spec-A",
        constraints: 26,
        coverage: 0.33,
        seed: 0xA,
    },
    GridPreset {
        name: "spec-B",
        constraints: 41,
        coverage: 0.40,
        seed: 0xB,
    },
    GridPreset {
        name: "spec-C",
        constraints: 52,
        coverage: 0.73,
        seed: 0xC,
    },
];

pub const PRM_PRESET: &str = "prm-400";

pub fn preset_names() -> Vec<&'static str> {
    GRID_PRESETS
        .iter()
        .map(|p| p.name)
        .chain([PRM_PRESET])
        .collect()
}

pub fn preset(name: &str) -> Result<Scenario> {
    if name == PRM_PRESET {
        return Ok(build_prm_scenario(&prm_config(400, 10, 20, 400))?.scenario);
    }
    Ok(build_grid_scenario(&grid_preset_config(name)?)?.scenario)
}

pub fn grid_preset_config(name: &str) -> Result<GridScenarioConfig> {
    let p = GRID_PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}`; known: {}",
                preset_names().join(", ")
            ))
        })?;
    warehouse_layout(p.name, p.constraints, p.coverage, p.seed)
}

/// Two rows of five 2×8 racks separated by 2-cell aisles.
fn racks() -> Vec<CellRect> {
    let mut out = Vec::new();
    for y0 in [3, 13] {
        for x0 in [3, 7, 11, 15, 19] {
            out.push(CellRect::new(x0, y0, x0 + 1, y0 + 7));
        }
    }
    out
}

/// Rows and columns that never cross a rack.
const ROAD_ROWS: [u32; 7] = [0, 1, 2, 11, 12, 22, 23];
const ROAD_COLS: [u32; 8] = [1, 2, 5, 9, 13, 17, 21, 22];

/// Random layout with exactly `constraints` constraints (roads count twice)
/// and free-space coverage within `COVERAGE_TOLERANCE` of `target`.
pub fn warehouse_layout(
    name: &str,
    constraints: usize,
    target: f64,
    seed: u64,
) -> Result<GridScenarioConfig> {
    let roads = constraints / 8;
    let zones = constraints - 2 * roads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scale = 2.0f64;
    for _ in 0..5000 {
        let mut cfg = GridScenarioConfig::empty(name, GRID_SIZE, GRID_SIZE);
        cfg.obstacles = racks();
        cfg.tasks = vec![
            GridTask {
                start: [0, 0],
                goal: [GRID_SIZE - 1, GRID_SIZE - 1],
            },
            GridTask {
                start: [0, GRID_SIZE - 1],
                goal: [GRID_SIZE - 1, 0],
            },
        ];
        cfg.true_weight_seed = Some(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut placed: Vec<CellRect> = Vec::new();
        while placed.len() < roads {
            let len = rng.random_range(6..=14u32);
            let (rect, dir) = if rng.random_bool(0.5) {
                let y = ROAD_ROWS[rng.random_range(0..ROAD_ROWS.len())];
                let x0 = rng.random_range(0..=GRID_SIZE - len);
                let d = if rng.random_bool(0.5) {
                    Direction::East
                } else {
                    Direction::West
                };
                (CellRect::new(x0, y, x0 + len - 1, y), d)
            } else {
                let x = ROAD_COLS[rng.random_range(0..ROAD_COLS.len())];
                let y0 = rng.random_range(0..=GRID_SIZE - len);
                let d = if rng.random_bool(0.5) {
                    Direction::North
                } else {
                    Direction::South
                };
                (CellRect::new(x, y0, x, y0 + len - 1), d)
            };
            if placed.iter().any(|r| r.overlaps(&rect)) {
                continue;
            }
            placed.push(rect);
            cfg.zones.push(ZoneSpec {
                kind: ZoneKind::Road,
                rect,
                direction: Some(dir),
                weight_lo: 0.0,
                weight_hi: GRID_W_MAX,
                true_weight: None,
                follow_reward: Some(FOLLOW_REWARD),
                follow_true_weight: None,
            });
        }
        let max_side = scale.max(1.0);
        while cfg.zones.len() < roads + zones {
            let w = rng.random_range(1.0..=max_side).round() as u32;
            let h = rng.random_range(1.0..=max_side).round() as u32;
            let (w, h) = (w.clamp(1, GRID_SIZE), h.clamp(1, GRID_SIZE));
            let x0 = rng.random_range(0..=GRID_SIZE - w);
            let y0 = rng.random_range(0..=GRID_SIZE - h);
            let rect = CellRect::new(x0, y0, x0 + w - 1, y0 + h - 1);
            if cfg
                .obstacles
                .iter()
                .any(|o| o.contains(x0, y0) && o.contains(rect.x1, rect.y1))
            {
                continue;
            }
            let kind = if rng.random_bool(0.5) {
                ZoneKind::Avoid
            } else {
                ZoneKind::SpeedLimit
            };
            cfg.zones.push(ZoneSpec {
                kind,
                rect,
                direction: None,
                weight_lo: 0.0,
                weight_hi: GRID_W_MAX,
                true_weight: None,
                follow_reward: None,
                follow_true_weight: None,
            });
        }
        let cov = coverage(&cfg).fraction();
        if (cov - target).abs() <= COVERAGE_TOLERANCE / 2.0 && build_grid_scenario(&cfg).is_ok() {
            return Ok(cfg);
        }
        scale *= if cov < target { 1.03 } else { 0.97 };
    }
    Err(Error::Config(format!(
        "could not reach coverage {target} for `{name}`"
    )))
}

/// Roadmap over a 100 m square with four building blocks.
pub fn prm_config(n: usize, k: usize, constraints: usize, seed: u64) -> PrmScenarioConfig {
    PrmScenarioConfig {
        name: format!("prm-{n}"),
        width: 100.0,
        height: 100.0,
        obstacles: vec![
            Polygon::rect(15.0, 15.0, 35.0, 40.0),
            Polygon::rect(60.0, 10.0, 85.0, 30.0),
            Polygon::rect(20.0, 60.0, 40.0, 85.0),
            Polygon(vec![[60.0, 55.0], [85.0, 60.0], [75.0, 85.0]]),
        ],
        n,
        k,
        speed: 1.0,
        constraint_count: constraints,
        constraint_radius: [6.0, 14.0],
        constraint_sides: 6,
        weight_lo: 0.0,
        weight_hi: 10.0,
        tasks: vec![PrmTask {
            start: [3.0, 3.0],
            goal: [97.0, 97.0],
        }],
        sample_true_weights: true,
        seed,
    }
}
