//! Grid-world layouts: 4-neighbour cells with a fast and a slow edge per move.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    Constraint, ConstraintKind, Edge, EdgeId, EnvironmentGraph, TaskSpec, Vertex, VertexId,
};
use crate::scenario::{ConstraintShape, Polygon, RenderInfo, Scenario};

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CellRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn overlaps(&self, o: &CellRect) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    fn polygon(&self, cell: f64) -> Polygon {
        Polygon::rect(
            self.x0 as f64 * cell,
            self.y0 as f64 * cell,
            (self.x1 + 1) as f64 * cell,
            (self.y1 + 1) as f64 * cell,
        )
    }
}

/// Travel direction; north is increasing `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    East,
    North,
    West,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::North,
        Direction::West,
        Direction::South,
    ];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::East => (1, 0),
            Direction::North => (0, 1),
            Direction::West => (-1, 0),
            Direction::South => (0, -1),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::North => Direction::South,
            Direction::West => Direction::East,
            Direction::South => Direction::North,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Avoid,
    SpeedLimit,
    /// Compiles to a `road_against` and a `road_follow` constraint.
    Road,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub kind: ZoneKind,
    pub rect: CellRect,
    /// Required for roads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub weight_lo: f64,
    pub weight_hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_weight: Option<f64>,
    /// Roads only: the follow constraint's interval is `[−r, 0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_true_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTask {
    pub start: [u32; 2],
    pub goal: [u32; 2],
}

fn default_fast() -> f64 {
    1.0
}

fn default_slow() -> f64 {
    2.0
}

fn default_cell() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScenarioConfig {
    pub name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_fast")]
    pub fast_time: f64,
    #[serde(default = "default_slow")]
    pub slow_time: f64,
    #[serde(default = "default_cell")]
    pub cell_size: f64,
    #[serde(default)]
    pub obstacles: Vec<CellRect>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    pub tasks: Vec<GridTask>,
    /// Draws true weights for zones that do not state one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_weight_seed: Option<u64>,
}

impl GridScenarioConfig {
    pub fn empty(name: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            name: name.into(),
            width,
            height,
            fast_time: 1.0,
            slow_time: 2.0,
            cell_size: 1.0,
            obstacles: Vec::new(),
            zones: Vec::new(),
            tasks: vec![GridTask {
                start: [0, 0],
                goal: [width.saturating_sub(1), height.saturating_sub(1)],
            }],
            true_weight_seed: None,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad("grid must have positive width and height".into());
        }
        if !(self.fast_time > 0.0 && self.fast_time < self.slow_time && self.slow_time.is_finite())
        {
            return bad(format!(
                "need 0 < fast_time < slow_time, got {} and {}",
                self.fast_time, self.slow_time
            ));
        }
        let in_bounds =
            |r: &CellRect| r.x0 <= r.x1 && r.y0 <= r.y1 && r.x1 < self.width && r.y1 < self.height;
        for r in &self.obstacles {
            if !in_bounds(r) {
                return bad(format!("obstacle {r:?} outside the grid"));
            }
        }
        let roads: Vec<&ZoneSpec> = self
            .zones
            .iter()
            .filter(|z| z.kind == ZoneKind::Road)
            .collect();
        for (k, z) in self.zones.iter().enumerate() {
            if !in_bounds(&z.rect) {
                return bad(format!("zone {k} rectangle {:?} outside the grid", z.rect));
            }
            if z.kind == ZoneKind::Road {
                if z.direction.is_none() {
                    return bad(format!("road zone {k} needs a direction"));
                }
                let r = z.follow_reward.unwrap_or(0.0);
                if !(0.0..=0.5 * self.fast_time).contains(&r) {
                    return bad(format!(
                        "road zone {k} follow reward {r} must lie in [0, {}]",
                        0.5 * self.fast_time
                    ));
                }
            }
        }
        for (a, ra) in roads.iter().enumerate() {
            for rb in &roads[a + 1..] {
                if ra.rect.overlaps(&rb.rect) {
                    return bad(format!(
                        "road bands {:?} and {:?} overlap",
                        ra.rect, rb.rect
                    ));
                }
            }
        }
        for t in &self.tasks {
            for c in [t.start, t.goal] {
                if c[0] >= self.width || c[1] >= self.height {
                    return bad(format!("task cell {c:?} outside the grid"));
                }
                if self.obstacles.iter().any(|o| o.contains(c[0], c[1])) {
                    return bad(format!("task cell {c:?} lies in an obstacle"));
                }
            }
        }
        Ok(())
    }
}

/// Constrained free cells over free cells, kept as integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub constrained_cells: usize,
    pub free_cells: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.constrained_cells as f64 / self.free_cells as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScenario {
    pub scenario: Scenario,
    pub coverage: Coverage,
}

/// Free-cell index per cell, `None` for obstacles.
struct CellIndex {
    width: u32,
    height: u32,
    ids: Vec<Option<u32>>,
}

impl CellIndex {
    fn get(&self, x: i64, y: i64) -> Option<u32> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        self.ids[(y as u32 * self.width + x as u32) as usize]
    }
}

pub fn coverage(cfg: &GridScenarioConfig) -> Coverage {
    let mut free = 0;
    let mut constrained = 0;
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            if cfg.obstacles.iter().any(|o| o.contains(x, y)) {
                continue;
            }
            free += 1;
            if cfg.zones.iter().any(|z| z.rect.contains(x, y)) {
                constrained += 1;
            }
        }
    }
    Coverage {
        constrained_cells: constrained,
        free_cells: free,
    }
}

pub fn build_grid_scenario(cfg: &GridScenarioConfig) -> Result<GridScenario> {
    cfg.check()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut ids = vec![None; (w * h) as usize];
    let mut cells = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !cfg.obstacles.iter().any(|o| o.contains(x, y)) {
                ids[(y * w + x) as usize] = Some(cells.len() as u32);
                cells.push((x, y));
            }
        }
    }
    let index = CellIndex {
        width: w,
        height: h,
        ids,
    };
    if cells.is_empty() {
        return Err(Error::Config("grid has no free cells".into()));
    }
    if !free_space_connected(&index, &cells) {
        return Err(Error::Config("free space is disconnected".into()));
    }

    let cs = cfg.cell_size;
    let vertices: Vec<Vertex> = cells
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Vertex {
            id: VertexId(i as u32),
            x: Some((x as f64 + 0.5) * cs),
            y: Some((y as f64 + 0.5) * cs),
        })
        .collect();
    // (edge, direction, fast) for constraint compilation.
    let mut edges = Vec::new();
    let mut meta = Vec::new();
    for (i, &(x, y)) in cells.iter().enumerate() {
        for dir in Direction::ALL {
            let (dx, dy) = dir.delta();
            if let Some(j) = index.get(x as i64 + dx, y as i64 + dy) {
                for (fast, time) in [(true, cfg.fast_time), (false, cfg.slow_time)] {
                    edges.push(Edge {
                        id: EdgeId(edges.len() as u32),
                        tail: VertexId(i as u32),
                        head: VertexId(j),
                        time,
                    });
                    meta.push((dir, fast));
                }
            }
        }
    }
    let graph = EnvironmentGraph::new(cfg.name.clone(), vertices, edges)?;

    let in_rect = |v: VertexId, r: &CellRect| {
        let (x, y) = cells[v.index()];
        r.contains(x, y)
    };
    let mut rng = cfg.true_weight_seed.map(ChaCha8Rng::seed_from_u64);
    let mut draw = |given: Option<f64>, lo: f64, hi: f64| {
        given.or_else(|| {
            rng.as_mut()
                .map(|r| if lo < hi { r.random_range(lo..=hi) } else { lo })
        })
    };
    let mut constraints = Vec::new();
    let mut shapes = Vec::new();
    let mut push = |kind: ConstraintKind,
                    edge_ids: Vec<EdgeId>,
                    lo: f64,
                    hi: f64,
                    truth: Option<f64>,
                    z: &ZoneSpec| {
        if edge_ids.is_empty() {
            return Err(Error::Config(format!("zone {:?} covers no edges", z.rect)));
        }
        let id = constraints.len() as u32;
        constraints.push(Constraint {
            id,
            kind,
            edge_ids,
            weight_lo: lo,
            weight_hi: hi,
            true_weight: truth,
        });
        shapes.push(ConstraintShape {
            constraint_id: id,
            color: kind.color().to_string(),
            polygon: z.rect.polygon(cs),
            direction: z.direction.map(|d| {
                let (dx, dy) = d.delta();
                let d = if kind == ConstraintKind::RoadAgainst {
                    -1.0
                } else {
                    1.0
                };
                [dx as f64 * d, dy as f64 * d]
            }),
        });
        Ok(())
    };
    for z in &cfg.zones {
        let r = &z.rect;
        let touches = |e: &Edge| in_rect(e.tail, r) || in_rect(e.head, r);
        let inside = |e: &Edge| in_rect(e.tail, r) && in_rect(e.head, r);
        let select = |pred: &dyn Fn(&Edge, Direction, bool) -> bool| -> Vec<EdgeId> {
            graph
                .edges()
                .iter()
                .zip(&meta)
                .filter(|(e, &(d, f))| pred(e, d, f))
                .map(|(e, _)| e.id)
                .collect()
        };
        match z.kind {
            ZoneKind::Avoid => {
                let t = draw(z.true_weight, z.weight_lo, z.weight_hi);
                push(
                    ConstraintKind::Avoid,
                    select(&|e, _, _| touches(e)),
                    z.weight_lo,
                    z.weight_hi,
                    t,
                    z,
                )?
            }
            ZoneKind::SpeedLimit => {
                let t = draw(z.true_weight, z.weight_lo, z.weight_hi);
                push(
                    ConstraintKind::SpeedLimit,
                    select(&|e, _, fast| fast && touches(e)),
                    z.weight_lo,
                    z.weight_hi,
                    t,
                    z,
                )?
            }
            ZoneKind::Road => {
                let dir = z.direction.expect("checked");
                let t = draw(z.true_weight, z.weight_lo, z.weight_hi);
                push(
                    ConstraintKind::RoadAgainst,
                    select(&|e, d, _| inside(e) && d == dir.opposite()),
                    z.weight_lo,
                    z.weight_hi,
                    t,
                    z,
                )?;
                let reward = z.follow_reward.unwrap_or(0.0);
                let t = draw(z.follow_true_weight, -reward, 0.0);
                push(
                    ConstraintKind::RoadFollow,
                    select(&|e, d, _| inside(e) && d == dir),
                    -reward,
                    0.0,
                    t,
                    z,
                )?
            }
        }
    }

    let tasks = cfg
        .tasks
        .iter()
        .map(|t| {
            let v = |c: [u32; 2]| VertexId(index.get(c[0] as i64, c[1] as i64).expect("checked"));
            TaskSpec {
                start: v(t.start),
                goal: v(t.goal),
            }
        })
        .collect();
    let render = RenderInfo {
        width: w as f64 * cs,
        height: h as f64 * cs,
        cell_size: Some(cs),
        obstacles: cfg.obstacles.iter().map(|o| o.polygon(cs)).collect(),
        constraints: shapes,
    };
    let scenario = Scenario::new(graph, constraints, tasks, Some(render))?;
    Ok(GridScenario {
        scenario,
        coverage: coverage(cfg),
    })
}

fn free_space_connected(index: &CellIndex, cells: &[(u32, u32)]) -> bool {
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        let (x, y) = cells[i];
        for dir in Direction::ALL {
            let (dx, dy) = dir.delta();
            if let Some(j) = index.get(x as i64 + dx, y as i64 + dy) {
                if !seen[j as usize] {
                    seen[j as usize] = true;
                    count += 1;
                    queue.push_back(j as usize);
                }
            }
        }
    }
    count == cells.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_paths, path_cost, shortest_path, WeightVector};

    fn zone(kind: ZoneKind, rect: CellRect, hi: f64) -> ZoneSpec {
        ZoneSpec {
            kind,
            rect,
            direction: None,
            weight_lo: 0.0,
            weight_hi: hi,
            true_weight: None,
            follow_reward: None,
            follow_true_weight: None,
        }
    }

    #[test]
    fn three_by_three_edge_count() {
        let g = build_grid_scenario(&GridScenarioConfig::empty("g", 3, 3)).unwrap();
        // 12 adjacencies, two directions, two speed classes.
        let (w, h) = (3usize, 3usize);
        let adjacencies = (w - 1) * h + w * (h - 1);
        assert_eq!(g.scenario.graph.vertex_count(), 9);
        assert_eq!(g.scenario.graph.edge_count(), adjacencies * 2 * 2);
        assert_eq!(g.scenario.graph.edge_count(), 48);
    }

    #[test]
    fn avoid_cell_captures_incident_edges() {
        let mut cfg = GridScenarioConfig::empty("g", 3, 3);
        cfg.zones
            .push(zone(ZoneKind::Avoid, CellRect::new(1, 1, 1, 1), 5.0));
        let g = build_grid_scenario(&cfg).unwrap();
        let centre = VertexId(4);
        let expected: Vec<EdgeId> = g
            .scenario
            .graph
            .edges()
            .iter()
            .filter(|e| e.tail == centre || e.head == centre)
            .map(|e| e.id)
            .collect();
        assert_eq!(g.scenario.constraints[0].edge_ids, expected);
        assert_eq!(expected.len(), 16);
        assert_eq!(
            g.coverage,
            Coverage {
                constrained_cells: 1,
                free_cells: 9
            }
        );
    }

    #[test]
    fn expensive_speed_limit_forces_slow_edges() {
        let mut cfg = GridScenarioConfig::empty("g", 2, 2);
        cfg.zones
            .push(zone(ZoneKind::SpeedLimit, CellRect::new(0, 0, 1, 1), 100.0));
        let s = build_grid_scenario(&cfg).unwrap().scenario;
        let w = WeightVector(vec![100.0]);
        let task = s.tasks[0];
        let best = shortest_path(&s.graph, &s.constraints, &w, task).unwrap();
        let all = enumerate_paths(&s.graph, &s.constraints, task, 10_000).unwrap();
        let min = all
            .iter()
            .map(|p| path_cost(p, &w).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(path_cost(&best, &w).unwrap(), min);
        assert_eq!(best.violations, vec![0]);
        assert!(best
            .edge_ids
            .iter()
            .all(|&e| s.graph.edge(e).unwrap().time == 2.0));
    }

    #[test]
    fn road_splits_into_against_and_follow() {
        let mut cfg = GridScenarioConfig::empty("g", 4, 3);
        let mut road = zone(ZoneKind::Road, CellRect::new(0, 1, 3, 1), 4.0);
        road.direction = Some(Direction::East);
        road.follow_reward = Some(0.5);
        cfg.zones.push(road);
        let s = build_grid_scenario(&cfg).unwrap().scenario;
        assert_eq!(s.constraints.len(), 2);
        assert_eq!(s.constraints[0].kind, ConstraintKind::RoadAgainst);
        assert_eq!(s.constraints[1].kind, ConstraintKind::RoadFollow);
        assert_eq!(
            (s.constraints[1].weight_lo, s.constraints[1].weight_hi),
            (-0.5, 0.0)
        );
        // Three eastward moves inside the band, two speeds each.
        assert_eq!(s.constraints[0].edge_ids.len(), 6);
        assert_eq!(s.constraints[1].edge_ids.len(), 6);
        for &e in &s.constraints[1].edge_ids {
            let e = s.graph.edge(e).unwrap();
            assert!(s.graph.vertices()[e.head.index()].x > s.graph.vertices()[e.tail.index()].x);
        }
    }

    #[test]
    fn disconnected_free_space_is_rejected() {
        let mut cfg = GridScenarioConfig::empty("g", 3, 3);
        cfg.obstacles.push(CellRect::new(1, 0, 1, 2));
        assert!(
            matches!(build_grid_scenario(&cfg), Err(Error::Config(m)) if m.contains("disconnected"))
        );
    }

    #[test]
    fn oversized_follow_reward_is_rejected() {
        let mut cfg = GridScenarioConfig::empty("g", 3, 3);
        let mut road = zone(ZoneKind::Road, CellRect::new(0, 0, 2, 0), 4.0);
        road.direction = Some(Direction::East);
        road.follow_reward = Some(0.75);
        cfg.zones.push(road);
        assert!(build_grid_scenario(&cfg).is_err());
    }

    #[test]
    fn seeded_true_weights_are_in_range_and_reproducible() {
        let mut cfg = GridScenarioConfig::empty("g", 3, 3);
        cfg.zones
            .push(zone(ZoneKind::Avoid, CellRect::new(1, 1, 1, 1), 5.0));
        cfg.true_weight_seed = Some(8);
        let a = build_grid_scenario(&cfg).unwrap().scenario;
        let b = build_grid_scenario(&cfg).unwrap().scenario;
        assert_eq!(a, b);
        let t = a.constraints[0].true_weight.unwrap();
        assert!((0.0..=5.0).contains(&t));
    }

    #[test]
    fn generated_scenario_round_trips() {
        let mut cfg = GridScenarioConfig::empty("g", 4, 4);
        cfg.zones
            .push(zone(ZoneKind::Avoid, CellRect::new(1, 1, 2, 2), 5.0));
        let s = build_grid_scenario(&cfg).unwrap().scenario;
        assert_eq!(Scenario::from_json_str(&s.to_json_string()).unwrap(), s);
    }
}
