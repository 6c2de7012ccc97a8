//! k-nearest probabilistic roadmaps over planar maps with polygon obstacles.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{distance, point_in_polygon, segment_hits_polygon};
use crate::error::{Error, Result};
use crate::graph::{
    Constraint, ConstraintKind, Edge, EdgeId, EnvironmentGraph, TaskSpec, Vertex, VertexId,
};
use crate::scenario::{ConstraintShape, Point, Polygon, RenderInfo, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrmTask {
    pub start: Point,
    pub goal: Point,
}

fn default_sides() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmScenarioConfig {
    pub name: String,
    /// Map extent in meters.
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
    /// Vertex count.
    pub n: usize,
    /// Neighbour count.
    pub k: usize,
    /// Robot speed in m/s.
    pub speed: f64,
    pub constraint_count: usize,
    /// Radius range of constraint polygons.
    pub constraint_radius: [f64; 2],
    #[serde(default = "default_sides")]
    pub constraint_sides: usize,
    #[serde(default)]
    pub weight_lo: f64,
    pub weight_hi: f64,
    /// Task endpoints snap to the nearest roadmap vertex. When empty, one task
    /// runs from the first kept vertex to the vertex farthest from it.
    #[serde(default)]
    pub tasks: Vec<PrmTask>,
    #[serde(default = "default_true")]
    pub sample_true_weights: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl PrmScenarioConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 || self.k < 1 {
            return bad(format!(
                "need n >= 2 and k >= 1, got n = {} and k = {}",
                self.n, self.k
            ));
        }
        if !(self.width > 0.0 && self.height > 0.0 && self.speed > 0.0) {
            return bad("width, height and speed must be positive".into());
        }
        let [r0, r1] = self.constraint_radius;
        if self.constraint_count > 0 && !(r0 > 0.0 && r0 <= r1) {
            return bad(format!("invalid constraint radius range [{r0}, {r1}]"));
        }
        if self.constraint_sides < 3 {
            return bad("constraint polygons need at least 3 sides".into());
        }
        if !(self.weight_lo >= 0.0 && self.weight_lo <= self.weight_hi) {
            return bad(format!(
                "invalid weight interval [{}, {}]",
                self.weight_lo, self.weight_hi
            ));
        }
        for o in &self.obstacles {
            if o.0.len() < 3 {
                return bad("obstacle polygons need at least 3 vertices".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrmScenario {
    pub scenario: Scenario,
    pub points: Vec<Point>,
}

fn collides(p: Point, obstacles: &[Polygon]) -> bool {
    obstacles.iter().any(|o| point_in_polygon(p, o))
}

fn visible(a: Point, b: Point, obstacles: &[Polygon]) -> bool {
    !obstacles.iter().any(|o| segment_hits_polygon(a, b, o))
}

fn random_polygon(rng: &mut ChaCha8Rng, centre: Point, radius: f64, sides: usize) -> Polygon {
    let step = TAU / sides as f64;
    Polygon(
        (0..sides)
            .map(|i| {
                let angle = step * (i as f64 + rng.random_range(0.0..0.8));
                let r = radius * rng.random_range(0.6..=1.0);
                [centre[0] + r * angle.cos(), centre[1] + r * angle.sin()]
            })
            .collect(),
    )
}

pub fn build_prm_scenario(cfg: &PrmScenarioConfig) -> Result<PrmScenario> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut points: Vec<Point> = Vec::with_capacity(cfg.n);
    let mut attempts = 0usize;
    while points.len() < cfg.n {
        attempts += 1;
        if attempts > 1000 * cfg.n {
            return Err(Error::Config(
                "could not sample collision-free vertices".into(),
            ));
        }
        let p = [
            rng.random_range(0.0..cfg.width),
            rng.random_range(0.0..cfg.height),
        ];
        if !collides(p, &cfg.obstacles) {
            points.push(p);
        }
    }

    let mut links = BTreeSet::new();
    for i in 0..points.len() {
        let mut order: Vec<usize> = (0..points.len()).filter(|&j| j != i).collect();
        let d2 = |j: usize| {
            let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
            dx * dx + dy * dy
        };
        order.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        let mut found = 0;
        for j in order {
            if found == cfg.k {
                break;
            }
            if visible(points[i], points[j], &cfg.obstacles) {
                links.insert((i.min(j), i.max(j)));
                found += 1;
            }
        }
    }

    let keep = largest_component(points.len(), &links);
    let mut new_id = vec![None; points.len()];
    for (k, &old) in keep.iter().enumerate() {
        new_id[old] = Some(k as u32);
    }
    let kept_points: Vec<Point> = keep.iter().map(|&i| points[i]).collect();
    let vertices: Vec<Vertex> = kept_points
        .iter()
        .enumerate()
        .map(|(i, p)| Vertex {
            id: VertexId(i as u32),
            x: Some(p[0]),
            y: Some(p[1]),
        })
        .collect();
    let mut edges = Vec::new();
    for &(a, b) in &links {
        if let (Some(na), Some(nb)) = (new_id[a], new_id[b]) {
            let time = distance(points[a], points[b]) / cfg.speed;
            for (t, h) in [(na, nb), (nb, na)] {
                edges.push(Edge {
                    id: EdgeId(edges.len() as u32),
                    tail: VertexId(t),
                    head: VertexId(h),
                    time,
                });
            }
        }
    }
    let graph = EnvironmentGraph::new(cfg.name.clone(), vertices, edges)?;

    let nearest = |p: Point| -> usize {
        (0..points.len())
            .min_by(|&a, &b| {
                distance(p, points[a])
                    .total_cmp(&distance(p, points[b]))
                    .then(a.cmp(&b))
            })
            .expect("n >= 2")
    };
    let mut tasks = Vec::new();
    for t in &cfg.tasks {
        let snap = |p: Point| {
            new_id[nearest(p)].map(VertexId).ok_or_else(|| {
                Error::Config(format!(
                    "task endpoint {p:?} snaps outside the largest roadmap component; try another seed"
                ))
            })
        };
        tasks.push(TaskSpec {
            start: snap(t.start)?,
            goal: snap(t.goal)?,
        });
    }
    if tasks.is_empty() {
        let far = (0..kept_points.len())
            .max_by(|&a, &b| {
                distance(kept_points[0], kept_points[a])
                    .total_cmp(&distance(kept_points[0], kept_points[b]))
                    .then(b.cmp(&a))
            })
            .expect("nonempty");
        tasks.push(TaskSpec {
            start: VertexId(0),
            goal: VertexId(far as u32),
        });
    }

    let mut constraints = Vec::new();
    let mut shapes = Vec::new();
    for id in 0..cfg.constraint_count as u32 {
        let mut placed = None;
        for _ in 0..1000 {
            let centre = [
                rng.random_range(0.0..cfg.width),
                rng.random_range(0.0..cfg.height),
            ];
            let radius = rng.random_range(cfg.constraint_radius[0]..=cfg.constraint_radius[1]);
            let poly = random_polygon(&mut rng, centre, radius, cfg.constraint_sides);
            let inside: Vec<bool> = kept_points
                .iter()
                .map(|&p| point_in_polygon(p, &poly))
                .collect();
            let edge_ids: Vec<EdgeId> = graph
                .edges()
                .iter()
                .filter(|e| inside[e.tail.index()] || inside[e.head.index()])
                .map(|e| e.id)
                .collect();
            if !edge_ids.is_empty() {
                placed = Some((poly, edge_ids));
                break;
            }
        }
        let (poly, edge_ids) = placed.ok_or_else(|| {
            Error::Config("could not place a constraint polygon over any vertex".into())
        })?;
        let truth = cfg
            .sample_true_weights
            .then(|| rng.random_range(cfg.weight_lo..=cfg.weight_hi));
        constraints.push(Constraint {
            id,
            kind: ConstraintKind::Generic,
            edge_ids,
            weight_lo: cfg.weight_lo,
            weight_hi: cfg.weight_hi,
            true_weight: truth,
        });
        shapes.push(ConstraintShape {
            constraint_id: id,
            color: ConstraintKind::Generic.color().to_string(),
            polygon: poly,
            direction: None,
        });
    }

    let render = RenderInfo {
        width: cfg.width,
        height: cfg.height,
        cell_size: None,
        obstacles: cfg.obstacles.clone(),
        constraints: shapes,
    };
    let scenario = Scenario::new(graph, constraints, tasks, Some(render))?;
    Ok(PrmScenario {
        scenario,
        points: kept_points,
    })
}

/// Vertices of the largest connected component in ascending order; ties go
/// to the component holding the lowest vertex.
fn largest_component(n: usize, links: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in links {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut members = vec![s];
        comp[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = s;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::geometry::segments_intersect;

    fn cfg(n: usize, k: usize, constraints: usize, seed: u64) -> PrmScenarioConfig {
        PrmScenarioConfig {
            name: "prm".into(),
            width: 50.0,
            height: 50.0,
            obstacles: vec![
                Polygon::rect(10.0, 10.0, 20.0, 40.0),
                Polygon::rect(30.0, 0.0, 35.0, 30.0),
            ],
            n,
            k,
            speed: 1.5,
            constraint_count: constraints,
            constraint_radius: [3.0, 8.0],
            constraint_sides: 6,
            weight_lo: 0.0,
            weight_hi: 10.0,
            tasks: Vec::new(),
            sample_true_weights: true,
            seed,
        }
    }

    #[test]
    fn two_visible_vertices() {
        let mut c = cfg(2, 1, 0, 1);
        c.obstacles.clear();
        let s = build_prm_scenario(&c).unwrap().scenario;
        assert_eq!(s.graph.vertex_count(), 2);
        assert_eq!(s.graph.edge_count(), 2);
    }

    #[test]
    fn no_edge_crosses_an_obstacle() {
        let c = cfg(150, 6, 5, 3);
        let p = build_prm_scenario(&c).unwrap();
        for e in p.scenario.graph.edges() {
            let (a, b) = (p.points[e.tail.index()], p.points[e.head.index()]);
            for o in &c.obstacles {
                let v = &o.0;
                for i in 0..v.len() {
                    assert!(!segments_intersect(a, b, v[i], v[(i + 1) % v.len()]));
                }
                assert!(!point_in_polygon(a, o));
            }
        }
    }

    #[test]
    fn times_are_euclidean_and_metric() {
        let c = cfg(120, 8, 0, 5);
        let p = build_prm_scenario(&c).unwrap();
        let g = &p.scenario.graph;
        let mut time = std::collections::HashMap::new();
        for e in g.edges() {
            let d = distance(p.points[e.tail.index()], p.points[e.head.index()]);
            assert!((e.time - d / c.speed).abs() < 1e-12);
            time.insert((e.tail.0, e.head.0), e.time);
        }
        for (&(a, b), &tab) in &time {
            for e in g.out_edges(VertexId(b)) {
                let e = g.edge(*e).unwrap();
                if let Some(&tac) = time.get(&(a, e.head.0)) {
                    assert!(tac <= tab + e.time + 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_strongly_connected() {
        let a = build_prm_scenario(&cfg(200, 5, 8, 9)).unwrap();
        let b = build_prm_scenario(&cfg(200, 5, 8, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.scenario.graph.is_strongly_connected());
        assert_eq!(a.scenario.constraints.len(), 8);
        for c in &a.scenario.constraints {
            let t = c.true_weight.unwrap();
            assert!((0.0..=10.0).contains(&t));
        }
    }

    #[test]
    fn constraint_edges_touch_a_vertex_inside_the_polygon() {
        let p = build_prm_scenario(&cfg(150, 6, 4, 2)).unwrap();
        let render = p.scenario.render.as_ref().unwrap();
        for (c, shape) in p.scenario.constraints.iter().zip(&render.constraints) {
            for &e in &c.edge_ids {
                let e = p.scenario.graph.edge(e).unwrap();
                assert!(
                    point_in_polygon(p.points[e.tail.index()], &shape.polygon)
                        || point_in_polygon(p.points[e.head.index()], &shape.polygon)
                );
            }
        }
    }

    #[test]
    fn task_points_snap_to_vertices() {
        let mut c = cfg(100, 6, 0, 4);
        c.tasks.push(PrmTask {
            start: [1.0, 1.0],
            goal: [49.0, 49.0],
        });
        let s = build_prm_scenario(&c).unwrap().scenario;
        assert_ne!(s.tasks[0].start, s.tasks[0].goal);
    }
}
