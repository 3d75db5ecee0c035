//! Reference planners.
//!
//! * [`visibility_graph_path`]: exact Euclidean shortest paths for a point
//!   among convex polygons.
//! * [`grid_bfs_path`]: 8-connected grid search; works for any obstacle set
//!   and any disc radius.
//! * [`potential_descent_run`]: attraction plus repulsion applied every
//!   iteration with nothing else, the classical local planner that gets
//!   trapped in local minima.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::agents::AgentKind;
use crate::engine::{self, AgentSpec};
use crate::geometry::{shape_distance, Aabb, Point2, Shape};
use crate::scenario::{Scenario, ScenarioError};
use crate::scene::Scene;
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyline {
    pub vertices: Vec<Point2>,
    pub length: f64,
}

impl Polyline {
    pub fn new(vertices: Vec<Point2>) -> Self {
        let length = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
        Self { vertices, length }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub found: bool,
    pub path: Option<Polyline>,
    pub length: Option<f64>,
}

impl OracleResult {
    fn found(path: Polyline) -> Self {
        Self {
            found: true,
            length: Some(path.length),
            path: Some(path),
        }
    }

    fn not_found() -> Self {
        Self {
            found: false,
            path: None,
            length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("obstacle {0} is not a polygon; the visibility graph only supports polygons")]
    Unsupported(usize),
    #[error("start point lies inside obstacle {0}")]
    StartInObstacle(usize),
    #[error("goal point lies inside obstacle {0}")]
    GoalInObstacle(usize),
    #[error("grid resolution must be finite and > 0, got {0}")]
    Resolution(f64),
    #[error("robot radius must be finite and >= 0, got {0}")]
    Radius(f64),
}

/// Offsets a CCW convex polygon outwards by `r` with mitred corners. The
/// result contains the true disc-swept region, so paths around it are an
/// upper bound on the disc robot's shortest path.
pub fn inflate_polygon(vertices: &[Point2], r: f64) -> Vec<Point2> {
    if r == 0.0 {
        return vertices.to_vec();
    }
    let n = vertices.len();
    let outward = |i: usize| {
        let e = vertices[(i + 1) % n] - vertices[i];
        Point2::new(e.y, -e.x).normalized().unwrap_or(Point2::ZERO)
    };
    (0..n)
        .map(|i| {
            let n1 = outward((i + n - 1) % n);
            let n2 = outward(i);
            vertices[i] + (n1 + n2) * (r / (1.0 + n1.dot(n2)))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, ties broken by node for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact shortest path for a disc of `radius` (0 for a point) among
/// polygonal obstacles. Nodes are start, goal and obstacle vertices; edges
/// join mutually visible nodes.
pub fn visibility_graph_path(
    scene: &Scene,
    start: Point2,
    goal: Point2,
    radius: f64,
) -> Result<OracleResult, OracleError> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(OracleError::Radius(radius));
    }
    let mut polygons = Vec::with_capacity(scene.obstacles.len());
    for (i, o) in scene.obstacles.iter().enumerate() {
        match o {
            Shape::Polygon { vertices } => {
                polygons.push(Shape::polygon(inflate_polygon(vertices, radius)))
            }
            _ => return Err(OracleError::Unsupported(i)),
        }
    }
    if let Some(i) = polygons.iter().position(|p| p.contains_strict(start)) {
        return Err(OracleError::StartInObstacle(i));
    }
    if let Some(i) = polygons.iter().position(|p| p.contains_strict(goal)) {
        return Err(OracleError::GoalInObstacle(i));
    }

    let mut nodes = vec![start, goal];
    for p in &polygons {
        let Shape::Polygon { vertices } = p else {
            unreachable!()
        };
        for &v in vertices {
            if !polygons.iter().any(|o| o.contains_strict(v)) {
                nodes.push(v);
            }
        }
    }
    let visible = |a: Point2, b: Point2| {
        polygons
            .iter()
            .all(|o| crate::geometry::segment_clear_of(a, b, o))
    };

    // Dense Dijkstra; node counts are small.
    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    while let Some(u) = (0..n)
        .filter(|&i| !done[i] && dist[i].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[u] = true;
        if u == 1 {
            break;
        }
        for v in 0..n {
            if done[v] {
                continue;
            }
            let d = dist[u] + nodes[u].distance(nodes[v]);
            if d < dist[v] && visible(nodes[u], nodes[v]) {
                dist[v] = d;
                prev[v] = u;
            }
        }
    }
    if !dist[1].is_finite() {
        return Ok(OracleResult::not_found());
    }
    let mut path = vec![nodes[1]];
    let mut cur = 1;
    while cur != 0 {
        cur = prev[cur];
        path.push(nodes[cur]);
    }
    path.reverse();
    Ok(OracleResult::found(Polyline::new(path)))
}

/// Occupancy grid over the scene bounds with lazily evaluated cells and
/// edges. A cell is free when a disc at its center clears every obstacle; an
/// edge is usable when the disc swept along it does.
struct Grid<'a> {
    bounds: Aabb,
    h: f64,
    nx: usize,
    ny: usize,
    radius: f64,
    obstacles: Vec<(Aabb, &'a Shape)>,
    free: Vec<Option<bool>>,
}

impl<'a> Grid<'a> {
    fn new(scene: &'a Scene, h: f64, radius: f64) -> Self {
        let bounds = scene.bounds;
        let nx = (bounds.width() / h).ceil().max(1.0) as usize;
        let ny = (bounds.height() / h).ceil().max(1.0) as usize;
        Self {
            bounds,
            h,
            nx,
            ny,
            radius,
            obstacles: scene.obstacles.iter().map(|o| (o.aabb(), o)).collect(),
            free: vec![None; nx * ny],
        }
    }

    fn center(&self, idx: usize) -> Point2 {
        let (i, j) = (idx % self.nx, idx / self.nx);
        Point2::new(
            self.bounds.min.x + (i as f64 + 0.5) * self.h,
            self.bounds.min.y + (j as f64 + 0.5) * self.h,
        )
    }

    fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.bounds.min.x) / self.h).floor() as i64,
            ((p.y - self.bounds.min.y) / self.h).floor() as i64,
        )
    }

    fn index(&self, i: i64, j: i64) -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny)
            .then(|| j as usize * self.nx + i as usize)
    }

    fn sweep_clear(&self, a: Point2, b: Point2) -> bool {
        let swept = Shape::capsule(a, b, self.radius);
        let bbox = swept.aabb();
        self.obstacles
            .iter()
            .filter(|(ob, _)| ob.intersects(&bbox))
            .all(|(_, o)| shape_distance(&swept, o).distance >= 0.0)
    }

    fn is_free(&mut self, idx: usize) -> bool {
        if let Some(f) = self.free[idx] {
            return f;
        }
        let c = self.center(idx);
        let f = self.sweep_clear(c, c);
        self.free[idx] = Some(f);
        f
    }

    /// Free cells in the 3×3 block around `p` reachable from `p` in a
    /// straight line.
    fn attach(&mut self, p: Point2) -> Vec<(usize, f64)> {
        let (ci, cj) = self.cell_of(p);
        let mut out = Vec::new();
        for dj in -1..=1 {
            for di in -1..=1 {
                if let Some(idx) = self.index(ci + di, cj + dj) {
                    let c = self.center(idx);
                    if self.is_free(idx) && self.sweep_clear(p, c) {
                        out.push((idx, p.distance(c)));
                    }
                }
            }
        }
        out
    }
}

/// Shortest 8-connected grid path at resolution `h` for a disc of `radius`.
/// The returned polyline runs start → cell centers → goal and is collision
/// free, so its length is an upper bound on the true optimum.
pub fn grid_bfs_path(
    scene: &Scene,
    start: Point2,
    goal: Point2,
    h: f64,
    radius: f64,
) -> Result<OracleResult, OracleError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(OracleError::Resolution(h));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(OracleError::Radius(radius));
    }
    let mut grid = Grid::new(scene, h, radius);
    let sources = grid.attach(start);
    let sinks = grid.attach(goal);
    if sources.is_empty() || sinks.is_empty() {
        return Ok(OracleResult::not_found());
    }
    let cells = grid.nx * grid.ny;
    // Node `cells` is the virtual goal.
    let target = cells;
    let mut sink_cost = vec![f64::INFINITY; cells];
    for &(idx, c) in &sinks {
        sink_cost[idx] = c;
    }
    let mut dist = vec![f64::INFINITY; cells + 1];
    let mut prev = vec![usize::MAX; cells + 1];
    let mut heap = BinaryHeap::new();
    for &(idx, c) in &sources {
        if c < dist[idx] {
            dist[idx] = c;
            heap.push(Entry { cost: c, node: idx });
        }
    }
    const STEPS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    while let Some(Entry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        if node == target {
            break;
        }
        if sink_cost[node].is_finite() {
            let c = cost + sink_cost[node];
            if c < dist[target] {
                dist[target] = c;
                prev[target] = node;
                heap.push(Entry {
                    cost: c,
                    node: target,
                });
            }
        }
        let (i, j) = ((node % grid.nx) as i64, (node / grid.nx) as i64);
        let here = grid.center(node);
        for (di, dj) in STEPS {
            let Some(next) = grid.index(i + di, j + dj) else {
                continue;
            };
            let step = if di != 0 && dj != 0 {
                std::f64::consts::SQRT_2 * h
            } else {
                h
            };
            let c = cost + step;
            if c >= dist[next] || !grid.is_free(next) {
                continue;
            }
            if !grid.sweep_clear(here, grid.center(next)) {
                continue;
            }
            dist[next] = c;
            prev[next] = node;
            heap.push(Entry {
                cost: c,
                node: next,
            });
        }
    }
    if !dist[target].is_finite() {
        return Ok(OracleResult::not_found());
    }
    let mut path = vec![goal];
    let mut cur = prev[target];
    while cur != usize::MAX {
        path.push(grid.center(cur));
        cur = prev[cur];
    }
    path.push(start);
    path.reverse();
    Ok(OracleResult::found(Polyline::new(path)))
}

/// Default repulsion when the scenario declares no collision agent.
const DEFAULT_INFLUENCE_FRACTION: f64 = 0.05;
const DEFAULT_GAIN: f64 = 0.01;

/// Classical potential-field descent on the scenario's scene and model:
/// attraction and repulsion, both bounded by `step`, summed and applied on
/// every iteration with no scheduling, perturbation or operator. Stops at
/// the goal, on stall, or after `max_iters`.
pub fn potential_descent_run(
    scenario: &Scenario,
    step: f64,
    max_iters: u64,
) -> Result<Trace, ScenarioError> {
    let mut baseline = scenario.clone();
    let attraction = scenario
        .agents
        .iter()
        .find(|a| matches!(a.kind, AgentKind::Attraction { .. }))
        .map(|a| a.kind.clone())
        .unwrap_or(AgentKind::Attraction {
            frame: Some(scenario.scene.goal.frame.clone()),
            goal: Some(scenario.scene.goal.point),
        });
    let collision = scenario
        .agents
        .iter()
        .find(|a| matches!(a.kind, AgentKind::Collision { .. }))
        .map(|a| a.kind.clone())
        .unwrap_or(AgentKind::Collision {
            influence: DEFAULT_INFLUENCE_FRACTION * scenario.scene.bounds.diagonal(),
            gain: DEFAULT_GAIN,
        });
    baseline.name = format!("{}-descent", scenario.name);
    baseline.agents = vec![
        AgentSpec::new("attraction", attraction, 1, step),
        AgentSpec::new("collision", collision, 1, step),
    ];
    baseline.operator_script.clear();
    baseline.engine.max_ticks = max_iters;
    baseline.engine.halt_on_stall = true;
    engine::run(baseline)
}
