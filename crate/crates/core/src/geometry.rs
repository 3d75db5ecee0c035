//! Planar geometry: points, convex shapes, signed distances and visibility.
//!
//! Every shape is treated as a convex "core" (a point, a segment or a convex
//! polygon) swept by a radius. Circles are points with a radius, capsules are
//! segments with a radius, polygons have radius zero. Signed distance between
//! two shapes is the core distance minus both radii, where overlapping cores
//! report the negative penetration depth found by separating-axis search.
//!
//! Touching shapes (distance exactly zero) are not considered penetrating.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A point (or free vector) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Point2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2::new(x, y)
    }
}

// Points are written as `[x, y]` in every file format.
impl Serialize for Point2 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point2 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(deserializer)?;
        Ok(Point2::new(x, y))
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb::new(self.min - Point2::new(r, r), self.max + Point2::new(r, r))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    fn around(points: impl IntoIterator<Item = Point2>) -> Aabb {
        let mut b = Aabb::new(
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in points {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("circle radius must be > 0, got {0}")]
    CircleRadius(f64),
    #[error("capsule radius must be >= 0, got {0}")]
    CapsuleRadius(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error(
        "polygon vertices must be counter-clockwise and strictly convex (fails at vertex {0})"
    )]
    NotConvex(usize),
}

/// Workspace shape: obstacle or body envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { center: Point2, radius: f64 },
    Polygon { vertices: Vec<Point2> },
    Capsule { a: Point2, b: Point2, radius: f64 },
}

impl Shape {
    pub fn circle(center: Point2, radius: f64) -> Self {
        Shape::Circle { center, radius }
    }

    pub fn capsule(a: Point2, b: Point2, radius: f64) -> Self {
        Shape::Capsule { a, b, radius }
    }

    pub fn polygon(vertices: Vec<Point2>) -> Self {
        Shape::Polygon { vertices }
    }

    /// Axis-aligned rectangle as a CCW polygon.
    pub fn rect(min: Point2, max: Point2) -> Self {
        Shape::Polygon {
            vertices: vec![
                min,
                Point2::new(max.x, min.y),
                max,
                Point2::new(min.x, max.y),
            ],
        }
    }

    /// Checks the invariants required of scene obstacles.
    pub fn validate(&self) -> Result<(), ShapeError> {
        match self {
            Shape::Circle { center, radius } => {
                if !center.is_finite() || !radius.is_finite() {
                    return Err(ShapeError::NonFinite);
                }
                if *radius <= 0.0 {
                    return Err(ShapeError::CircleRadius(*radius));
                }
            }
            Shape::Capsule { a, b, radius } => {
                if !a.is_finite() || !b.is_finite() || !radius.is_finite() {
                    return Err(ShapeError::NonFinite);
                }
                if *radius < 0.0 {
                    return Err(ShapeError::CapsuleRadius(*radius));
                }
            }
            Shape::Polygon { vertices } => {
                if vertices.iter().any(|v| !v.is_finite()) {
                    return Err(ShapeError::NonFinite);
                }
                validate_convex_ccw(vertices)?;
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } | Shape::Capsule { radius, .. } => *radius,
            Shape::Polygon { .. } => 0.0,
        }
    }

    /// The convex core swept by [`Shape::radius`].
    fn core_points(&self) -> Core<'_> {
        match self {
            Shape::Circle { center, .. } => Core::Slice(std::slice::from_ref(center)),
            Shape::Capsule { a, b, .. } => Core::Segment([*a, *b]),
            Shape::Polygon { vertices } => Core::Slice(vertices),
        }
    }

    pub fn aabb(&self) -> Aabb {
        let r = self.radius();
        match self.core_points() {
            Core::Segment(s) => Aabb::around(s).inflate(r),
            Core::Slice(s) => Aabb::around(s.iter().copied()).inflate(r),
        }
    }

    /// True if `p` lies strictly inside the shape.
    pub fn contains_strict(&self, p: Point2) -> bool {
        match self {
            Shape::Circle { center, radius } => p.distance(*center) < *radius,
            Shape::Capsule { a, b, radius } => point_segment_distance(p, *a, *b).0 < *radius,
            Shape::Polygon { vertices } => polygon_contains_strict(vertices, p),
        }
    }
}

enum Core<'a> {
    Slice(&'a [Point2]),
    Segment([Point2; 2]),
}

impl Core<'_> {
    fn points(&self) -> &[Point2] {
        match self {
            Core::Slice(s) => s,
            Core::Segment(s) => s,
        }
    }
}

fn validate_convex_ccw(vertices: &[Point2]) -> Result<(), ShapeError> {
    let n = vertices.len();
    if n < 3 {
        return Err(ShapeError::TooFewVertices(n));
    }
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        if (b - a).cross(c - b) <= 0.0 {
            return Err(ShapeError::NotConvex((i + 1) % n));
        }
    }
    // Local left turns everywhere still admit star polygons winding twice.
    let area2: f64 = (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum();
    let turning: f64 = (0..n)
        .map(|i| {
            let a = vertices[(i + 1) % n] - vertices[i];
            let b = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            a.cross(b).atan2(a.dot(b))
        })
        .sum();
    if area2 <= 0.0 || (turning - std::f64::consts::TAU).abs() > 1e-6 {
        return Err(ShapeError::NotConvex(0));
    }
    Ok(())
}

fn polygon_contains_strict(vertices: &[Point2], p: Point2) -> bool {
    let n = vertices.len();
    (0..n).all(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        (b - a).cross(p - a) > 0.0
    })
}

/// Distance from `p` to segment `ab` and the closest point on the segment.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> (f64, Point2) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = a + ab * t;
    (p.distance(c), c)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segments `ab` and `cd` share at least one point.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Distance between segments `ab` and `cd` with the closest points on each.
///
/// Evaluated as the minimum of the four endpoint projections, which makes it
/// exactly symmetric in its arguments.
pub fn segment_segment_distance(
    a: Point2,
    b: Point2,
    c: Point2,
    d: Point2,
) -> (f64, Point2, Point2) {
    if segments_intersect(a, b, c, d) {
        let p = intersection_point(a, b, c, d);
        return (0.0, p, p);
    }
    let candidates = [
        {
            let (dist, q) = point_segment_distance(a, c, d);
            (dist, a, q)
        },
        {
            let (dist, q) = point_segment_distance(b, c, d);
            (dist, b, q)
        },
        {
            let (dist, p) = point_segment_distance(c, a, b);
            (dist, p, c)
        },
        {
            let (dist, p) = point_segment_distance(d, a, b);
            (dist, p, d)
        },
    ];
    candidates
        .into_iter()
        .fold((f64::INFINITY, a, c), |best, cand| {
            if cand.0 < best.0 {
                cand
            } else {
                best
            }
        })
}

fn intersection_point(a: Point2, b: Point2, c: Point2, d: Point2) -> Point2 {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    if denom.abs() > 0.0 {
        let t = ((c - a).cross(s) / denom).clamp(0.0, 1.0);
        a + r * t
    } else {
        // Collinear overlap: any shared endpoint will do.
        [a, b, c, d]
            .into_iter()
            .find(|&p| on_segment(a, b, p) && on_segment(c, d, p))
            .unwrap_or(a)
    }
}

/// Edges of a core: a single point yields one degenerate edge, a segment one
/// edge, a polygon its closed boundary.
fn edges(points: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    let n = points.len();
    let count = match n {
        0 => 0,
        1 | 2 => 1,
        _ => n,
    };
    (0..count).map(move |i| (points[i], points[(i + 1) % n]))
}

/// Outward-independent edge normals used as separating axes.
fn axes(points: &[Point2]) -> Vec<Point2> {
    if points.len() < 2 {
        return Vec::new();
    }
    edges(points)
        .filter_map(|(a, b)| (b - a).perp().normalized())
        .collect()
}

fn project(points: &[Point2], axis: Point2) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = p.dot(axis);
            (lo.min(v), hi.max(v))
        })
}

fn support(points: &[Point2], dir: Point2) -> Point2 {
    points
        .iter()
        .copied()
        .fold((Point2::ZERO, f64::NEG_INFINITY), |(best, bv), p| {
            let v = p.dot(dir);
            if v > bv {
                (p, v)
            } else {
                (best, bv)
            }
        })
        .0
}

struct CoreDistance {
    /// Positive separation, or negative penetration depth.
    distance: f64,
    on_a: Point2,
    on_b: Point2,
    /// Unit direction from A towards B.
    normal: Point2,
}

fn core_distance(a: &[Point2], b: &[Point2]) -> CoreDistance {
    let mut best = (f64::INFINITY, a[0], b[0]);
    for (a0, a1) in edges(a) {
        for (b0, b1) in edges(b) {
            let (d, pa, pb) = segment_segment_distance(a0, a1, b0, b1);
            if d < best.0 {
                best = (d, pa, pb);
            }
        }
    }
    let contained = (a.len() >= 3 && polygon_contains_strict(a, b[0]))
        || (b.len() >= 3 && polygon_contains_strict(b, a[0]));
    if best.0 > 0.0 && !contained {
        let normal = (best.2 - best.1)
            .normalized()
            .unwrap_or(Point2::new(1.0, 0.0));
        return CoreDistance {
            distance: best.0,
            on_a: best.1,
            on_b: best.2,
            normal,
        };
    }

    // Touching or overlapping: minimum translation along candidate axes.
    let mut candidates = axes(a);
    candidates.extend(axes(b));
    let mut depth = f64::INFINITY;
    let mut normal = Point2::new(1.0, 0.0);
    for axis in candidates {
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        let forward = amax - bmin;
        let backward = bmax - amin;
        let (overlap, n) = if forward <= backward {
            (forward, axis)
        } else {
            (backward, -axis)
        };
        if overlap < depth {
            depth = overlap;
            normal = n;
        }
    }
    if !depth.is_finite() {
        // Two coincident points.
        depth = 0.0;
    }
    let depth = depth.max(0.0);
    let (on_a, on_b) = if depth == 0.0 {
        (best.1, best.2)
    } else {
        (support(a, normal), support(b, -normal))
    };
    CoreDistance {
        distance: -depth,
        on_a,
        on_b,
        normal,
    }
}

/// Result of a signed distance query between two shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeDistance {
    /// Signed distance; negative means penetration.
    pub distance: f64,
    /// Witness point on the first shape.
    pub on_a: Point2,
    /// Witness point on the second shape.
    pub on_b: Point2,
    /// Unit direction from the first shape towards the second.
    pub normal: Point2,
}

/// Signed distance between two shapes.
pub fn shape_distance(a: &Shape, b: &Shape) -> ShapeDistance {
    let ca = a.core_points();
    let cb = b.core_points();
    let core = core_distance(ca.points(), cb.points());
    let (ra, rb) = (a.radius(), b.radius());
    ShapeDistance {
        distance: core.distance - ra - rb,
        on_a: core.on_a + core.normal * ra,
        on_b: core.on_b - core.normal * rb,
        normal: core.normal,
    }
}

/// Closest obstacle contact of an embedded body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    /// Index of the body shape carrying the witness (link index for chains).
    pub body_shape: usize,
    pub obstacle: usize,
    pub body_point: Point2,
    pub obstacle_point: Point2,
    /// Unit direction from the body towards the obstacle.
    pub normal: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceReport {
    /// Minimum signed distance; `+inf` when there are no obstacles.
    pub min_distance: f64,
    pub witness: Option<Witness>,
}

/// Minimum signed distance between any body shape and any obstacle.
pub fn clearance(body: &[Shape], obstacles: &[Shape]) -> ClearanceReport {
    let mut report = ClearanceReport {
        min_distance: f64::INFINITY,
        witness: None,
    };
    for (i, shape) in body.iter().enumerate() {
        for (j, obstacle) in obstacles.iter().enumerate() {
            let d = shape_distance(shape, obstacle);
            if d.distance < report.min_distance {
                report.min_distance = d.distance;
                report.witness = Some(Witness {
                    body_shape: i,
                    obstacle: j,
                    body_point: d.on_a,
                    obstacle_point: d.on_b,
                    normal: d.normal,
                });
            }
        }
    }
    report
}

/// Tolerance for deciding that a segment runs along a polygon edge.
const LOS_EPS: f64 = 1e-12;

/// True iff the open segment `pq` misses the interior of `shape`.
pub fn segment_clear_of(p: Point2, q: Point2, shape: &Shape) -> bool {
    match shape {
        Shape::Circle { center, radius } => point_segment_distance(*center, p, q).0 >= *radius,
        Shape::Capsule { a, b, radius } => {
            if *radius == 0.0 {
                // A zero-width capsule has no interior.
                return true;
            }
            segment_segment_distance(p, q, *a, *b).0 >= *radius
        }
        Shape::Polygon { vertices } => !segment_enters_polygon(p, q, vertices),
    }
}

/// Parametric clip of `pq` against the closed polygon; the segment enters
/// the interior iff the clipped interval has positive length and its midpoint
/// is strictly inside every edge half-plane.
fn segment_enters_polygon(p: Point2, q: Point2, vertices: &[Point2]) -> bool {
    let n = vertices.len();
    let dir = q - p;
    let scale = vertices
        .iter()
        .chain([&p, &q])
        .fold(1.0_f64, |m, v| m.max(v.x.abs()).max(v.y.abs()));
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut planes = Vec::with_capacity(n);
    for i in 0..n {
        let a = vertices[i];
        let edge = vertices[(i + 1) % n] - a;
        let len = edge.norm();
        // Signed distance to the edge line: f(t) = f0 + t * df, inside when > 0.
        let f0 = edge.cross(p - a) / len;
        let df = edge.cross(dir) / len;
        planes.push((f0, df));
        if df == 0.0 {
            if f0 < 0.0 {
                return false;
            }
        } else {
            let t = -f0 / df;
            if df > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
        if lo >= hi {
            return false;
        }
    }
    let mid = 0.5 * (lo + hi);
    planes
        .iter()
        .all(|&(f0, df)| f0 + mid * df > LOS_EPS * scale)
}
