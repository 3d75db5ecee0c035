//! Kinematic models and their embedding into the workspace.
//!
//! Three models are supported: a (disc) point robot with `q = (x, y)`, a
//! rigid convex polygon with `q = (x, y, θ)`, and a planar serial chain with
//! one revolute joint per link and capsule-shaped links. Chain angles are
//! relative and accumulate along the chain; angles are never wrapped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{shape_distance, Point2, Shape};

/// Frame present on every model.
pub const END_EFFECTOR: &str = "ee";
/// Midpoint of the last chain link.
pub const HEAD: &str = "head";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("configuration has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("body shape index {0} out of range")]
    UnknownShape(usize),
}

/// Box limits on every configuration coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl JointLimits {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for ((v, lo), hi) in q.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.len()
            && q.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn mid(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn range(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }
}

/// Body geometry of a model, independent of its limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Body {
    /// Disc of the given radius (zero for a true point).
    Point { radius: f64 },
    /// Convex polygon given in its local frame, CCW.
    RigidPolygon { vertices: Vec<Point2> },
    /// Serial chain of revolute joints starting at `base`.
    Chain {
        base: Point2,
        link_lengths: Vec<f64>,
        link_radii: Vec<f64>,
    },
}

impl Body {
    pub fn dimension(&self) -> usize {
        match self {
            Body::Point { .. } => 2,
            Body::RigidPolygon { .. } => 3,
            Body::Chain { link_lengths, .. } => link_lengths.len(),
        }
    }

    pub fn frame_ids(&self) -> &'static [&'static str] {
        match self {
            Body::Point { .. } | Body::RigidPolygon { .. } => &[END_EFFECTOR],
            Body::Chain { .. } => &[END_EFFECTOR, HEAD],
        }
    }

    pub fn has_frame(&self, frame: &str) -> bool {
        self.frame_ids().contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicModel {
    pub body: Body,
    pub limits: JointLimits,
}

/// A model's shapes and named frames at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedBody {
    pub shapes: Vec<Shape>,
    pub frames: BTreeMap<String, Point2>,
}

impl EmbeddedBody {
    pub fn frame(&self, id: &str) -> Option<Point2> {
        self.frames.get(id).copied()
    }
}

/// A 2×n Jacobian stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub columns: Vec<Point2>,
}

impl Jacobian {
    /// `Jᵀ·v`: maps a workspace vector to configuration space.
    pub fn transpose_mul(&self, v: Point2) -> Vec<f64> {
        self.columns.iter().map(|c| c.dot(v)).collect()
    }

    /// `J·dq`: workspace velocity of the point.
    pub fn mul(&self, dq: &[f64]) -> Point2 {
        self.columns
            .iter()
            .zip(dq)
            .fold(Point2::ZERO, |acc, (c, v)| acc + *c * *v)
    }
}

impl KinematicModel {
    pub fn dimension(&self) -> usize {
        self.body.dimension()
    }

    fn check_dim(&self, q: &[f64]) -> Result<(), KinematicsError> {
        let expected = self.dimension();
        if q.len() != expected {
            return Err(KinematicsError::DimensionMismatch {
                expected,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Joint positions of a chain: `base, p1, ..., pn` where `pk` ends link k.
    fn chain_points(base: Point2, lengths: &[f64], q: &[f64]) -> Vec<Point2> {
        let mut points = Vec::with_capacity(lengths.len() + 1);
        let mut p = base;
        let mut angle = 0.0;
        points.push(p);
        for (len, theta) in lengths.iter().zip(q) {
            angle += theta;
            p += Point2::new(angle.cos(), angle.sin()) * *len;
            points.push(p);
        }
        points
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<EmbeddedBody, KinematicsError> {
        self.check_dim(q)?;
        let mut frames = BTreeMap::new();
        let shapes = match &self.body {
            Body::Point { radius } => {
                let c = Point2::new(q[0], q[1]);
                frames.insert(END_EFFECTOR.to_string(), c);
                vec![Shape::circle(c, *radius)]
            }
            Body::RigidPolygon { vertices } => {
                let origin = Point2::new(q[0], q[1]);
                let (s, c) = q[2].sin_cos();
                let world = vertices
                    .iter()
                    .map(|v| origin + Point2::new(c * v.x - s * v.y, s * v.x + c * v.y))
                    .collect();
                frames.insert(END_EFFECTOR.to_string(), origin);
                vec![Shape::polygon(world)]
            }
            Body::Chain {
                base,
                link_lengths,
                link_radii,
            } => {
                let points = Self::chain_points(*base, link_lengths, q);
                let n = link_lengths.len();
                frames.insert(END_EFFECTOR.to_string(), points[n]);
                frames.insert(HEAD.to_string(), points[n - 1].lerp(points[n], 0.5));
                points
                    .windows(2)
                    .zip(link_radii)
                    .map(|(w, r)| Shape::capsule(w[0], w[1], *r))
                    .collect()
            }
        };
        Ok(EmbeddedBody { shapes, frames })
    }

    /// Jacobian of a body point attached to shape `shape_index`, where
    /// `point` is the point's current workspace position.
    pub fn point_jacobian(
        &self,
        q: &[f64],
        shape_index: usize,
        point: Point2,
    ) -> Result<Jacobian, KinematicsError> {
        self.check_dim(q)?;
        let columns = match &self.body {
            Body::Point { .. } => {
                if shape_index != 0 {
                    return Err(KinematicsError::UnknownShape(shape_index));
                }
                vec![Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]
            }
            Body::RigidPolygon { .. } => {
                if shape_index != 0 {
                    return Err(KinematicsError::UnknownShape(shape_index));
                }
                let r = point - Point2::new(q[0], q[1]);
                vec![Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), r.perp()]
            }
            Body::Chain {
                base, link_lengths, ..
            } => {
                let n = link_lengths.len();
                if shape_index >= n {
                    return Err(KinematicsError::UnknownShape(shape_index));
                }
                let joints = Self::chain_points(*base, link_lengths, q);
                (0..n)
                    .map(|j| {
                        if j <= shape_index {
                            (point - joints[j]).perp()
                        } else {
                            Point2::ZERO
                        }
                    })
                    .collect()
            }
        };
        Ok(Jacobian { columns })
    }

    /// Jacobian of a named frame.
    pub fn jacobian(&self, q: &[f64], frame: &str) -> Result<Jacobian, KinematicsError> {
        if !self.body.has_frame(frame) {
            return Err(KinematicsError::UnknownFrame(frame.to_string()));
        }
        let body = self.forward_kinematics(q)?;
        let point = body.frames[frame];
        let shape = match &self.body {
            Body::Chain { link_lengths, .. } => link_lengths.len() - 1,
            _ => 0,
        };
        self.point_jacobian(q, shape, point)
    }

    /// Minimum distance between non-adjacent chain links, `+inf` for other
    /// models or chains shorter than three links.
    pub fn self_clearance(&self, body: &EmbeddedBody) -> f64 {
        if !matches!(self.body, Body::Chain { .. }) {
            return f64::INFINITY;
        }
        let shapes = &body.shapes;
        let mut min = f64::INFINITY;
        for i in 0..shapes.len() {
            for j in i + 2..shapes.len() {
                min = min.min(shape_distance(&shapes[i], &shapes[j]).distance);
            }
        }
        min
    }
}
