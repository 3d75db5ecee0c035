//! The static world: bounds, obstacles and the task goal.

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Aabb, ClearanceReport, Point2, Shape};
use crate::kinematics::EmbeddedBody;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub frame: String,
    pub point: Point2,
    /// Success tolerance in meters.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub bounds: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    pub goal: Goal,
}

impl Scene {
    pub fn clearance(&self, body: &EmbeddedBody) -> ClearanceReport {
        geometry::clearance(&body.shapes, &self.obstacles)
    }

    /// True iff the open segment `pq` meets no obstacle interior.
    pub fn line_of_sight(&self, p: Point2, q: Point2) -> bool {
        self.obstacles
            .iter()
            .all(|o| geometry::segment_clear_of(p, q, o))
    }

    pub fn is_polygonal(&self) -> bool {
        self.obstacles
            .iter()
            .all(|o| matches!(o, Shape::Polygon { .. }))
    }
}
