//! Per-tick records and the events attached to them.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Paused,
    Succeeded,
    FailedMaxTicks,
    /// Only reachable with `halt_on_stall`, used by the descent baseline.
    Stalled,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Status::Succeeded | Status::FailedMaxTicks | Status::Stalled
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    Collision,
    SelfCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// The guard rejected the summed step.
    Blocked {
        reason: BlockReason,
    },
    /// An agent produced an unusable delta and contributed zero.
    AgentFault {
        agent: String,
        reason: String,
    },
    /// The operator agent consumed a movement command.
    OperatorApplied {
        agent: String,
        seq: u64,
    },
    /// A queued movement command was replaced by a later one.
    Superseded {
        agent: String,
        seq: u64,
    },
    /// A queued movement command could not be interpreted.
    CommandRejected {
        agent: String,
        seq: u64,
        reason: String,
    },
    AgentUpdated {
        agent: String,
        seq: u64,
        period: u32,
        step_bound: f64,
        enabled: bool,
    },
    Succeeded,
    FailedMaxTicks,
    Stalled,
    /// Trace header hash does not match the embedded scenario.
    ScenarioHashMismatch {
        expected: String,
        found: String,
    },
}

/// One agent's normalized contribution for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDelta {
    pub agent: String,
    pub delta: Vec<f64>,
}

/// Derived quantities of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSample {
    pub q: Vec<f64>,
    /// Workspace position of the goal frame.
    pub goal_frame: Point2,
    pub goal_distance: f64,
    #[serde(with = "infinite_as_null")]
    pub min_clearance: f64,
    pub line_of_sight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    /// Status after this tick.
    pub status: Status,
    pub active: Vec<String>,
    pub deltas: Vec<AgentDelta>,
    pub summed: Vec<f64>,
    /// False iff the guard rejected the step; `q` is then unchanged.
    pub applied: bool,
    #[serde(flatten)]
    pub state: StateSample,
    pub stalled: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

/// Clearance is `+inf` in obstacle-free scenes, which JSON cannot carry.
pub(crate) mod infinite_as_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
