//! Elementary agents.
//!
//! Each agent reads an immutable [`Snapshot`] of the blackboard and returns a
//! raw configuration-space delta. The engine bounds every delta by the
//! agent's step bound before combining them, so agents only need to get the
//! direction and relative magnitude right.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{ClearanceReport, Point2};
use crate::kinematics::{EmbeddedBody, KinematicModel};
use crate::record::Event;
use crate::scene::Scene;

/// Workspace magnitude of the push applied when already penetrating.
const PENETRATION_PUSH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Act only while the engine reports a stall.
    #[default]
    Stall,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentKind {
    /// Pulls a frame towards a point. Both default to the scene goal.
    Attraction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<Point2>,
    },
    /// Repulsive potential around the closest obstacle.
    Collision {
        /// Influence distance in meters.
        influence: f64,
        gain: f64,
    },
    /// Keeps coordinates away from their limits by `margin` of the range.
    JointLimit { margin: f64 },
    /// Weighted pull towards mid-range.
    Posture { weights: Vec<f64> },
    /// Random escape moves.
    Perturbation {
        #[serde(default)]
        trigger: Trigger,
    },
    /// The human operator, fed through the command queue.
    Operator,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Attraction { .. } => "attraction",
            AgentKind::Collision { .. } => "collision",
            AgentKind::JointLimit { .. } => "joint_limit",
            AgentKind::Posture { .. } => "posture",
            AgentKind::Perturbation { .. } => "perturbation",
            AgentKind::Operator => "operator",
        }
    }

    /// Agents whose deltas originate in the workspace (as opposed to joint
    /// space); used for choosing default step bounds.
    pub fn is_workspace_driven(&self) -> bool {
        !matches!(
            self,
            AgentKind::JointLimit { .. } | AgentKind::Posture { .. }
        )
    }
}

/// Read-only view of the blackboard handed to agents.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub tick: u64,
    pub q: &'a [f64],
    pub body: &'a EmbeddedBody,
    pub clearance: &'a ClearanceReport,
    pub goal_distance: f64,
    pub stalled: bool,
}

/// Static context shared by all agents.
#[derive(Debug, Clone, Copy)]
pub struct World<'a> {
    pub model: &'a KinematicModel,
    pub scene: &'a Scene,
}

fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// `Jᵀ·e` with `e = goal − frame`; the negative gradient of `½‖e‖²`.
pub fn attraction(world: &World, s: &Snapshot, frame: &str, goal: Point2) -> Vec<f64> {
    let n = s.q.len();
    let Some(position) = s.body.frame(frame) else {
        return zeros(n);
    };
    let error = goal - position;
    if error.norm() <= world.scene.goal.epsilon {
        return zeros(n);
    }
    match world.model.jacobian(s.q, frame) {
        Ok(j) => j.transpose_mul(error),
        Err(_) => zeros(n),
    }
}

/// Repulsion from the closest obstacle:
/// `gain·(1/d − 1/d₀)·(1/d²)·∇_q d` inside the influence distance `d₀`.
pub fn collision(world: &World, s: &Snapshot, influence: f64, gain: f64) -> Vec<f64> {
    let n = s.q.len();
    let d = s.clearance.min_distance;
    let Some(w) = s.clearance.witness else {
        return zeros(n);
    };
    if d >= influence {
        return zeros(n);
    }
    let Ok(j) = world.model.point_jacobian(s.q, w.body_shape, w.body_point) else {
        return zeros(n);
    };
    // Moving the body point along -normal increases clearance.
    let grad = j.transpose_mul(-w.normal);
    if d <= 0.0 {
        return grad.into_iter().map(|g| g * PENETRATION_PUSH).collect();
    }
    let magnitude = gain * (1.0 / d - 1.0 / influence) / (d * d);
    grad.into_iter().map(|g| g * magnitude).collect()
}

/// Pushes each coordinate back to `margin·range` inside its limits.
pub fn joint_limit(world: &World, s: &Snapshot, margin: f64) -> Vec<f64> {
    let limits = &world.model.limits;
    s.q.iter()
        .zip(limits.lower.iter().zip(&limits.upper))
        .map(|(&q, (&lo, &hi))| {
            let band = margin * (hi - lo);
            if q < lo + band {
                lo + band - q
            } else if q > hi - band {
                hi - band - q
            } else {
                0.0
            }
        })
        .collect()
}

/// `w ⊙ (q_mid − q)`.
pub fn posture(world: &World, s: &Snapshot, weights: &[f64]) -> Vec<f64> {
    world
        .model
        .limits
        .mid()
        .iter()
        .zip(s.q)
        .zip(weights)
        .map(|((mid, q), w)| w * (mid - q))
        .collect()
}

/// Unit vector uniformly distributed on the sphere in `n` dimensions.
pub fn perturbation<R: Rng + ?Sized>(s: &Snapshot, trigger: Trigger, rng: &mut R) -> Vec<f64> {
    let n = s.q.len();
    if trigger == Trigger::Stall && !s.stalled {
        return zeros(n);
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Movement {
    /// Raw configuration-space delta.
    Delta { delta: Vec<f64> },
    /// Workspace pull on a named frame.
    Pull { frame: String, vector: Point2 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCommand {
    pub seq: u64,
    pub movement: Movement,
}

/// FIFO of operator movement commands awaiting the operator agent.
#[derive(Debug, Clone, Default)]
pub struct OperatorQueue {
    pending: VecDeque<OperatorCommand>,
}

impl OperatorQueue {
    pub fn push(&mut self, cmd: OperatorCommand) {
        self.pending.push_back(cmd);
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    fn drain(&mut self) -> impl Iterator<Item = OperatorCommand> + '_ {
        self.pending.drain(..)
    }
}

/// Drains the queue and applies the latest movement command only.
pub fn operator(
    world: &World,
    s: &Snapshot,
    agent: &str,
    queue: &mut OperatorQueue,
    events: &mut Vec<Event>,
) -> Vec<f64> {
    let n = s.q.len();
    let mut latest = None;
    for cmd in queue.drain() {
        if let Some(old) = latest.replace(cmd) {
            events.push(Event::Superseded {
                agent: agent.to_string(),
                seq: old.seq,
            });
        }
    }
    let Some(cmd) = latest else {
        return zeros(n);
    };
    let raw = match &cmd.movement {
        Movement::Delta { delta } => {
            if delta.len() != n {
                Err(format!("delta has {} entries, expected {n}", delta.len()))
            } else if delta.iter().any(|v| !v.is_finite()) {
                Err("delta is not finite".to_string())
            } else {
                Ok(delta.clone())
            }
        }
        Movement::Pull { frame, vector } => {
            if !vector.is_finite() {
                Err("pull vector is not finite".to_string())
            } else {
                world
                    .model
                    .jacobian(s.q, frame)
                    .map(|j| j.transpose_mul(*vector))
                    .map_err(|e| e.to_string())
            }
        }
    };
    match raw {
        Ok(raw) => {
            events.push(Event::OperatorApplied {
                agent: agent.to_string(),
                seq: cmd.seq,
            });
            raw
        }
        Err(reason) => {
            events.push(Event::CommandRejected {
                agent: agent.to_string(),
                seq: cmd.seq,
                reason,
            });
            zeros(n)
        }
    }
}
