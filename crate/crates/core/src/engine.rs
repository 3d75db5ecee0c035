//! The blackboard and its tick loop.
//!
//! On every tick the engine takes a read-only snapshot of the blackboard,
//! asks each scheduled agent for a raw delta, bounds each delta by the
//! agent's step bound, sums them, clamps the result to the joint limits and
//! applies it unless the guard rejects the new configuration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, AgentKind, Movement, OperatorCommand, OperatorQueue, Snapshot, World};
use crate::geometry::{ClearanceReport, Point2};
use crate::kinematics::{EmbeddedBody, KinematicModel, HEAD};
use crate::record::{AgentDelta, BlockReason, Event, StateSample, Status, TickRecord};
use crate::rng::{substream, AgentRng};
use crate::scenario::{Scenario, ScenarioError};
use crate::trace::Trace;

/// Scheduling and step bound of one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSpec {
    pub id: String,
    pub kind: AgentKind,
    /// Acts on ticks that are multiples of `period`.
    pub period: u32,
    /// Maximum Euclidean norm of one contribution.
    pub step_bound: f64,
    pub enabled: bool,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, kind: AgentKind, period: u32, step_bound: f64) -> Self {
        Self {
            id: id.into(),
            kind,
            period,
            step_bound,
            enabled: true,
        }
    }

    pub fn is_active(&self, tick: u64) -> bool {
        self.enabled && self.period >= 1 && tick.is_multiple_of(u64::from(self.period))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionGuard {
    #[default]
    Hard,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StallConfig {
    /// Number of ticks over which progress is measured.
    pub window: usize,
    /// Minimum decrease of goal distance over the window, in meters.
    pub threshold: f64,
}

impl Default for StallConfig {
    fn default() -> Self {
        Self {
            window: 50,
            threshold: 0.01,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub max_ticks: u64,
    #[serde(default)]
    pub collision_guard: CollisionGuard,
    #[serde(default = "default_true")]
    pub self_collision_guard: bool,
    #[serde(default)]
    pub stall: StallConfig,
    /// Stop with [`Status::Stalled`] when the stall flag rises.
    #[serde(default)]
    pub halt_on_stall: bool,
}

impl EngineConfig {
    pub fn new(max_ticks: u64) -> Self {
        Self {
            max_ticks,
            collision_guard: CollisionGuard::Hard,
            self_collision_guard: true,
            stall: StallConfig::default(),
            halt_on_stall: false,
        }
    }
}

/// Commands that change the trace; everything an operator script can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptCommand {
    InjectDelta {
        delta: Vec<f64>,
    },
    InjectPull {
        frame: String,
        vector: Point2,
    },
    SetAgent {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step_bound: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        enabled: Option<bool>,
    },
}

/// A command applied once the blackboard has reached `tick`, i.e. before
/// tick `tick + 1` runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub seq: u64,
    pub command: ScriptCommand,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("{field} out of range: {reason}")]
    OutOfRange { field: &'static str, reason: String },
    #[error("scenario has no operator agent to receive movement commands")]
    NoOperator,
    #[error("malformed command: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("engine is not running (status {0:?})")]
    NotRunning(Status),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite contribution")]
pub struct NonFiniteDelta;

/// Ids of the agents acting on `tick`, in declaration order.
pub fn active_agents(tick: u64, specs: &[AgentSpec]) -> Vec<&str> {
    specs
        .iter()
        .filter(|s| s.is_active(tick))
        .map(|s| s.id.as_str())
        .collect()
}

/// Scales `raw` down to norm `bound` if it is longer; shorter vectors pass
/// through unchanged.
pub fn normalize(raw: &[f64], bound: f64) -> Result<Vec<f64>, NonFiniteDelta> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(NonFiniteDelta);
    }
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        // Finite entries whose squares overflow; the true norm exceeds any
        // finite bound, so only the direction matters.
        let scale = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scaled: Vec<f64> = raw.iter().map(|v| v / scale).collect();
        let norm = scaled.iter().map(|v| v * v).sum::<f64>().sqrt();
        return Ok(scaled.iter().map(|v| v / norm * bound).collect());
    }
    if norm <= bound {
        return Ok(raw.to_vec());
    }
    Ok(raw.iter().map(|v| v / norm * bound).collect())
}

/// Mutable shared state of a run.
#[derive(Debug, Clone)]
pub struct Blackboard {
    pub tick: u64,
    pub q: Vec<f64>,
    pub status: Status,
    /// Goal distances of the last `window + 1` ticks.
    pub stall_window: VecDeque<f64>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    scenario: Scenario,
    model: KinematicModel,
    agents: Vec<AgentSpec>,
    rngs: Vec<AgentRng>,
    last_acted: Vec<Option<u64>>,
    board: Blackboard,
    body: EmbeddedBody,
    clearance: ClearanceReport,
    stalled: bool,
    queue: OperatorQueue,
    pending_events: Vec<Event>,
    script_cursor: usize,
    applied: Vec<ScriptEntry>,
    initial: StateSample,
    records: Vec<TickRecord>,
}

impl Engine {
    /// Builds an engine in the `Running` state at tick 0.
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let errors = scenario.validate();
        if !errors.is_empty() {
            return Err(ScenarioError::Invalid(errors));
        }
        let model = scenario.model.kinematic_model();
        let q = scenario.model.initial.clone();
        let body = model
            .forward_kinematics(&q)
            .expect("validated scenario has matching dimensions");
        let clearance = scenario.scene.clearance(&body);
        let agents = scenario.agents.clone();
        let rngs = agents
            .iter()
            .map(|a| substream(scenario.seed, &a.id))
            .collect();
        let mut engine = Self {
            model,
            last_acted: vec![None; agents.len()],
            rngs,
            agents,
            board: Blackboard {
                tick: 0,
                q,
                status: Status::Running,
                stall_window: VecDeque::new(),
            },
            body,
            clearance,
            stalled: false,
            queue: OperatorQueue::default(),
            pending_events: Vec::new(),
            script_cursor: 0,
            applied: Vec::new(),
            initial: StateSample {
                q: Vec::new(),
                goal_frame: Point2::ZERO,
                goal_distance: 0.0,
                min_clearance: 0.0,
                line_of_sight: false,
            },
            records: Vec::new(),
            scenario,
        };
        engine.initial = engine.sample();
        engine
            .board
            .stall_window
            .push_back(engine.initial.goal_distance);
        if engine.initial.goal_distance <= engine.scenario.scene.goal.epsilon {
            engine.board.status = Status::Succeeded;
        }
        Ok(engine)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn model(&self) -> &KinematicModel {
        &self.model
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    /// Tick of the last time each agent acted, parallel to [`Engine::agents`].
    pub fn last_acted(&self) -> &[Option<u64>] {
        &self.last_acted
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.board
    }

    pub fn tick(&self) -> u64 {
        self.board.tick
    }

    pub fn status(&self) -> Status {
        self.board.status
    }

    pub fn q(&self) -> &[f64] {
        &self.board.q
    }

    pub fn body(&self) -> &EmbeddedBody {
        &self.body
    }

    pub fn clearance(&self) -> &ClearanceReport {
        &self.clearance
    }

    pub fn stalled(&self) -> bool {
        self.stalled
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn initial(&self) -> &StateSample {
        &self.initial
    }

    /// Current derived state (goal distance, clearance, visibility).
    pub fn current(&self) -> StateSample {
        self.records
            .last()
            .map(|r| r.state.clone())
            .unwrap_or_else(|| self.initial.clone())
    }

    /// Every trace-affecting command applied so far, in application order.
    /// Replaying it as an operator script reproduces this run.
    pub fn applied_commands(&self) -> &[ScriptEntry] {
        &self.applied
    }

    pub fn pause(&mut self) {
        if self.board.status == Status::Running {
            self.board.status = Status::Paused;
        }
    }

    pub fn resume(&mut self) {
        if self.board.status == Status::Paused {
            self.board.status = Status::Running;
        }
    }

    fn sample(&self) -> StateSample {
        let goal = &self.scenario.scene.goal;
        let goal_frame = self
            .body
            .frame(&goal.frame)
            .expect("validated goal frame exists");
        let eye = self.body.frame(HEAD).unwrap_or(goal_frame);
        StateSample {
            q: self.board.q.clone(),
            goal_frame,
            goal_distance: goal_frame.distance(goal.point),
            min_clearance: self.clearance.min_distance,
            line_of_sight: self.scenario.scene.line_of_sight(eye, goal.point),
        }
    }

    /// Validates and applies a command at the current tick. Movement commands
    /// are queued for the operator agent; agent updates take effect before
    /// the next tick.
    pub fn apply_command(&mut self, seq: u64, command: ScriptCommand) -> Result<(), CommandError> {
        match &command {
            ScriptCommand::InjectDelta { delta } => {
                self.operator_id().ok_or(CommandError::NoOperator)?;
                let n = self.model.dimension();
                if delta.len() != n {
                    return Err(CommandError::Malformed(format!(
                        "delta has {} entries, expected {n}",
                        delta.len()
                    )));
                }
                if delta.iter().any(|v| !v.is_finite()) {
                    return Err(CommandError::Malformed("delta is not finite".into()));
                }
                self.queue.push(OperatorCommand {
                    seq,
                    movement: Movement::Delta {
                        delta: delta.clone(),
                    },
                });
            }
            ScriptCommand::InjectPull { frame, vector } => {
                self.operator_id().ok_or(CommandError::NoOperator)?;
                if !self.model.body.has_frame(frame) {
                    return Err(CommandError::Malformed(format!("unknown frame `{frame}`")));
                }
                if !vector.is_finite() {
                    return Err(CommandError::Malformed("pull vector is not finite".into()));
                }
                self.queue.push(OperatorCommand {
                    seq,
                    movement: Movement::Pull {
                        frame: frame.clone(),
                        vector: *vector,
                    },
                });
            }
            ScriptCommand::SetAgent {
                id,
                period,
                step_bound,
                enabled,
            } => {
                let index = self
                    .agents
                    .iter()
                    .position(|a| &a.id == id)
                    .ok_or_else(|| CommandError::UnknownAgent(id.clone()))?;
                if let Some(p) = period {
                    if *p < 1 {
                        return Err(CommandError::OutOfRange {
                            field: "period",
                            reason: format!("must be >= 1, got {p}"),
                        });
                    }
                }
                if let Some(b) = step_bound {
                    if !(b.is_finite() && *b > 0.0) {
                        return Err(CommandError::OutOfRange {
                            field: "step_bound",
                            reason: format!("must be finite and > 0, got {b}"),
                        });
                    }
                }
                let agent = &mut self.agents[index];
                if let Some(p) = period {
                    agent.period = *p;
                }
                if let Some(b) = step_bound {
                    agent.step_bound = *b;
                }
                if let Some(e) = enabled {
                    agent.enabled = *e;
                }
                self.pending_events.push(Event::AgentUpdated {
                    agent: agent.id.clone(),
                    seq,
                    period: agent.period,
                    step_bound: agent.step_bound,
                    enabled: agent.enabled,
                });
            }
        }
        self.applied.push(ScriptEntry {
            tick: self.board.tick,
            seq,
            command,
        });
        Ok(())
    }

    fn operator_id(&self) -> Option<&str> {
        self.agents
            .iter()
            .find(|a| matches!(a.kind, AgentKind::Operator))
            .map(|a| a.id.as_str())
    }

    fn inject_script(&mut self) {
        while let Some(entry) = self.scenario.operator_script.get(self.script_cursor) {
            if entry.tick > self.board.tick {
                break;
            }
            let entry = entry.clone();
            self.script_cursor += 1;
            // Scripts are validated with the scenario; a failure here means an
            // agent referenced by the script was changed at runtime.
            if let Err(e) = self.apply_command(entry.seq, entry.command) {
                log::warn!("script command {} rejected: {e}", entry.seq);
            }
        }
    }

    /// Runs one tick and returns its record.
    pub fn step(&mut self) -> Result<&TickRecord, EngineError> {
        if self.board.status != Status::Running {
            return Err(EngineError::NotRunning(self.board.status));
        }
        self.inject_script();
        let tick = self.board.tick + 1;
        let n = self.board.q.len();
        let mut events = std::mem::take(&mut self.pending_events);

        let world = World {
            model: &self.model,
            scene: &self.scenario.scene,
        };
        let before = self.records.last().map_or(&self.initial, |r| &r.state);
        let snapshot = Snapshot {
            tick,
            q: &self.board.q,
            body: &self.body,
            clearance: &self.clearance,
            goal_distance: before.goal_distance,
            stalled: self.stalled,
        };

        let mut active = Vec::new();
        let mut deltas = Vec::new();
        let mut summed = vec![0.0; n];
        for (i, spec) in self.agents.iter().enumerate() {
            if !spec.is_active(tick) {
                continue;
            }
            active.push(spec.id.clone());
            self.last_acted[i] = Some(tick);
            let raw = match &spec.kind {
                AgentKind::Attraction { frame, goal } => {
                    let goal_spec = &world.scene.goal;
                    agents::attraction(
                        &world,
                        &snapshot,
                        frame.as_deref().unwrap_or(&goal_spec.frame),
                        goal.unwrap_or(goal_spec.point),
                    )
                }
                AgentKind::Collision { influence, gain } => {
                    agents::collision(&world, &snapshot, *influence, *gain)
                }
                AgentKind::JointLimit { margin } => agents::joint_limit(&world, &snapshot, *margin),
                AgentKind::Posture { weights } => agents::posture(&world, &snapshot, weights),
                AgentKind::Perturbation { trigger } => {
                    agents::perturbation(&snapshot, *trigger, &mut self.rngs[i])
                }
                AgentKind::Operator => {
                    agents::operator(&world, &snapshot, &spec.id, &mut self.queue, &mut events)
                }
            };
            let delta = if raw.len() != n {
                events.push(Event::AgentFault {
                    agent: spec.id.clone(),
                    reason: format!("delta has {} entries, expected {n}", raw.len()),
                });
                vec![0.0; n]
            } else {
                match normalize(&raw, spec.step_bound) {
                    Ok(d) => d,
                    Err(e) => {
                        events.push(Event::AgentFault {
                            agent: spec.id.clone(),
                            reason: e.to_string(),
                        });
                        vec![0.0; n]
                    }
                }
            };
            for (s, d) in summed.iter_mut().zip(&delta) {
                *s += d;
            }
            deltas.push(AgentDelta {
                agent: spec.id.clone(),
                delta,
            });
        }

        let mut candidate: Vec<f64> = self
            .board
            .q
            .iter()
            .zip(&summed)
            .map(|(q, d)| q + d)
            .collect();
        self.model.limits.clamp(&mut candidate);
        let cand_body = self
            .model
            .forward_kinematics(&candidate)
            .expect("dimension checked at construction");
        let cand_clearance = self.scenario.scene.clearance(&cand_body);
        let config = &self.scenario.engine;
        let blocked = if config.collision_guard == CollisionGuard::Hard
            && cand_clearance.min_distance < 0.0
        {
            Some(BlockReason::Collision)
        } else if config.self_collision_guard && self.model.self_clearance(&cand_body) < 0.0 {
            Some(BlockReason::SelfCollision)
        } else {
            None
        };
        let applied = blocked.is_none();
        if let Some(reason) = blocked {
            events.push(Event::Blocked { reason });
        } else {
            self.board.q = candidate;
            self.body = cand_body;
            self.clearance = cand_clearance;
        }
        self.board.tick = tick;

        let state = self.sample();
        let window = &mut self.board.stall_window;
        window.push_back(state.goal_distance);
        while window.len() > config.stall.window + 1 {
            window.pop_front();
        }
        let succeeded = state.goal_distance <= self.scenario.scene.goal.epsilon;
        self.stalled = !succeeded
            && window.len() == config.stall.window + 1
            && window.front().copied().unwrap_or(0.0) - state.goal_distance
                < config.stall.threshold;

        self.board.status = if succeeded {
            events.push(Event::Succeeded);
            Status::Succeeded
        } else if tick >= config.max_ticks {
            events.push(Event::FailedMaxTicks);
            Status::FailedMaxTicks
        } else if config.halt_on_stall && self.stalled {
            events.push(Event::Stalled);
            Status::Stalled
        } else {
            self.board.status
        };

        self.records.push(TickRecord {
            tick,
            status: self.board.status,
            active,
            deltas,
            summed,
            applied,
            state,
            stalled: self.stalled,
            events,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Steps until a terminal status.
    pub fn run_to_end(&mut self) {
        while self.step().is_ok() {}
    }

    /// The scenario as actually executed: its operator script is replaced
    /// by the commands applied so far, so a live session and a headless
    /// replay of its log describe themselves identically.
    pub fn effective_scenario(&self) -> Scenario {
        let mut scenario = self.scenario.clone();
        scenario.operator_script = self.applied.clone();
        scenario
    }

    pub fn trace(&self) -> Trace {
        Trace::new(
            &self.effective_scenario(),
            self.initial.clone(),
            self.records.clone(),
        )
    }

    pub fn into_trace(self) -> Trace {
        let scenario = self.effective_scenario();
        Trace::new(&scenario, self.initial, self.records)
    }
}

/// Executes a scenario headlessly from tick 1 until a terminal status.
pub fn run(scenario: Scenario) -> Result<Trace, ScenarioError> {
    let mut engine = Engine::new(scenario)?;
    engine.run_to_end();
    Ok(engine.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(id: &str, period: u32) -> AgentSpec {
        AgentSpec::new(id, AgentKind::Operator, period, 1.0)
    }

    #[test]
    fn activation_counts_follow_periods() {
        let specs = vec![
            spec("collision", 1),
            spec("attraction", 3),
            spec("operator", 9),
            spec("manikin", 9),
        ];
        let mut counts = [0usize; 4];
        for t in 1..=18 {
            for id in active_agents(t, &specs) {
                let i = specs.iter().position(|s| s.id == id).unwrap();
                counts[i] += 1;
            }
        }
        assert_eq!(counts, [18, 6, 2, 2]);
        assert_eq!(
            active_agents(9, &specs),
            vec!["collision", "attraction", "operator", "manikin"]
        );
        assert_eq!(active_agents(4, &specs), vec!["collision"]);
    }

    #[test]
    fn disabled_agents_never_act() {
        let mut s = spec("x", 1);
        s.enabled = false;
        assert!((1..100).all(|t| active_agents(t, std::slice::from_ref(&s)).is_empty()));
    }

    #[test]
    fn normalize_clamps_but_never_scales_up() {
        assert_eq!(normalize(&[3.0, 4.0], 1.0).unwrap(), vec![0.6, 0.8]);
        assert_eq!(normalize(&[0.1, 0.0], 1.0).unwrap(), vec![0.1, 0.0]);
        assert_eq!(normalize(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(normalize(&[f64::NAN, 0.0], 1.0), Err(NonFiniteDelta));
        assert_eq!(normalize(&[f64::INFINITY], 1.0), Err(NonFiniteDelta));
        let big = normalize(&[1e200, 1e200], 2.0).unwrap();
        let norm = big[0].hypot(big[1]);
        assert!((norm - 2.0).abs() < 1e-12, "{big:?}");
    }
}
