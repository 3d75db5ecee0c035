//! Scenario files: parsing, validation and canonical form.
//!
//! Parsing is strict (unknown fields are rejected). Semantic validation
//! collects every problem with its field path instead of stopping at the
//! first. Omitted defaults are filled in so the canonical form written back
//! out is self-describing, and the scenario hash is taken over that canonical
//! form, which makes it independent of key order in the source text.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::AgentKind;
use crate::engine::{AgentSpec, CollisionGuard, EngineConfig, ScriptCommand, ScriptEntry};
use crate::geometry::Shape;
use crate::kinematics::{Body, JointLimits, KinematicModel};
use crate::scene::Scene;

pub const SCHEMA_VERSION: &str = "1";

/// Default step bound of workspace-driven agents, as a fraction of the
/// scene diagonal.
pub const DEFAULT_WORKSPACE_STEP_FRACTION: f64 = 0.05;
/// Default step bound of joint-space agents.
pub const DEFAULT_JOINT_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<ValidationError>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn list(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Model geometry, limits and starting configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub body: Body,
    pub limits: JointLimits,
    pub initial: Vec<f64>,
}

impl ModelSpec {
    pub fn kinematic_model(&self) -> KinematicModel {
        KinematicModel {
            body: self.body.clone(),
            limits: self.limits.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario")]
pub struct Scenario {
    pub schema_version: String,
    pub name: String,
    pub scene: Scene,
    pub model: ModelSpec,
    pub agents: Vec<AgentSpec>,
    pub engine: EngineConfig,
    pub seed: u64,
    pub operator_script: Vec<ScriptEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgentSpec {
    id: String,
    kind: AgentKind,
    period: u32,
    #[serde(default)]
    step_bound: Option<f64>,
    #[serde(default)]
    enabled: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScriptEntry {
    tick: u64,
    #[serde(default)]
    seq: Option<u64>,
    command: ScriptCommand,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: String,
    name: String,
    scene: Scene,
    model: ModelSpec,
    agents: Vec<RawAgentSpec>,
    engine: EngineConfig,
    seed: u64,
    #[serde(default)]
    operator_script: Vec<RawScriptEntry>,
}

impl RawScenario {
    fn canonicalize(self) -> Scenario {
        let diag = self.scene.bounds.diagonal();
        let goal = &self.scene.goal;
        let agents = self
            .agents
            .into_iter()
            .map(|a| {
                let kind = match a.kind {
                    AgentKind::Attraction { frame, goal: point } => AgentKind::Attraction {
                        frame: Some(frame.unwrap_or_else(|| goal.frame.clone())),
                        goal: Some(point.unwrap_or(goal.point)),
                    },
                    other => other,
                };
                let step_bound = a.step_bound.unwrap_or_else(|| {
                    if kind.is_workspace_driven() {
                        DEFAULT_WORKSPACE_STEP_FRACTION * diag
                    } else {
                        DEFAULT_JOINT_STEP
                    }
                });
                AgentSpec {
                    id: a.id,
                    kind,
                    period: a.period,
                    step_bound,
                    enabled: a.enabled.unwrap_or(true),
                }
            })
            .collect();
        let operator_script = self
            .operator_script
            .into_iter()
            .enumerate()
            .map(|(i, e)| ScriptEntry {
                tick: e.tick,
                seq: e.seq.unwrap_or(i as u64 + 1),
                command: e.command,
            })
            .collect();
        Scenario {
            schema_version: self.schema_version,
            name: self.name,
            scene: self.scene,
            model: self.model,
            agents,
            engine: self.engine,
            seed: self.seed,
            operator_script,
        }
    }
}

impl TryFrom<RawScenario> for Scenario {
    type Error = ScenarioError;

    fn try_from(raw: RawScenario) -> Result<Self, Self::Error> {
        let scenario = raw.canonicalize();
        let errors = scenario.validate();
        if errors.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            ScenarioError::Schema {
                path,
                message: inner.to_string(),
            }
        } else {
            ScenarioError::Syntax(inner.to_string())
        }
    })?;
    de.end().map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    Scenario::try_from(raw)
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_scenario(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 over the canonical form (sorted keys, defaults filled).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex(&digest)
    }

    /// Every validation problem, each with its field path.
    pub fn validate(&self) -> Vec<ValidationError> {
        let mut v = Validator::default();
        if self.schema_version != SCHEMA_VERSION {
            v.err(
                "schema_version",
                format!(
                    "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                    self.schema_version
                ),
            );
        }
        if self.name.trim().is_empty() {
            v.err("name", "must not be empty");
        }
        self.validate_scene(&mut v);
        let dim_ok = self.validate_model(&mut v);
        self.validate_agents(&mut v, dim_ok);
        self.validate_engine(&mut v);
        self.validate_script(&mut v, dim_ok);
        if dim_ok && v.errors.is_empty() {
            self.validate_initial_state(&mut v);
        }
        v.errors
    }

    fn validate_scene(&self, v: &mut Validator) {
        let bounds = &self.scene.bounds;
        if !(bounds.min.is_finite() && bounds.max.is_finite())
            || bounds.min.x >= bounds.max.x
            || bounds.min.y >= bounds.max.y
        {
            v.err("scene.bounds", "must be finite with min < max");
        }
        for (i, o) in self.scene.obstacles.iter().enumerate() {
            let path = format!("scene.obstacles[{i}]");
            if let Err(e) = o.validate() {
                v.err(&path, e.to_string());
            } else if !bounds.contains_box(&o.aabb()) {
                v.err(&path, "obstacle extends outside scene bounds");
            }
        }
        let goal = &self.scene.goal;
        if !goal.point.is_finite() || !bounds.contains(goal.point) {
            v.err("scene.goal.point", "must be finite and inside scene bounds");
        }
        if !(goal.epsilon.is_finite() && goal.epsilon > 0.0) {
            v.err("scene.goal.epsilon", "must be finite and > 0");
        }
        if !self.model.body.has_frame(&goal.frame) {
            v.err(
                "scene.goal.frame",
                format!("model has no frame `{}`", goal.frame),
            );
        }
    }

    /// Returns whether the configuration dimension is consistent.
    fn validate_model(&self, v: &mut Validator) -> bool {
        let before = v.errors.len();
        match &self.model.body {
            Body::Point { radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    v.err("model.body.radius", "must be finite and >= 0");
                }
            }
            Body::RigidPolygon { vertices } => {
                if let Err(e) = Shape::polygon(vertices.clone()).validate() {
                    v.err("model.body.vertices", e.to_string());
                }
            }
            Body::Chain {
                base,
                link_lengths,
                link_radii,
            } => {
                if !base.is_finite() {
                    v.err("model.body.base", "must be finite");
                }
                if link_lengths.is_empty() {
                    v.err("model.body.link_lengths", "chain needs at least one link");
                }
                for (i, l) in link_lengths.iter().enumerate() {
                    if !(l.is_finite() && *l > 0.0) {
                        v.err(
                            format!("model.body.link_lengths[{i}]"),
                            "must be finite and > 0",
                        );
                    }
                }
                if link_radii.len() != link_lengths.len() {
                    v.err(
                        "model.body.link_radii",
                        format!(
                            "expected {} radii, got {}",
                            link_lengths.len(),
                            link_radii.len()
                        ),
                    );
                }
                for (i, r) in link_radii.iter().enumerate() {
                    if !(r.is_finite() && *r >= 0.0) {
                        v.err(
                            format!("model.body.link_radii[{i}]"),
                            "must be finite and >= 0",
                        );
                    }
                }
            }
        }
        let n = self.model.body.dimension();
        let limits = &self.model.limits;
        if limits.lower.len() != n || limits.upper.len() != n {
            v.err(
                "model.limits",
                format!(
                    "expected {n} lower and upper bounds, got {} and {}",
                    limits.lower.len(),
                    limits.upper.len()
                ),
            );
        } else {
            for i in 0..n {
                let (lo, hi) = (limits.lower[i], limits.upper[i]);
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    v.err(
                        format!("model.limits[{i}]"),
                        "must be finite with lower < upper",
                    );
                }
            }
        }
        let initial = &self.model.initial;
        if initial.len() != n {
            v.err(
                "model.initial",
                format!("expected {n} entries, got {}", initial.len()),
            );
        } else if initial.iter().any(|x| !x.is_finite()) {
            v.err("model.initial", "must be finite");
        } else if v.errors.len() == before && !limits.contains(initial) {
            v.err("model.initial", "outside joint limits");
        }
        v.errors.len() == before
    }

    fn validate_agents(&self, v: &mut Validator, dim_ok: bool) {
        let n = self.model.body.dimension();
        let mut operators = 0;
        for (i, a) in self.agents.iter().enumerate() {
            let path = |field: &str| format!("agents[{i}].{field}");
            if a.id.trim().is_empty() {
                v.err(path("id"), "must not be empty");
            }
            if self.agents[..i].iter().any(|b| b.id == a.id) {
                v.err(path("id"), format!("duplicate agent id `{}`", a.id));
            }
            if a.period < 1 {
                v.err(path("period"), format!("must be >= 1, got {}", a.period));
            }
            if !(a.step_bound.is_finite() && a.step_bound > 0.0) {
                v.err(
                    path("step_bound"),
                    format!("must be finite and > 0, got {}", a.step_bound),
                );
            }
            match &a.kind {
                AgentKind::Attraction { frame, goal } => {
                    if let Some(f) = frame {
                        if !self.model.body.has_frame(f) {
                            v.err(path("kind.frame"), format!("model has no frame `{f}`"));
                        }
                    }
                    if goal.is_some_and(|g| !g.is_finite()) {
                        v.err(path("kind.goal"), "must be finite");
                    }
                }
                AgentKind::Collision { influence, gain } => {
                    if !(influence.is_finite() && *influence > 0.0) {
                        v.err(path("kind.influence"), "must be finite and > 0");
                    }
                    if !(gain.is_finite() && *gain > 0.0) {
                        v.err(path("kind.gain"), "must be finite and > 0");
                    }
                }
                AgentKind::JointLimit { margin } => {
                    if !(*margin > 0.0 && *margin < 0.5) {
                        v.err(path("kind.margin"), "must lie in (0, 0.5)");
                    }
                }
                AgentKind::Posture { weights } => {
                    if dim_ok && weights.len() != n {
                        v.err(
                            path("kind.weights"),
                            format!("expected {n} weights, got {}", weights.len()),
                        );
                    }
                    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                        v.err(path("kind.weights"), "weights must be finite and >= 0");
                    }
                }
                AgentKind::Perturbation { .. } => {}
                AgentKind::Operator => {
                    operators += 1;
                    if operators > 1 {
                        v.err(path("kind"), "at most one operator agent is allowed");
                    }
                }
            }
        }
    }

    fn validate_engine(&self, v: &mut Validator) {
        let e = &self.engine;
        if e.max_ticks < 1 {
            v.err("engine.max_ticks", "must be >= 1");
        }
        if e.stall.window < 1 {
            v.err("engine.stall.window", "must be >= 1");
        }
        if !(e.stall.threshold.is_finite() && e.stall.threshold >= 0.0) {
            v.err("engine.stall.threshold", "must be finite and >= 0");
        }
    }

    fn validate_script(&self, v: &mut Validator, dim_ok: bool) {
        let n = self.model.body.dimension();
        let has_operator = self
            .agents
            .iter()
            .any(|a| matches!(a.kind, AgentKind::Operator));
        let mut last_tick = 0;
        for (i, entry) in self.operator_script.iter().enumerate() {
            let path = |field: &str| format!("operator_script[{i}].{field}");
            if entry.tick < last_tick {
                v.err(path("tick"), "ticks must be non-decreasing");
            }
            last_tick = entry.tick;
            match &entry.command {
                ScriptCommand::InjectDelta { delta } => {
                    if !has_operator {
                        v.err(path("command"), "scenario has no operator agent");
                    }
                    if dim_ok && delta.len() != n {
                        v.err(
                            path("command.delta"),
                            format!("expected {n} entries, got {}", delta.len()),
                        );
                    }
                    if delta.iter().any(|x| !x.is_finite()) {
                        v.err(path("command.delta"), "must be finite");
                    }
                }
                ScriptCommand::InjectPull { frame, vector } => {
                    if !has_operator {
                        v.err(path("command"), "scenario has no operator agent");
                    }
                    if !self.model.body.has_frame(frame) {
                        v.err(
                            path("command.frame"),
                            format!("model has no frame `{frame}`"),
                        );
                    }
                    if !vector.is_finite() {
                        v.err(path("command.vector"), "must be finite");
                    }
                }
                ScriptCommand::SetAgent {
                    id,
                    period,
                    step_bound,
                    ..
                } => {
                    if !self.agents.iter().any(|a| &a.id == id) {
                        v.err(path("command.id"), format!("unknown agent `{id}`"));
                    }
                    if period.is_some_and(|p| p < 1) {
                        v.err(path("command.period"), "must be >= 1");
                    }
                    if step_bound.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
                        v.err(path("command.step_bound"), "must be finite and > 0");
                    }
                }
            }
        }
    }

    fn validate_initial_state(&self, v: &mut Validator) {
        let model = self.model.kinematic_model();
        let Ok(body) = model.forward_kinematics(&self.model.initial) else {
            return;
        };
        if self.engine.collision_guard == CollisionGuard::Hard {
            let c = self.scene.clearance(&body);
            if c.min_distance < 0.0 {
                v.err(
                    "model.initial",
                    format!(
                        "initial configuration penetrates an obstacle (clearance {})",
                        c.min_distance
                    ),
                );
            }
        }
        if self.engine.self_collision_guard && model.self_clearance(&body) < 0.0 {
            v.err("model.initial", "initial configuration is self-colliding");
        }
    }
}

#[derive(Default)]
struct Validator {
    errors: Vec<ValidationError>,
}

impl Validator {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ValidationError {
            path: path.into(),
            message: message.into(),
        });
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
