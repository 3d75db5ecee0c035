//! Wire messages. Every frame is one JSON object with a `type` field.

use std::collections::BTreeMap;

use blackboard_core::engine::{CommandError, ScriptCommand};
use blackboard_core::geometry::{Aabb, Point2, Shape};
use blackboard_core::record::{StateSample, TickRecord};
use blackboard_core::{Engine, Goal, Metrics, Status};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: &str = "1";

/// Client → server commands, without their `seq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    InjectDelta {
        delta: Vec<f64>,
    },
    InjectPull {
        frame: String,
        vector: Point2,
    },
    Pause,
    Resume,
    StepN {
        n: u64,
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
    Reset,
    /// Exactly one of `name` (a file in the server's scenario directory,
    /// without extension) or `scenario` (inline document).
    LoadScenario {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<Value>,
    },
}

impl Command {
    /// The trace-affecting part of the command, if any.
    pub fn as_script(&self) -> Option<ScriptCommand> {
        match self.clone() {
            Command::InjectDelta { delta } => Some(ScriptCommand::InjectDelta { delta }),
            Command::InjectPull { frame, vector } => {
                Some(ScriptCommand::InjectPull { frame, vector })
            }
            Command::SetAgent {
                id,
                period,
                step_bound,
                enabled,
            } => Some(ScriptCommand::SetAgent {
                id,
                period,
                step_bound,
                enabled,
            }),
            _ => None,
        }
    }
}

/// A command with its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub command: Command,
}

impl Serialize for Envelope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut value = serde_json::to_value(&self.command).map_err(serde::ser::Error::custom)?;
        value
            .as_object_mut()
            .expect("commands serialize as objects")
            .insert("seq".into(), self.seq.into());
        value.serialize(serializer)
    }
}

/// Parses a client frame. On failure returns the `seq` if one could be read
/// so the error can still be correlated.
pub fn parse_command(text: &str) -> Result<Envelope, (Option<u64>, String)> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| (None, e.to_string()))?;
    let object = value
        .as_object_mut()
        .ok_or((None, "message must be a JSON object".to_string()))?;
    let seq = match object.remove("seq") {
        Some(v) => v
            .as_u64()
            .ok_or((None, "seq must be a non-negative integer".to_string()))?,
        None => return Err((None, "missing field `seq`".into())),
    };
    let keys = object.len();
    let command = serde_json::from_value(value).map_err(|e| (Some(seq), e.to_string()))?;
    // serde does not enforce deny_unknown_fields on unit variants.
    if matches!(command, Command::Pause | Command::Resume | Command::Reset) && keys > 1 {
        return Err((
            Some(seq),
            "unexpected field on a command without arguments".into(),
        ));
    }
    Ok(Envelope { seq, command })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownAgent,
    OutOfRange,
    NoOperator,
    /// Sent by an observer; only the controller may command.
    ReadOnly,
    /// Not allowed in the current status, e.g. stepping a finished run.
    InvalidState,
    UnknownScenario,
    InvalidScenario,
}

impl From<&CommandError> for ErrorCode {
    fn from(e: &CommandError) -> Self {
        match e {
            CommandError::UnknownAgent(_) => ErrorCode::UnknownAgent,
            CommandError::OutOfRange { .. } => ErrorCode::OutOfRange,
            CommandError::NoOperator => ErrorCode::NoOperator,
            CommandError::Malformed(_) => ErrorCode::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: String,
    pub kind: String,
    pub period: u32,
    pub step_bound: f64,
    pub enabled: bool,
    pub last_acted: Option<u64>,
}

/// Self-contained view of the session, renderable without earlier messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMsg {
    /// Snapshot counter, strictly increasing over the session.
    pub seq: u64,
    /// Increments on every reset or scenario load; ticks are monotone
    /// within an epoch.
    pub epoch: u64,
    pub scenario_name: String,
    pub tick: u64,
    pub status: Status,
    pub shapes: Vec<Shape>,
    pub frames: BTreeMap<String, Point2>,
    pub bounds: Aabb,
    pub obstacles: Vec<Shape>,
    pub goal: Goal,
    #[serde(flatten)]
    pub state: StateSample,
    pub stalled: bool,
    pub agents: Vec<AgentState>,
    pub metrics: Option<Metrics>,
    pub last_record: Option<TickRecord>,
}

impl SnapshotMsg {
    pub fn capture(engine: &Engine, seq: u64, epoch: u64) -> Self {
        let scenario = engine.scenario();
        let records = engine.records();
        let body = engine.body();
        let agents = engine
            .agents()
            .iter()
            .zip(engine.last_acted())
            .map(|(a, last)| AgentState {
                id: a.id.clone(),
                kind: a.kind.name().to_string(),
                period: a.period,
                step_bound: a.step_bound,
                enabled: a.enabled,
                last_acted: *last,
            })
            .collect();
        Self {
            seq,
            epoch,
            scenario_name: scenario.name.clone(),
            tick: engine.tick(),
            status: engine.status(),
            shapes: body.shapes.clone(),
            frames: body.frames.clone(),
            bounds: scenario.scene.bounds,
            obstacles: scenario.scene.obstacles.clone(),
            goal: scenario.scene.goal.clone(),
            state: engine.current(),
            stalled: engine.stalled(),
            agents,
            metrics: blackboard_core::metrics::metrics_from_records(
                engine.initial(),
                records,
                &scenario.model.limits,
            )
            .ok(),
            last_record: records.last().cloned(),
        }
    }
}

/// Server → client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First frame on every connection.
    Hello {
        protocol_version: String,
        role: Role,
    },
    Snapshot(Box<SnapshotMsg>),
    Ack {
        seq: u64,
    },
    Err {
        seq: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}
