//! A live session: one engine, a command handler and snapshot cadence.
//! Transport-agnostic and synchronous; the server drives it.

use std::path::PathBuf;

use blackboard_core::engine::ScriptEntry;
use blackboard_core::{parse_scenario, Engine, Scenario, ScenarioError, Status, Trace};

use crate::protocol::{Command, Envelope, ErrorCode, ServerMessage, SnapshotMsg};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Emit a periodic snapshot every this many ticks (≥ 1).
    pub snapshot_every: u64,
    /// Directory searched by `load_scenario` with a `name`.
    pub scenario_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            snapshot_every: 1,
            scenario_dir: None,
        }
    }
}

pub struct Session {
    config: SessionConfig,
    scenario: Scenario,
    engine: Engine,
    snapshot_seq: u64,
    epoch: u64,
    /// Highest command seq seen from the current controller.
    last_seq: Option<u64>,
}

fn err(seq: Option<u64>, code: ErrorCode, message: impl Into<String>) -> ServerMessage {
    ServerMessage::Err {
        seq,
        code,
        message: message.into(),
    }
}

impl Session {
    /// Builds a session whose engine starts paused at tick 0.
    pub fn new(scenario: Scenario, config: SessionConfig) -> Result<Self, ScenarioError> {
        let engine = Self::paused_engine(scenario.clone())?;
        Ok(Self {
            config: SessionConfig {
                snapshot_every: config.snapshot_every.max(1),
                ..config
            },
            scenario,
            engine,
            snapshot_seq: 0,
            epoch: 0,
            last_seq: None,
        })
    }

    fn paused_engine(scenario: Scenario) -> Result<Engine, ScenarioError> {
        let mut engine = Engine::new(scenario)?;
        engine.pause();
        Ok(engine)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn status(&self) -> Status {
        self.engine.status()
    }

    pub fn is_running(&self) -> bool {
        self.engine.status() == Status::Running
    }

    /// Trace-affecting commands applied in the current epoch; replaying them
    /// as an operator script reproduces [`Session::trace`].
    pub fn command_log(&self) -> &[ScriptEntry] {
        self.engine.applied_commands()
    }

    pub fn trace(&self) -> Trace {
        self.engine.trace()
    }

    pub fn snapshot(&mut self) -> ServerMessage {
        self.snapshot_seq += 1;
        ServerMessage::Snapshot(Box::new(SnapshotMsg::capture(
            &self.engine,
            self.snapshot_seq,
            self.epoch,
        )))
    }

    /// Runs one tick if running. Returns a snapshot when the tick lands on
    /// the cadence or changed the status.
    pub fn tick(&mut self) -> Option<ServerMessage> {
        let before = self.engine.status();
        let record = self.engine.step().ok()?;
        let periodic = record.tick % self.config.snapshot_every == 0;
        (periodic || record.status != before).then(|| self.snapshot())
    }

    /// Pauses on behalf of a departed controller. Returns the status-change
    /// snapshot, if any.
    pub fn pause(&mut self) -> Option<ServerMessage> {
        let before = self.engine.status();
        self.engine.pause();
        (self.engine.status() != before).then(|| self.snapshot())
    }

    /// Pauses and forgets the departed controller's seq numbering so the
    /// next controller may start afresh.
    pub fn controller_left(&mut self) -> Option<ServerMessage> {
        self.last_seq = None;
        self.pause()
    }

    /// Handles a parsed command: snapshots it caused, then exactly one
    /// `ack` or `err` carrying its seq.
    pub fn handle(&mut self, envelope: Envelope) -> Vec<ServerMessage> {
        let seq = envelope.seq;
        let mut out = Vec::new();
        if self.last_seq.is_some_and(|last| seq <= last) {
            let message = format!("seq {seq} does not increase on {}", self.last_seq.unwrap());
            return vec![err(Some(seq), ErrorCode::Malformed, message)];
        }
        self.last_seq = Some(seq);
        let reply = match self.apply(seq, envelope.command, &mut out) {
            Ok(()) => ServerMessage::Ack { seq },
            Err((code, message)) => err(Some(seq), code, message),
        };
        out.push(reply);
        out
    }

    /// Parses and handles one client frame.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match crate::protocol::parse_command(text) {
            Ok(envelope) => self.handle(envelope),
            Err((seq, message)) => vec![err(seq, ErrorCode::Malformed, message)],
        }
    }

    fn apply(
        &mut self,
        seq: u64,
        command: Command,
        out: &mut Vec<ServerMessage>,
    ) -> Result<(), (ErrorCode, String)> {
        let terminal = self.engine.status().is_terminal();
        let finished = || {
            (
                ErrorCode::InvalidState,
                format!("run has finished ({:?})", self.engine.status()),
            )
        };
        match command {
            Command::Pause => {
                out.extend(self.pause());
            }
            Command::Resume => {
                if terminal {
                    return Err(finished());
                }
                if self.engine.status() == Status::Paused {
                    self.engine.resume();
                    out.push(self.snapshot());
                }
            }
            Command::StepN { n } => {
                if terminal {
                    return Err(finished());
                }
                if n == 0 {
                    return Err((ErrorCode::OutOfRange, "n must be >= 1".into()));
                }
                let was_paused = self.engine.status() == Status::Paused;
                self.engine.resume();
                for _ in 0..n {
                    let before = self.engine.status();
                    let Ok(record) = self.engine.step() else {
                        break;
                    };
                    let periodic = record.tick % self.config.snapshot_every == 0;
                    let changed = record.status != before;
                    if periodic || changed {
                        let mut snapshot = self.snapshot();
                        // Stepping does not take a paused session out of pause.
                        if let ServerMessage::Snapshot(s) = &mut snapshot {
                            if was_paused && s.status == Status::Running {
                                s.status = Status::Paused;
                            }
                        }
                        out.push(snapshot);
                    }
                    if changed {
                        break;
                    }
                }
                if was_paused {
                    self.engine.pause();
                }
            }
            Command::Reset => {
                self.engine = Self::paused_engine(self.scenario.clone())
                    .map_err(|e| (ErrorCode::InvalidScenario, e.to_string()))?;
                self.epoch += 1;
                out.push(self.snapshot());
            }
            Command::LoadScenario { name, scenario } => {
                let loaded = self.load(name, scenario)?;
                self.engine = Self::paused_engine(loaded.clone())
                    .map_err(|e| (ErrorCode::InvalidScenario, e.to_string()))?;
                self.scenario = loaded;
                self.epoch += 1;
                out.push(self.snapshot());
            }
            movement => {
                if terminal {
                    // Applying it would put a command in the log that a
                    // headless replay never reaches.
                    return Err(finished());
                }
                let script = movement
                    .as_script()
                    .expect("remaining commands are scriptable");
                self.engine
                    .apply_command(seq, script)
                    .map_err(|e| (ErrorCode::from(&e), e.to_string()))?;
            }
        }
        Ok(())
    }

    fn load(
        &self,
        name: Option<String>,
        inline: Option<serde_json::Value>,
    ) -> Result<Scenario, (ErrorCode, String)> {
        match (name, inline) {
            (Some(name), None) => {
                let valid = !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                let dir = self.config.scenario_dir.as_ref().ok_or((
                    ErrorCode::UnknownScenario,
                    "server has no scenario directory".to_string(),
                ))?;
                let path = dir.join(format!("{name}.json"));
                if !valid || !path.is_file() {
                    return Err((
                        ErrorCode::UnknownScenario,
                        format!("no scenario named `{name}`"),
                    ));
                }
                Scenario::load(&path).map_err(|e| (ErrorCode::InvalidScenario, e.to_string()))
            }
            (None, Some(value)) => parse_scenario(&value.to_string())
                .map_err(|e| (ErrorCode::InvalidScenario, e.to_string())),
            _ => Err((
                ErrorCode::Malformed,
                "exactly one of `name` or `scenario` is required".into(),
            )),
        }
    }
}
