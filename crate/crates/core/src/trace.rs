//! Run traces and their JSON-lines file format.
//!
//! The first line is a header carrying the canonical scenario, its hash, the
//! seed and the initial state. Every following line is one tick record.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{compute_metrics, Metrics};
use crate::record::{Event, StateSample, TickRecord};
use crate::scenario::{hex, Scenario, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema_version: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub initial: StateSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TickRecord>,
    /// `None` only for a run that ended before its first tick.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(Box<TraceHeader>),
    Tick(TickRecord),
}

impl Trace {
    pub fn new(scenario: &Scenario, initial: StateSample, records: Vec<TickRecord>) -> Self {
        let header = TraceHeader {
            schema_version: SCHEMA_VERSION.to_string(),
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario.hash(),
            seed: scenario.seed,
            scenario: scenario.clone(),
            initial,
        };
        Self::from_parts(header, records)
    }

    pub fn from_parts(header: TraceHeader, records: Vec<TickRecord>) -> Self {
        let mut trace = Self {
            header,
            records,
            metrics: None,
        };
        trace.metrics = compute_metrics(&trace).ok();
        trace
    }

    pub fn final_status(&self) -> Option<crate::record::Status> {
        self.records.last().map(|r| r.status)
    }

    /// Serializes the trace in JSON-lines form.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<(), TraceError> {
        // Serialize by reference; cloning every record would double memory.
        #[derive(Serialize)]
        #[serde(tag = "type", rename_all = "snake_case")]
        enum LineRef<'a> {
            Header(&'a TraceHeader),
            Tick(&'a TickRecord),
        }
        serde_json::to_writer(&mut sink, &LineRef::Header(&self.header))
            .map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut sink, &LineRef::Tick(record))
                .map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory cannot fail");
        out
    }

    /// SHA-256 of the serialized trace; equal digests mean identical files.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.to_bytes()))
    }
}

/// Reads a trace, returning it with any warnings (such as a header hash
/// that does not match the embedded scenario).
pub fn read_trace<R: BufRead>(source: R) -> Result<(Trace, Vec<Event>), TraceError> {
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let number = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            line: number,
            message: e.to_string(),
        })?;
        match (parsed, header.is_some()) {
            (Line::Header(h), false) => header = Some(*h),
            (Line::Header(_), true) => {
                return Err(TraceError::Corrupt {
                    line: number,
                    message: "second header".into(),
                })
            }
            (Line::Tick(_), false) => {
                return Err(TraceError::Corrupt {
                    line: number,
                    message: "tick record before header".into(),
                })
            }
            (Line::Tick(r), true) => {
                let expected = records.len() as u64 + 1;
                if r.tick != expected {
                    return Err(TraceError::Corrupt {
                        line: number,
                        message: format!("expected tick {expected}, found {}", r.tick),
                    });
                }
                records.push(r);
            }
        }
    }
    let header = header.ok_or(TraceError::Empty)?;
    let warnings = check_scenario(&header, &header.scenario);
    Ok((Trace::from_parts(header, records), warnings))
}

/// Compares the header hash against a scenario about to be used for replay.
pub fn check_scenario(header: &TraceHeader, scenario: &Scenario) -> Vec<Event> {
    let found = scenario.hash();
    if found == header.scenario_hash {
        Vec::new()
    } else {
        vec![Event::ScenarioHashMismatch {
            expected: header.scenario_hash.clone(),
            found,
        }]
    }
}
