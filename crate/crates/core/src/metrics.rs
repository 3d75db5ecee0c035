//! Summary metrics, recomputable from a trace alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::JointLimits;
use crate::record::{infinite_as_null, Event, StateSample, Status, TickRecord};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub success: bool,
    pub final_status: Status,
    pub ticks_used: u64,
    /// Length of the goal frame's workspace trajectory, meters.
    pub workspace_path_length: f64,
    /// Euclidean length of the configuration trajectory.
    pub config_path_length: f64,
    #[serde(with = "infinite_as_null")]
    pub min_clearance: f64,
    pub blocked_ticks: u64,
    pub line_of_sight_fraction: f64,
    /// Mean over ticks of [`comfort`]; 0 is perfectly mid-range.
    pub comfort: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("trace has no tick records")]
    EmptyTrace,
}

/// `‖(q − q_mid) ⊘ (range / 2)‖² / n`: 0 at mid-range, 1 at the limits.
pub fn comfort(q: &[f64], limits: &JointLimits) -> f64 {
    let n = q.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = q
        .iter()
        .zip(limits.lower.iter().zip(&limits.upper))
        .map(|(v, (lo, hi))| {
            let half = 0.5 * (hi - lo);
            let z = (v - 0.5 * (lo + hi)) / half;
            z * z
        })
        .sum();
    sum / n as f64
}

pub fn compute_metrics(trace: &Trace) -> Result<Metrics, MetricsError> {
    metrics_from_records(
        &trace.header.initial,
        &trace.records,
        &trace.header.scenario.model.limits,
    )
}

/// Metrics of a run given its tick-0 state and records so far.
pub fn metrics_from_records(
    initial: &StateSample,
    records: &[TickRecord],
    limits: &JointLimits,
) -> Result<Metrics, MetricsError> {
    let last = records.last().ok_or(MetricsError::EmptyTrace)?;

    let mut workspace = 0.0;
    let mut config = 0.0;
    let mut prev_frame = initial.goal_frame;
    let mut prev_q = initial.q.as_slice();
    let mut min_clearance = f64::INFINITY;
    let mut blocked = 0u64;
    let mut visible = 0u64;
    let mut comfort_sum = 0.0;
    for r in records {
        workspace += r.state.goal_frame.distance(prev_frame);
        config += prev_q
            .iter()
            .zip(&r.state.q)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        prev_frame = r.state.goal_frame;
        prev_q = &r.state.q;
        min_clearance = min_clearance.min(r.state.min_clearance);
        if r.events.iter().any(|e| matches!(e, Event::Blocked { .. })) {
            blocked += 1;
        }
        if r.state.line_of_sight {
            visible += 1;
        }
        comfort_sum += comfort(&r.state.q, limits);
    }
    let count = records.len() as f64;
    Ok(Metrics {
        success: last.status == Status::Succeeded,
        final_status: last.status,
        ticks_used: records.len() as u64,
        workspace_path_length: workspace,
        config_path_length: config,
        min_clearance,
        blocked_ticks: blocked,
        line_of_sight_fraction: visible as f64 / count,
        comfort: comfort_sum / count,
    })
}
