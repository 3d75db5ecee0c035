//! Blackboard multi-agent path planner.
//!
//! Elementary agents (attraction, collision avoidance, joint limits,
//! posture, random perturbation and a human operator) share a single
//! blackboard holding the configuration of a planar model. A tick loop
//! schedules each agent by its period, bounds each contribution by the
//! agent's step bound and applies the sum under a collision guard.
//! Classical planners (visibility graph, grid search, plain potential
//! descent) serve as reference oracles.

pub mod agents;
pub mod engine;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod oracles;
pub mod record;
pub mod rng;
pub mod scenario;
pub mod scene;
pub mod svg;
pub mod trace;

pub use agents::{AgentKind, Trigger};
pub use engine::{
    run, AgentSpec, CollisionGuard, Engine, EngineConfig, ScriptCommand, ScriptEntry,
};
pub use geometry::{Point2, Shape};
pub use kinematics::{Body, JointLimits, KinematicModel};
pub use metrics::{compute_metrics, Metrics};
pub use oracles::{grid_bfs_path, potential_descent_run, visibility_graph_path, OracleResult};
pub use record::{Event, Status, TickRecord};
pub use scenario::{parse_scenario, Scenario, ScenarioError};
pub use scene::{Goal, Scene};
pub use svg::export_svg;
pub use trace::{read_trace, Trace};
