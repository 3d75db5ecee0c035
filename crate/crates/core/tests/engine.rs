use std::path::PathBuf;

use blackboard_core::agents::AgentKind;
use blackboard_core::engine::{CommandError, EngineError};
use blackboard_core::metrics::comfort;
use blackboard_core::record::{BlockReason, Event};
use blackboard_core::{
    parse_scenario, run, AgentSpec, Engine, Point2, Scenario, ScriptCommand, Shape, Status,
};

fn fixture(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    Scenario::load(path).unwrap()
}

fn march() -> Scenario {
    fixture("empty_march.json")
}

#[test]
fn single_attraction_step_is_clamped_to_bound() {
    let mut engine = Engine::new(march()).unwrap();
    let record = engine.step().unwrap();
    assert_eq!(record.tick, 1);
    assert_eq!(record.state.q, vec![0.5, 0.0]);
    assert_eq!(record.deltas[0].delta, vec![0.5, 0.0]);
    assert!(record.applied);
}

#[test]
fn empty_march_succeeds_in_twenty_ticks() {
    let trace = run(march()).unwrap();
    assert_eq!(trace.records.len(), 20);
    assert_eq!(trace.final_status(), Some(Status::Succeeded));
    let m = trace.metrics.unwrap();
    assert!((m.workspace_path_length - 10.0).abs() <= 1e-9);
    assert!(m.success);
    assert_eq!(m.blocked_ticks, 0);
}

#[test]
fn contributions_are_summed() {
    let mut s = march();
    s.scene.bounds.max.y = 11.0;
    s.model.limits.upper[1] = 11.0;
    s.agents = vec![
        AgentSpec::new(
            "east",
            AgentKind::Attraction {
                frame: Some("ee".into()),
                goal: Some(Point2::new(10.0, 0.0)),
            },
            1,
            0.5,
        ),
        AgentSpec::new(
            "north",
            AgentKind::Attraction {
                frame: Some("ee".into()),
                goal: Some(Point2::new(0.0, 10.0)),
            },
            1,
            0.5,
        ),
    ];
    let mut engine = Engine::new(s).unwrap();
    let record = engine.step().unwrap();
    assert_eq!(record.summed, vec![0.5, 0.5]);
    assert_eq!(record.state.q, vec![0.5, 0.5]);
}

#[test]
fn hard_guard_rejects_penetrating_step() {
    let mut s = march();
    s.scene.obstacles = vec![Shape::rect(Point2::new(0.3, -0.5), Point2::new(1.0, 0.5))];
    let mut engine = Engine::new(s).unwrap();
    let record = engine.step().unwrap();
    assert!(!record.applied);
    assert_eq!(record.state.q, vec![0.0, 0.0]);
    assert_eq!(record.summed, vec![0.5, 0.0]);
    assert!(record.events.contains(&Event::Blocked {
        reason: BlockReason::Collision
    }));
    assert_eq!(record.state.min_clearance, 0.3);
}

#[test]
fn unreachable_goal_fails_at_max_ticks() {
    let mut s = fixture("sealed_goal.json");
    s.engine.max_ticks = 5;
    let trace = run(s).unwrap();
    assert_eq!(trace.records.len(), 5);
    assert_eq!(trace.final_status(), Some(Status::FailedMaxTicks));
    assert!(trace.records[4].events.contains(&Event::FailedMaxTicks));
    assert!(trace.records[..4]
        .iter()
        .all(|r| r.status == Status::Running));
}

#[test]
fn invalid_scenario_never_runs() {
    let text = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/empty_march.json"),
    )
    .unwrap()
    .replace("\"period\": 1", "\"period\": 0");
    let err = parse_scenario(&text).unwrap_err();
    assert!(err.to_string().contains("agents[0].period"), "{err}");
}

#[test]
fn identical_seed_gives_identical_trace() {
    let s = fixture("u_trap.json");
    assert_eq!(
        run(s.clone()).unwrap().digest(),
        run(s.clone()).unwrap().digest()
    );
    let mut other = s;
    other.seed += 1;
    let a = run(fixture("u_trap.json")).unwrap();
    let b = run(other).unwrap();
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn records_follow_schedule_and_recompute() {
    for name in ["manikin_default.json", "u_trap.json", "random_1.json"] {
        let s = fixture(name);
        let model = s.model.kinematic_model();
        let trace = run(s.clone()).unwrap();
        for r in &trace.records {
            let expected: Vec<&str> = s
                .agents
                .iter()
                .filter(|a| a.enabled && r.tick % a.period as u64 == 0)
                .map(|a| a.id.as_str())
                .collect();
            assert_eq!(r.active, expected, "{name} tick {}", r.tick);
            let body = model.forward_kinematics(&r.state.q).unwrap();
            let frame = body.frame(&s.scene.goal.frame).unwrap();
            assert_eq!(frame, r.state.goal_frame);
            assert_eq!(frame.distance(s.scene.goal.point), r.state.goal_distance);
            assert_eq!(s.scene.clearance(&body).min_distance, r.state.min_clearance);
        }
    }
}

#[test]
fn fixture_with_all_four_agents_runs() {
    let s = fixture("manikin_default.json");
    let ids: Vec<(&str, u32)> = s.agents.iter().map(|a| (a.id.as_str(), a.period)).collect();
    assert_eq!(
        ids,
        vec![
            ("collision", 1),
            ("attraction", 3),
            ("operator", 9),
            ("posture", 9)
        ]
    );
    let trace = run(s).unwrap();
    assert_eq!(trace.final_status(), Some(Status::Succeeded));
}

#[test]
fn posture_only_run_never_loses_comfort() {
    let mut s = fixture("manikin_default.json");
    s.scene.obstacles.clear();
    s.model.initial = vec![2.5, -2.0, 1.8];
    s.agents = vec![AgentSpec::new(
        "posture",
        AgentKind::Posture {
            weights: vec![1.0, 0.4, 0.7],
        },
        1,
        0.05,
    )];
    s.engine.max_ticks = 400;
    let trace = run(s.clone()).unwrap();
    let mut prev = comfort(&s.model.initial, &s.model.limits);
    for r in &trace.records {
        let c = comfort(&r.state.q, &s.model.limits);
        assert!(c <= prev + 1e-15, "tick {}: {c} > {prev}", r.tick);
        prev = c;
    }
    assert!(prev < 1e-6);
}

#[test]
fn pull_is_applied_at_next_operator_activation() {
    let mut s = fixture("u_trap_operator.json");
    s.operator_script.clear();
    let mut engine = Engine::new(s).unwrap();
    for _ in 0..4 {
        engine.step().unwrap();
    }
    engine
        .apply_command(
            1,
            ScriptCommand::InjectPull {
                frame: "ee".into(),
                vector: Point2::new(0.0, 1.0),
            },
        )
        .unwrap();
    for _ in 0..5 {
        engine.step().unwrap();
    }
    let records = engine.records();
    let operator_delta = |tick: usize| {
        records[tick - 1]
            .deltas
            .iter()
            .find(|d| d.agent == "operator")
            .map(|d| d.delta.clone())
    };
    for tick in 5..9 {
        assert_eq!(operator_delta(tick), None);
    }
    assert_eq!(operator_delta(9), Some(vec![0.0, 1.0]));
    assert!(records[8].events.contains(&Event::OperatorApplied {
        agent: "operator".into(),
        seq: 1
    }));
}

#[test]
fn latest_pull_wins() {
    let mut s = fixture("u_trap_operator.json");
    s.operator_script.clear();
    let mut engine = Engine::new(s).unwrap();
    for (seq, v) in [(1, Point2::new(1.0, 0.0)), (2, Point2::new(0.0, 1.0))] {
        engine
            .apply_command(
                seq,
                ScriptCommand::InjectPull {
                    frame: "ee".into(),
                    vector: v,
                },
            )
            .unwrap();
    }
    for _ in 0..9 {
        engine.step().unwrap();
    }
    let r = &engine.records()[8];
    let d = r.deltas.iter().find(|d| d.agent == "operator").unwrap();
    assert_eq!(d.delta, vec![0.0, 1.0]);
    assert!(r.events.contains(&Event::Superseded {
        agent: "operator".into(),
        seq: 1
    }));
}

#[test]
fn bad_set_agent_leaves_state_unchanged() {
    let mut engine = Engine::new(fixture("u_trap_operator.json")).unwrap();
    engine.step().unwrap();
    let agents = engine.agents().to_vec();
    let applied = engine.applied_commands().len();
    let err = engine
        .apply_command(
            7,
            ScriptCommand::SetAgent {
                id: "operator".into(),
                period: Some(0),
                step_bound: None,
                enabled: None,
            },
        )
        .unwrap_err();
    assert!(matches!(
        err,
        CommandError::OutOfRange {
            field: "period",
            ..
        }
    ));
    let err = engine
        .apply_command(
            8,
            ScriptCommand::SetAgent {
                id: "ghost".into(),
                period: Some(2),
                step_bound: None,
                enabled: None,
            },
        )
        .unwrap_err();
    assert_eq!(err, CommandError::UnknownAgent("ghost".into()));
    assert_eq!(engine.agents(), agents.as_slice());
    assert_eq!(engine.applied_commands().len(), applied);
}

#[test]
fn set_agent_changes_schedule() {
    let mut engine = Engine::new(fixture("u_trap.json")).unwrap();
    engine
        .apply_command(
            1,
            ScriptCommand::SetAgent {
                id: "collision".into(),
                period: Some(2),
                step_bound: None,
                enabled: None,
            },
        )
        .unwrap();
    let r1 = engine.step().unwrap().clone();
    assert_eq!(r1.active, vec!["attraction", "perturbation"]);
    assert!(matches!(
        r1.events[0],
        Event::AgentUpdated { period: 2, .. }
    ));
    let r2 = engine.step().unwrap();
    assert_eq!(r2.active, vec!["attraction", "collision", "perturbation"]);
}

#[test]
fn applied_commands_replay_identically() {
    let mut s = fixture("u_trap_operator.json");
    s.operator_script.clear();
    let mut live = Engine::new(s.clone()).unwrap();
    let pull = |y| ScriptCommand::InjectPull {
        frame: "ee".into(),
        vector: Point2::new(0.0, y),
    };
    live.apply_command(1, pull(10.0)).unwrap();
    for _ in 0..11 {
        live.step().unwrap();
    }
    live.apply_command(2, pull(10.0)).unwrap();
    live.apply_command(
        3,
        ScriptCommand::SetAgent {
            id: "attraction".into(),
            period: None,
            step_bound: Some(0.08),
            enabled: None,
        },
    )
    .unwrap();
    live.run_to_end();
    let mut replay = s;
    replay.operator_script = live.applied_commands().to_vec();
    assert_eq!(run(replay).unwrap().digest(), live.trace().digest());
}

#[test]
fn paused_engine_refuses_to_step() {
    let mut engine = Engine::new(march()).unwrap();
    engine.pause();
    assert_eq!(
        engine.step().unwrap_err(),
        EngineError::NotRunning(Status::Paused)
    );
    engine.resume();
    assert!(engine.step().is_ok());
}

#[test]
fn stall_halts_when_requested() {
    let mut s = fixture("u_trap.json");
    s.agents.retain(|a| a.id != "perturbation");
    s.engine.halt_on_stall = true;
    let trace = run(s).unwrap();
    let last = trace.records.last().unwrap();
    assert_eq!(last.status, Status::Stalled);
    assert!(last.stalled);
    assert!(last.events.contains(&Event::Stalled));
}

#[test]
fn stall_triggered_perturbation_only_acts_when_stalled() {
    let trace = run(fixture("u_trap.json")).unwrap();
    let mut acted = 0;
    let mut previous_stalled = false;
    for r in &trace.records {
        let d = &r
            .deltas
            .iter()
            .find(|d| d.agent == "perturbation")
            .unwrap()
            .delta;
        let moved = d.iter().any(|v| *v != 0.0);
        assert_eq!(moved, previous_stalled, "tick {}", r.tick);
        acted += moved as usize;
        previous_stalled = r.stalled;
    }
    assert!(acted > 0);
}
