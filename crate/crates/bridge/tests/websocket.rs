use std::path::PathBuf;
use std::time::Duration;

use blackboard_bridge::protocol::{ErrorCode, Role, ServerMessage};
use blackboard_bridge::{start, ServerConfig, ServerError, Session, SessionConfig};
use blackboard_core::{Scenario, Status};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn session() -> Session {
    let mut s = Scenario::load(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/manikin_default.json"),
    )
    .unwrap();
    s.engine.max_ticks = 1_000_000;
    s.scene.goal.epsilon = 1e-9;
    Session::new(s, SessionConfig::default()).unwrap()
}

async fn recv(c: &mut Client) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), c.next())
            .await
            .expect("timed out")
            .unwrap()
            .unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(&text).unwrap();
        }
    }
}

/// Skips snapshots up to the next ack or err.
async fn reply(c: &mut Client) -> ServerMessage {
    loop {
        match recv(c).await {
            ServerMessage::Snapshot(_) => continue,
            other => return other,
        }
    }
}

async fn send(c: &mut Client, value: serde_json::Value) {
    c.send(Message::Text(value.to_string().into()))
        .await
        .unwrap();
}

async fn connect(addr: std::net::SocketAddr) -> (Client, Role) {
    let (mut c, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let ServerMessage::Hello {
        role,
        protocol_version,
    } = recv(&mut c).await
    else {
        panic!("expected hello")
    };
    assert_eq!(protocol_version, "1");
    let ServerMessage::Snapshot(snap) = recv(&mut c).await else {
        panic!("expected snapshot")
    };
    assert_eq!(snap.status, Status::Paused);
    (c, role)
}

#[tokio::test]
async fn second_client_is_read_only() {
    let server = start(
        "127.0.0.1:0".parse().unwrap(),
        session(),
        ServerConfig { rate: 200.0 },
    )
    .await
    .unwrap();
    let addr = server.local_addr;
    let (mut controller, role) = connect(addr).await;
    assert_eq!(role, Role::Controller);
    let (mut observer, role) = connect(addr).await;
    assert_eq!(role, Role::Observer);

    send(&mut observer, json!({"type": "resume", "seq": 1})).await;
    match reply(&mut observer).await {
        ServerMessage::Err { seq, code, .. } => {
            assert_eq!(seq, Some(1));
            assert_eq!(code, ErrorCode::ReadOnly);
        }
        other => panic!("{other:?}"),
    }

    send(&mut controller, json!({"type": "step_n", "seq": 2, "n": 3})).await;
    assert_eq!(reply(&mut controller).await, ServerMessage::Ack { seq: 2 });
    // The observer sees the controller's snapshots.
    let mut last = 0;
    while last < 3 {
        if let ServerMessage::Snapshot(s) = recv(&mut observer).await {
            last = s.tick;
        }
    }
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn controller_disconnect_pauses_and_frees_the_slot() {
    let server = start(
        "127.0.0.1:0".parse().unwrap(),
        session(),
        ServerConfig { rate: 200.0 },
    )
    .await
    .unwrap();
    let addr = server.local_addr;
    let (mut controller, _) = connect(addr).await;
    let (mut observer, _) = connect(addr).await;

    send(&mut controller, json!({"type": "resume", "seq": 1})).await;
    assert_eq!(reply(&mut controller).await, ServerMessage::Ack { seq: 1 });
    // Wait for live ticks to reach the observer.
    loop {
        if let ServerMessage::Snapshot(s) = recv(&mut observer).await {
            if s.tick >= 5 {
                break;
            }
        }
    }
    controller.close(None).await.unwrap();
    let paused_at = loop {
        if let ServerMessage::Snapshot(s) = recv(&mut observer).await {
            if s.status == Status::Paused {
                break s.tick;
            }
        }
    };
    // No more ticks arrive while paused.
    let quiet = tokio::time::timeout(Duration::from_millis(200), observer.next()).await;
    assert!(quiet.is_err(), "unexpected frame {quiet:?}");

    // The observer stays an observer; the next new client controls.
    let (mut next, role) = connect(addr).await;
    assert_eq!(role, Role::Controller);
    send(&mut next, json!({"type": "step_n", "seq": 1, "n": 1})).await;
    assert_eq!(reply(&mut next).await, ServerMessage::Ack { seq: 1 });
    loop {
        if let ServerMessage::Snapshot(s) = recv(&mut observer).await {
            assert_eq!(s.tick, paused_at + 1);
            break;
        }
    }
    server.shutdown().await.unwrap();
}

#[tokio::test]
async fn busy_port_is_an_error() {
    let first = start(
        "127.0.0.1:0".parse().unwrap(),
        session(),
        ServerConfig::default(),
    )
    .await
    .unwrap();
    let err = start(first.local_addr, session(), ServerConfig::default())
        .await
        .err()
        .unwrap();
    assert!(matches!(err, ServerError::Bind { .. }), "{err}");
    first.shutdown().await.unwrap();
}

#[tokio::test]
async fn scripted_client_sees_pull_at_operator_turn() {
    let server = start(
        "127.0.0.1:0".parse().unwrap(),
        session(),
        ServerConfig::default(),
    )
    .await
    .unwrap();
    let (mut c, _) = connect(server.local_addr).await;
    send(&mut c, json!({"type": "step_n", "seq": 1, "n": 4})).await;
    assert_eq!(reply(&mut c).await, ServerMessage::Ack { seq: 1 });
    send(
        &mut c,
        json!({"type": "inject_pull", "seq": 2, "frame": "ee", "vector": [0.0, 1.0]}),
    )
    .await;
    assert_eq!(reply(&mut c).await, ServerMessage::Ack { seq: 2 });
    send(
        &mut c,
        json!({"type": "set_agent", "seq": 3, "id": "operator", "period": 0}),
    )
    .await;
    assert!(matches!(
        reply(&mut c).await,
        ServerMessage::Err {
            seq: Some(3),
            code: ErrorCode::OutOfRange,
            ..
        }
    ));
    send(&mut c, json!({"type": "step_n", "seq": 4, "n": 5})).await;
    let mut first_operator_tick = None;
    loop {
        match recv(&mut c).await {
            ServerMessage::Snapshot(s) => {
                let record = s.last_record.unwrap();
                assert_eq!(
                    s.agents.iter().find(|a| a.id == "operator").unwrap().period,
                    9
                );
                let moved = record
                    .deltas
                    .iter()
                    .any(|d| d.agent == "operator" && d.delta.iter().any(|x| *x != 0.0));
                if moved && first_operator_tick.is_none() {
                    first_operator_tick = Some(record.tick);
                }
            }
            other => {
                assert_eq!(other, ServerMessage::Ack { seq: 4 });
                break;
            }
        }
    }
    assert_eq!(first_operator_tick, Some(9));
    server.shutdown().await.unwrap();
}
