//! WebSocket front end. A single session task owns the [`Session`]; socket
//! tasks only forward frames through its mailbox.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::protocol::{ErrorCode, Role, ServerMessage, PROTOCOL_VERSION};
use crate::session::Session;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Ticks per second while running.
    pub rate: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { rate: 50.0 }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("tick rate must be finite and > 0, got {0}")]
    Rate(f64),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

type ClientId = u64;

enum Mail {
    Connect {
        id: ClientId,
        outbox: mpsc::UnboundedSender<String>,
    },
    Frame {
        id: ClientId,
        text: String,
    },
    Disconnect {
        id: ClientId,
    },
}

#[derive(Clone)]
struct AppState {
    mailbox: mpsc::UnboundedSender<Mail>,
    next_id: std::sync::Arc<std::sync::atomic::AtomicU64>,
}

/// A running server.
pub struct ServerHandle {
    pub local_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    /// Stops accepting connections and waits for the server to exit.
    pub async fn shutdown(mut self) -> Result<(), ServerError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)??;
        Ok(())
    }

    /// Runs until the server stops on its own.
    pub async fn wait(self) -> Result<(), ServerError> {
        self.task.await.map_err(std::io::Error::other)??;
        Ok(())
    }
}

/// Binds `addr` and serves `session` on `/ws`.
pub async fn start(
    addr: SocketAddr,
    session: Session,
    config: ServerConfig,
) -> Result<ServerHandle, ServerError> {
    if !(config.rate.is_finite() && config.rate > 0.0) {
        return Err(ServerError::Rate(config.rate));
    }
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    let local_addr = listener.local_addr()?;
    let (mailbox, inbox) = mpsc::unbounded_channel();
    let period = Duration::from_secs_f64(1.0 / config.rate);
    let session_task = tokio::spawn(run_session(session, inbox, period));
    let state = AppState {
        mailbox,
        next_id: Default::default(),
    };
    let app = Router::new()
        .route("/", get(info))
        .route("/ws", get(upgrade))
        .with_state(state);
    let (shutdown, signal) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = signal.await;
            })
            .await;
        session_task.abort();
        served
    });
    log::info!("serving on ws://{local_addr}/ws");
    Ok(ServerHandle {
        local_addr,
        shutdown: Some(shutdown),
        task,
    })
}

async fn info() -> impl IntoResponse {
    Json(json!({ "protocol_version": PROTOCOL_VERSION, "endpoint": "/ws" }))
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let id = state
        .next_id
        .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let (outbox, mut outgoing) = mpsc::unbounded_channel::<String>();
    if state.mailbox.send(Mail::Connect { id, outbox }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = outgoing.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(message)) = stream.next().await {
        match message {
            Message::Text(text) => {
                let text = text.to_string();
                if state.mailbox.send(Mail::Frame { id, text }).is_err() {
                    break;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = state.mailbox.send(Mail::Disconnect { id });
    writer.abort();
}

/// The session task: applies mail between ticks and ticks on a fixed
/// wall-clock cadence while running.
async fn run_session(
    mut session: Session,
    mut inbox: mpsc::UnboundedReceiver<Mail>,
    period: Duration,
) {
    let mut clients: BTreeMap<ClientId, mpsc::UnboundedSender<String>> = BTreeMap::new();
    let mut controller: Option<ClientId> = None;
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    let broadcast = |clients: &BTreeMap<ClientId, mpsc::UnboundedSender<String>>,
                     msg: &ServerMessage| {
        let text = msg.to_json();
        for tx in clients.values() {
            let _ = tx.send(text.clone());
        }
    };

    loop {
        tokio::select! {
            mail = inbox.recv() => {
                let Some(mail) = mail else { break };
                match mail {
                    Mail::Connect { id, outbox } => {
                        let role = if controller.is_none() {
                            controller = Some(id);
                            Role::Controller
                        } else {
                            Role::Observer
                        };
                        log::info!("client {id} connected as {role:?}");
                        let hello = ServerMessage::Hello {
                            protocol_version: PROTOCOL_VERSION.into(),
                            role,
                        };
                        let _ = outbox.send(hello.to_json());
                        let snapshot = session.snapshot();
                        let _ = outbox.send(snapshot.to_json());
                        clients.insert(id, outbox);
                    }
                    Mail::Frame { id, text } => {
                        if controller != Some(id) {
                            let seq = crate::protocol::parse_command(&text)
                                .map(|e| Some(e.seq))
                                .unwrap_or_else(|(seq, _)| seq);
                            let reply = ServerMessage::Err {
                                seq,
                                code: ErrorCode::ReadOnly,
                                message: "observers cannot send commands".into(),
                            };
                            if let Some(tx) = clients.get(&id) {
                                let _ = tx.send(reply.to_json());
                            }
                            continue;
                        }
                        for msg in session.handle_text(&text) {
                            match msg {
                                ServerMessage::Snapshot(_) => broadcast(&clients, &msg),
                                _ => {
                                    if let Some(tx) = clients.get(&id) {
                                        let _ = tx.send(msg.to_json());
                                    }
                                }
                            }
                        }
                    }
                    Mail::Disconnect { id } => {
                        clients.remove(&id);
                        if controller == Some(id) {
                            controller = None;
                            log::info!("controller {id} left; pausing");
                            if let Some(snapshot) = session.controller_left() {
                                broadcast(&clients, &snapshot);
                            }
                        }
                    }
                }
            }
            _ = ticker.tick(), if session.is_running() => {
                if let Some(snapshot) = session.tick() {
                    broadcast(&clients, &snapshot);
                }
            }
        }
    }
}
