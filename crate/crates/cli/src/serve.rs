//! WebSocket server: one simulated episode, any number of operator clients.
//!
//! The episode runs on its own thread and owns all protocol state. Socket
//! tasks only move text frames in and out.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use dcpp_core::gateway::{
    bye, Connection, GatewayPolicy, MessageType, Outbound, HEARTBEAT_INTERVAL,
};
use dcpp_core::sim::{Episode, EpisodeConfig, Scenario};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};
use tracing::{debug, info, warn};

use crate::outcome_name;

/// Pongs a client may miss before it is dropped.
const MAX_MISSED_PONGS: u32 = 2;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub listen: SocketAddr,
    pub config: EpisodeConfig,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub report: Option<PathBuf>,
}

enum Command {
    Join {
        id: u64,
        tx: UnboundedSender<String>,
    },
    Frame {
        id: u64,
        raw: String,
    },
    Leave {
        id: u64,
    },
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    next_id: Arc<AtomicU64>,
}

/// Serves until ctrl-c. Prints `listening on ADDR` once bound.
pub async fn serve(scenario: Scenario, opts: ServeOptions) -> Result<()> {
    anyhow::ensure!(
        opts.time_scale > 0.0 && opts.time_scale.is_finite(),
        "--time-scale must be positive"
    );
    // fail before binding if the scenario does not start
    Episode::new(&scenario, opts.config.clone())?;

    let listener = TcpListener::bind(opts.listen)
        .await
        .with_context(|| format!("binding {}", opts.listen))?;
    let addr = listener.local_addr()?;

    let (tx, rx) = mpsc::channel();
    std::thread::Builder::new()
        .name("episode".into())
        .spawn(move || {
            if let Err(e) = run_episode(&scenario, &opts, rx) {
                warn!("episode thread stopped: {e:#}");
            }
        })?;

    let state = AppState {
        commands: tx,
        next_id: Arc::new(AtomicU64::new(1)),
    };
    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(state);

    println!("listening on {addr}");
    info!(%addr, "serving");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

struct Client {
    conn: Connection,
    tx: UnboundedSender<String>,
}

impl Client {
    fn send(&mut self, out: &Outbound) {
        let _ = self.tx.send(self.conn.seal(out).to_text());
    }
}

fn run_episode(
    scenario: &Scenario,
    opts: &ServeOptions,
    rx: mpsc::Receiver<Command>,
) -> Result<()> {
    let mut episode = Episode::new(scenario, opts.config.clone())?;
    let mut policy = GatewayPolicy::new();
    let mut clients: BTreeMap<u64, Client> = BTreeMap::new();
    let session_id = episode.session().id().to_owned();
    let tick = Duration::from_secs_f64(opts.config.dt / opts.time_scale);
    let mut next = Instant::now() + tick;
    let mut finished = false;

    loop {
        let deadline = if finished {
            Instant::now() + Duration::from_millis(200)
        } else {
            next
        };
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(Command::Join { id, tx }) => {
                    debug!(id, "client joined");
                    clients.insert(
                        id,
                        Client {
                            conn: Connection::new(session_id.clone()),
                            tx,
                        },
                    );
                }
                Ok(Command::Leave { id }) => {
                    debug!(id, "client left");
                    clients.remove(&id);
                }
                Ok(Command::Frame { id, raw }) => {
                    let Some(client) = clients.get_mut(&id) else {
                        continue;
                    };
                    match client.conn.open(&raw) {
                        Ok(msg) => {
                            for out in policy.submit(episode.session(), &msg) {
                                client.send(&out);
                            }
                            if msg.kind == MessageType::Bye {
                                // dropping the sender closes the socket
                                clients.remove(&id);
                            }
                        }
                        Err(e) => client.send(&Outbound::error(&e)),
                    }
                    for out in policy.take_broadcast() {
                        clients.values_mut().for_each(|c| c.send(&out));
                    }
                }
                Err(mpsc::RecvTimeoutError::Timeout) => break,
                Err(mpsc::RecvTimeoutError::Disconnected) => return Ok(()),
            }
        }
        if finished {
            continue;
        }

        let done = episode.step(&mut policy)?;
        for out in policy.take_broadcast() {
            clients.values_mut().for_each(|c| c.send(&out));
        }
        next += tick;
        if let Some(outcome) = done {
            finished = true;
            let report = episode.report("remote");
            info!(
                outcome = outcome_name(outcome),
                t = report.sim_time,
                "episode finished"
            );
            if let Some(path) = &opts.report {
                std::fs::write(path, report.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let out = bye(&format!("episode finished: {}", outcome_name(outcome)));
            clients.values_mut().for_each(|c| c.send(&out));
        }
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client_task(socket, state))
}

async fn client_task(socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let (out_tx, mut out_rx) = unbounded_channel::<String>();
    if state
        .commands
        .send(Command::Join { id, tx: out_tx })
        .is_err()
    {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let period = Duration::from_secs_f64(HEARTBEAT_INTERVAL);
    let mut heartbeat = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    let mut missed = 0u32;

    loop {
        tokio::select! {
            out = out_rx.recv() => match out {
                Some(text) => {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                None => {
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    missed = 0;
                    let raw = text.to_string();
                    if state.commands.send(Command::Frame { id, raw }).is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Binary(bytes))) => {
                    missed = 0;
                    let raw = String::from_utf8_lossy(&bytes).into_owned();
                    if state.commands.send(Command::Frame { id, raw }).is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Pong(_))) => missed = 0,
                Some(Ok(Message::Ping(_))) => {}
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
            _ = heartbeat.tick() => {
                if missed >= MAX_MISSED_PONGS {
                    warn!(id, "client missed {missed} pongs, dropping");
                    break;
                }
                missed += 1;
                if sink.send(Message::Ping(Default::default())).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = state.commands.send(Command::Leave { id });
}
