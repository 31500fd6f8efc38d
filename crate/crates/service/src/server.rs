/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Websocket front end.
//!
//! Three actors share the session:
//!
//! * the control loop, on its own OS thread, is the only writer of robot
//!   state and publishes an immutable snapshot after every step;
//! * the command mailbox, a bounded FIFO for deltas and run controls plus
//!   latest-wins slots for tasks and weight sets, drained at step
//!   boundaries;
//! * the telemetry broadcaster, which stamps the newest snapshot at a fixed
//!   rate and fans it out, so frame cadence doesn't depend on MPPI cost.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use tdcr_core::mppi::ObjectiveWeights;
use tdcr_core::task::TaskDescriptor;

use crate::error::{Result, ServiceError};
use crate::protocol::{decode, encode, CommandMessage, ServerMessage, TelemetryFrame};
use crate::session::{ServiceConfig, SessionCommand, TeleopSession};

pub const PORT_ENV: &str = "TDCR_PORT";
pub const DEFAULT_PORT: u16 = 8765;

/// Port from `TDCR_PORT`, or the default when unset.
pub fn port_from_env() -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| ServiceError::Config(format!("{PORT_ENV}={v:?} is not a port"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

struct Mailbox {
    fifo: SyncSender<SessionCommand>,
    task: Mutex<Option<TaskDescriptor>>,
    weights: Mutex<Option<ObjectiveWeights>>,
}

impl Mailbox {
    fn submit(&self, command: SessionCommand) -> Result<()> {
        match command {
            SessionCommand::Task(d) => {
                d.validate()?;
                *self.task.lock().expect("mailbox") = Some(d);
            }
            SessionCommand::Weights(w) => {
                w.validate()?;
                *self.weights.lock().expect("mailbox") = Some(w);
            }
            other => {
                if let SessionCommand::Delta(d) = &other {
                    d.validate()?;
                }
                self.fifo.try_send(other).map_err(|e| match e {
                    TrySendError::Full(_) => ServiceError::QueueFull,
                    TrySendError::Disconnected(_) => ServiceError::Protocol("control loop stopped".into()),
                })?;
            }
        }
        Ok(())
    }

    /// Everything pending, deltas first in arrival order.
    fn drain(&self, fifo: &Receiver<SessionCommand>) -> Vec<SessionCommand> {
        let mut out: Vec<SessionCommand> = fifo.try_iter().collect();
        out.extend(
            self.weights
                .lock()
                .expect("mailbox")
                .take()
                .map(SessionCommand::Weights),
        );
        out.extend(self.task.lock().expect("mailbox").take().map(SessionCommand::Task));
        out
    }
}

struct Shared {
    mailbox: Mailbox,
    frames: broadcast::Sender<Utf8Bytes>,
    authority: Mutex<Option<u64>>,
    next_client: AtomicU64,
}

impl Shared {
    fn holder(&self) -> Option<u64> {
        *self.authority.lock().expect("authority")
    }

    /// First come, first served; the holder keeps it until release or
    /// disconnect.
    fn claim(&self, client: u64) -> bool {
        let mut a = self.authority.lock().expect("authority");
        match *a {
            None => {
                *a = Some(client);
                true
            }
            Some(h) => h == client,
        }
    }

    fn release(&self, client: u64) {
        let mut a = self.authority.lock().expect("authority");
        if *a == Some(client) {
            *a = None;
        }
    }
}

/// A running service. Dropping it without [`ServiceHandle::shutdown`]
/// leaves the tasks running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    halt: Arc<AtomicBool>,
    server: JoinHandle<std::io::Result<()>>,
    broadcaster: JoinHandle<()>,
    control: Option<thread::JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Runs until the server stops on its own.
    pub async fn wait(mut self) -> Result<()> {
        let r = (&mut self.server).await;
        self.stop_workers();
        r.map_err(|e| ServiceError::Protocol(e.to_string()))??;
        Ok(())
    }

    pub async fn shutdown(mut self) -> Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let r = (&mut self.server).await;
        self.stop_workers();
        r.map_err(|e| ServiceError::Protocol(e.to_string()))??;
        Ok(())
    }

    fn stop_workers(&mut self) {
        self.halt.store(true, Ordering::Relaxed);
        self.broadcaster.abort();
        if let Some(c) = self.control.take() {
            let _ = c.join();
        }
    }
}

fn control_loop(
    mut session: TeleopSession,
    shared: Arc<Shared>,
    fifo: Receiver<SessionCommand>,
    snapshots: watch::Sender<TelemetryFrame>,
    halt: Arc<AtomicBool>,
) {
    let period = Duration::from_secs_f64(session.config().dt() / session.config().time_scale);
    let mut next = Instant::now();
    while !halt.load(Ordering::Relaxed) {
        for cmd in shared.mailbox.drain(&fifo) {
            if let Err(e) = session.apply(&cmd) {
                log::warn!("command {cmd:?} rejected: {e}");
            }
        }
        if let Err(e) = session.step() {
            log::error!("control step failed: {e}");
        }
        match session.snapshot() {
            Ok(frame) => {
                snapshots.send_replace(frame);
            }
            Err(e) => log::error!("snapshot failed: {e}"),
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            // Behind schedule: don't try to catch up in a burst.
            next = now;
        }
    }
}

async fn broadcast_loop(
    shared: Arc<Shared>,
    mut snapshots: watch::Receiver<TelemetryFrame>,
    rate: f64,
    started: Instant,
) {
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / rate));
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let mut seq = 0u64;
    loop {
        tick.tick().await;
        let mut frame = snapshots.borrow_and_update().clone();
        seq += 1;
        frame.seq = seq;
        frame.timestamp = started.elapsed().as_secs_f64();
        frame.authority = shared.holder();
        match encode(&ServerMessage::Telemetry(frame)) {
            // No receivers is fine: the loop runs headless.
            Ok(text) => {
                let _ = shared.frames.send(text.into());
            }
            Err(e) => log::error!("telemetry encode failed: {e}"),
        }
    }
}

/// Starts the control loop, broadcaster and websocket route on `listener`.
pub async fn spawn(config: ServiceConfig, listener: TcpListener) -> Result<ServiceHandle> {
    let session = TeleopSession::new(config.clone())?;
    spawn_session(session, listener).await
}

pub async fn spawn_session(session: TeleopSession, listener: TcpListener) -> Result<ServiceHandle> {
    let config = session.config().clone();
    let (fifo_tx, fifo_rx) = sync_channel(config.queue_capacity);
    let (frames, _) = broadcast::channel(16);
    let shared = Arc::new(Shared {
        mailbox: Mailbox {
            fifo: fifo_tx,
            task: Mutex::new(None),
            weights: Mutex::new(None),
        },
        frames,
        authority: Mutex::new(None),
        next_client: AtomicU64::new(1),
    });
    let (snap_tx, snap_rx) = watch::channel(session.snapshot()?);
    let halt = Arc::new(AtomicBool::new(false));
    let started = Instant::now();

    let control = {
        let (shared, halt) = (shared.clone(), halt.clone());
        thread::Builder::new()
            .name("tdcr-control".into())
            .spawn(move || control_loop(session, shared, fifo_rx, snap_tx, halt))?
    };
    let broadcaster = tokio::spawn(broadcast_loop(shared.clone(), snap_rx, config.telemetry_rate, started));

    let app = Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(shared);
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    log::info!("teleop service listening on {addr}");
    Ok(ServiceHandle {
        addr,
        stop: Some(stop),
        halt,
        server,
        broadcaster,
        control: Some(control),
    })
}

/// Binds `0.0.0.0` on the port from the environment and serves until the
/// process is interrupted.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let listener = TcpListener::bind(("0.0.0.0", port_from_env()?)).await?;
    let handle = spawn(config, listener).await?;
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

fn reply(message: &ServerMessage) -> Option<Utf8Bytes> {
    encode(message).ok().map(Utf8Bytes::from)
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let granted = shared.claim(id);
    let (mut sink, mut stream) = socket.split();
    let mut frames = shared.frames.subscribe();
    let (tx, mut replies) = mpsc::channel::<Utf8Bytes>(32);

    let writer = tokio::spawn(async move {
        if let Some(hello) = reply(&ServerMessage::Authority { client_id: id, granted }) {
            if sink.send(Message::Text(hello)).await.is_err() {
                return;
            }
        }
        loop {
            let next = tokio::select! {
                f = frames.recv() => match f {
                    Ok(f) => f,
                    // A slow client just misses frames.
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                r = replies.recv() => match r {
                    Some(r) => r,
                    None => break,
                },
            };
            if sink.send(Message::Text(next)).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Binary(_) => {
                let _ = tx.try_send(error_frame("binary frames are not supported"));
                continue;
            }
            _ => continue,
        };
        if let Some(r) = handle_text(&shared, id, text.as_str()) {
            // Replies are best effort: a client that never reads loses them.
            let _ = tx.try_send(r);
        }
    }
    shared.release(id);
    writer.abort();
}

fn error_frame(message: impl Into<String>) -> Utf8Bytes {
    reply(&ServerMessage::Error {
        message: message.into(),
    })
    .unwrap_or_else(|| Utf8Bytes::from_static("{}"))
}

fn handle_text(shared: &Shared, id: u64, text: &str) -> Option<Utf8Bytes> {
    let cmd: CommandMessage = match decode(text) {
        Ok(c) => c,
        Err(e) => return Some(error_frame(e.to_string())),
    };
    if cmd.needs_authority() && shared.holder() != Some(id) {
        return Some(error_frame(match shared.holder() {
            Some(h) => format!("client {h} holds command authority"),
            None => "claim command authority first".to_string(),
        }));
    }
    let command = match cmd {
        CommandMessage::ClaimAuthority => {
            let granted = shared.claim(id);
            return reply(&ServerMessage::Authority { client_id: id, granted });
        }
        CommandMessage::ReleaseAuthority => {
            shared.release(id);
            return reply(&ServerMessage::Authority {
                client_id: id,
                granted: false,
            });
        }
        CommandMessage::VirtualRobotDelta(d) => SessionCommand::Delta(d),
        CommandMessage::TaskDescriptor(d) => SessionCommand::Task(d),
        CommandMessage::WeightSet { weights } => SessionCommand::Weights(weights),
        CommandMessage::RunControl { action } => SessionCommand::Run(action),
    };
    shared.mailbox.submit(command).err().map(|e| error_frame(e.to_string()))
}
