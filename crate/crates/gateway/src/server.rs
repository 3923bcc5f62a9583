//! One engine loop, many sessions. Connection handlers feed the engine
//! through a command inbox; ticks fan out over a broadcast channel.

use crate::config::{Config, ProviderConfig};
use crate::http::HttpProvider;
use crate::wire::{decode_body, decode_frame, read_frame, write_frame, MessageType, ReadOutcome, WireMessage};
use futures_util::{SinkExt, StreamExt};
use sceneweave_core::animation::AnimationEvent;
use sceneweave_core::context::HistoryQueue;
use sceneweave_core::creator::PrefabRegistry;
use sceneweave_core::engine::Engine;
use sceneweave_core::fusion::{Hand, HandPose};
use sceneweave_core::llm::{LlmError, LlmProvider, Pipeline, RequestOutcome, ScriptedMock};
use sceneweave_core::scene::{Reference, SceneSnapshot};
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {message}")]
    BindFailure { addr: String, message: String },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot load {path}: {message}")]
    Fixture { path: String, message: String },
}

pub type SharedProvider = Box<dyn LlmProvider + Send>;

/// One tick as seen by every session.
#[derive(Debug)]
pub struct TickFrame {
    pub tick: u64,
    pub events: Vec<AnimationEvent>,
    pub warnings: Vec<String>,
    pub snapshot: SceneSnapshot,
}

type Reply<T> = oneshot::Sender<Result<T, String>>;

enum EngineCommand {
    Fork(oneshot::Sender<Engine>),
    Commit { outcome: Box<RequestOutcome>, reply: oneshot::Sender<(Vec<String>, u64)> },
    HandPose(Box<HandPose>, Reply<()>),
    Pick(Reference, Hand, Reply<String>),
    Release(Hand, Reply<String>),
    Stop(String, Reply<()>),
}

struct SessionRecord {
    history: HistoryQueue,
    outbound_sequence: u64,
    inbound_sequence: Option<u64>,
    cadence: u64,
    requests: u64,
}

struct Shared {
    engine: mpsc::Sender<EngineCommand>,
    ticks: broadcast::Sender<Arc<TickFrame>>,
    latest: watch::Receiver<Arc<TickFrame>>,
    pipeline: Arc<Mutex<Pipeline<SharedProvider>>>,
    sessions: Mutex<HashMap<String, SessionRecord>>,
    next_session: AtomicU64,
    default_cadence: u64,
    timestep: f64,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub listen: String,
    pub websocket_listen: Option<String>,
    pub timestep: f64,
    pub snapshot_cadence: u64,
}

pub struct ServerHandle {
    pub tcp_addr: SocketAddr,
    pub ws_addr: Option<SocketAddr>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    pipeline: Arc<Mutex<Pipeline<SharedProvider>>>,
}

impl ServerHandle {
    /// Stops accepting, ends the engine loop and returns the usage ledger
    /// as JSON lines.
    pub async fn shutdown(self) -> String {
        let _ = self.shutdown.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
        let ledger = self.pipeline.lock().expect("pipeline lock").ledger().to_json_lines();
        ledger
    }
}

async fn bind(addr: &str) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|e| ServeError::BindFailure { addr: addr.into(), message: e.to_string() })
}

/// Binds the listeners and starts the engine loop.
pub async fn start(engine: Engine, provider: SharedProvider, options: ServerOptions) -> Result<ServerHandle, ServeError> {
    let tcp = bind(&options.listen).await?;
    let ws = match &options.websocket_listen {
        Some(addr) => Some(bind(addr).await?),
        None => None,
    };
    let tcp_addr = tcp.local_addr().expect("bound address");
    let ws_addr = ws.as_ref().map(|l| l.local_addr().expect("bound address"));

    let (shutdown, shutdown_rx) = watch::channel(false);
    let (engine_tx, engine_rx) = mpsc::channel(256);
    let (ticks, _) = broadcast::channel(256);
    let first = Arc::new(TickFrame { tick: engine.tick_count(), events: Vec::new(), warnings: Vec::new(), snapshot: engine.snapshot() });
    let (latest_tx, latest) = watch::channel(first);
    let pipeline = Arc::new(Mutex::new(Pipeline::new(provider)));
    let shared = Arc::new(Shared {
        engine: engine_tx,
        ticks: ticks.clone(),
        latest,
        pipeline: pipeline.clone(),
        sessions: Mutex::new(HashMap::new()),
        next_session: AtomicU64::new(1),
        default_cadence: options.snapshot_cadence.max(1),
        timestep: options.timestep,
    });

    let mut tasks = vec![tokio::spawn(engine_loop(engine, engine_rx, ticks, latest_tx, options.timestep, shutdown_rx.clone()))];
    tasks.push(tokio::spawn(accept_loop(tcp, shared.clone(), shutdown_rx.clone(), false)));
    if let Some(ws) = ws {
        tasks.push(tokio::spawn(accept_loop(ws, shared, shutdown_rx, true)));
    }
    log::info!("listening on {tcp_addr} (tcp){}", ws_addr.map(|a| format!(" and {a} (websocket)")).unwrap_or_default());
    Ok(ServerHandle { tcp_addr, ws_addr, shutdown, tasks, pipeline })
}

/// Builds the engine and provider from `config` and runs until Ctrl-C.
pub async fn serve(config: Config) -> Result<(), ServeError> {
    let fixture = |path: &std::path::Path, message: String| ServeError::Fixture { path: path.display().to_string(), message };
    let read = |path: &std::path::Path| std::fs::read_to_string(path).map_err(|e| fixture(path, e.to_string()));
    let prefabs = match &config.prefabs {
        Some(p) => PrefabRegistry::from_json(&read(p)?).map_err(|e| fixture(p, e.to_string()))?,
        None => PrefabRegistry::default(),
    };
    let mut engine = Engine::with_timestep(prefabs, config.timestep);
    if let Some(p) = &config.room_scan {
        engine.load_room_scan(&read(p)?).map_err(|e| fixture(p, e.to_string()))?;
    }
    let provider: SharedProvider = match &config.provider {
        ProviderConfig::Scripted { transcript } => {
            Box::new(ScriptedMock::from_json(&read(transcript)?).map_err(|e| fixture(transcript, e))?)
        }
        ProviderConfig::Http { endpoint, model, api_key_env, timeout_secs, structured_output } => {
            Box::new(HttpProvider::new(endpoint, model, api_key_env, *timeout_secs, *structured_output))
        }
    };
    let options = ServerOptions {
        listen: config.listen.clone(),
        websocket_listen: config.websocket_listen.clone(),
        timestep: config.timestep,
        snapshot_cadence: config.snapshot_cadence,
    };
    let handle = start(engine, provider, options).await?;
    let _ = tokio::signal::ctrl_c().await;
    log::info!("shutting down");
    let ledger = handle.shutdown().await;
    match &config.usage_log {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &ledger) {
                log::error!("cannot write usage log {}: {e}", path.display());
            }
        }
        None => log::info!("usage ledger:\n{ledger}"),
    }
    Ok(())
}

async fn engine_loop(
    mut engine: Engine,
    mut inbox: mpsc::Receiver<EngineCommand>,
    ticks: broadcast::Sender<Arc<TickFrame>>,
    latest: watch::Sender<Arc<TickFrame>>,
    timestep: f64,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut interval = tokio::time::interval(Duration::from_secs_f64(timestep));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            _ = interval.tick() => {
                let events = engine.tick();
                let frame = Arc::new(TickFrame {
                    tick: engine.tick_count(),
                    events,
                    warnings: engine.take_warnings(),
                    snapshot: engine.snapshot(),
                });
                let _ = ticks.send(frame.clone());
                let _ = latest.send(frame);
            }
            Some(command) = inbox.recv() => apply_command(&mut engine, command),
        }
    }
}

fn apply_command(engine: &mut Engine, command: EngineCommand) {
    let text = |e: &dyn std::fmt::Display| e.to_string();
    match command {
        EngineCommand::Fork(reply) => {
            let _ = reply.send(engine.clone());
        }
        EngineCommand::Commit { outcome, reply } => {
            let mut warnings = sceneweave_core::llm::commit(engine, &outcome);
            warnings.extend(engine.take_warnings());
            let _ = reply.send((warnings, engine.tick_count()));
        }
        EngineCommand::HandPose(pose, reply) => {
            let _ = reply.send(engine.update_hand_pose(*pose).map_err(|e| text(&e)));
        }
        EngineCommand::Pick(reference, hand, reply) => {
            let result = engine
                .pick(&reference, hand)
                .map(|id| engine.scene().get(id).map(|o| o.name.clone()).unwrap_or_default())
                .map_err(|e| text(&e));
            let _ = reply.send(result);
        }
        EngineCommand::Release(hand, reply) => {
            let result = engine
                .release(hand)
                .map(|id| engine.scene().get(id).map(|o| o.name.clone()).unwrap_or_default())
                .map_err(|e| text(&e));
            let _ = reply.send(result);
        }
        EngineCommand::Stop(id, reply) => {
            let _ = reply.send(engine.stop_animation(&id).map_err(|e| text(&e)));
        }
    }
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mut shutdown: watch::Receiver<bool>, websocket: bool) {
    let mut connections = Vec::new();
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    log::debug!("connection from {peer}");
                    let shared = shared.clone();
                    let shutdown = shutdown.clone();
                    connections.push(tokio::spawn(async move {
                        if websocket {
                            handle_websocket(stream, shared, shutdown).await
                        } else {
                            handle_tcp(stream, shared, shutdown).await
                        }
                    }));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
        }
    }
    for c in connections {
        c.abort();
    }
}

#[derive(Debug)]
enum Inbound {
    Message(WireMessage),
    Rejected(String),
    Closed,
}

async fn handle_tcp(stream: TcpStream, shared: Arc<Shared>, shutdown: watch::Receiver<bool>) {
    let (mut reader, mut writer) = stream.into_split();
    let (in_tx, in_rx) = mpsc::channel(64);
    let (out_tx, mut out_rx) = mpsc::channel::<WireMessage>(256);
    let read_task = tokio::spawn(async move {
        loop {
            let item = match read_frame(&mut reader).await {
                Ok(ReadOutcome::Message(m)) => Inbound::Message(m),
                Ok(ReadOutcome::Rejected(e)) => Inbound::Rejected(e.to_string()),
                Ok(ReadOutcome::Closed) | Err(_) => Inbound::Closed,
            };
            let closed = matches!(item, Inbound::Closed);
            if in_tx.send(item).await.is_err() || closed {
                break;
            }
        }
    });
    let write_task = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            if write_frame(&mut writer, &m).await.is_err() {
                break;
            }
        }
    });
    run_session(shared, in_rx, out_tx, shutdown).await;
    read_task.abort();
    let _ = write_task.await;
}

async fn handle_websocket(stream: TcpStream, shared: Arc<Shared>, shutdown: watch::Receiver<bool>) {
    let socket = match tokio_tungstenite::accept_async(stream).await {
        Ok(s) => s,
        Err(e) => {
            log::warn!("websocket handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = socket.split();
    let (in_tx, in_rx) = mpsc::channel(64);
    let (out_tx, mut out_rx) = mpsc::channel::<WireMessage>(256);
    let read_task = tokio::spawn(async move {
        loop {
            let item = match source.next().await {
                Some(Ok(Message::Text(text))) => match decode_body(text.as_bytes()) {
                    Ok(m) => Inbound::Message(m),
                    Err(e) => Inbound::Rejected(e.to_string()),
                },
                // binary messages carry a full frame, prefix included
                Some(Ok(Message::Binary(bytes))) => match decode_frame(&bytes) {
                    Ok((m, _)) => Inbound::Message(m),
                    Err(e) => Inbound::Rejected(e.to_string()),
                },
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => Inbound::Closed,
                Some(Ok(_)) => continue,
            };
            let closed = matches!(item, Inbound::Closed);
            if in_tx.send(item).await.is_err() || closed {
                break;
            }
        }
    });
    let write_task = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            if sink.send(Message::Text(m.to_canonical_json())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    run_session(shared, in_rx, out_tx, shutdown).await;
    read_task.abort();
    let _ = write_task.await;
}

struct Completion {
    request_id: String,
    history: HistoryQueue,
    result: Result<(RequestOutcome, Vec<String>), LlmError>,
    elapsed_ms: f64,
}

struct Session {
    id: String,
    record: SessionRecord,
    last_tick: u64,
    queue: VecDeque<(String, String)>,
    busy: bool,
}

#[derive(Deserialize)]
struct PickBody {
    object: Reference,
    #[serde(default = "default_hand")]
    hand: Hand,
}

#[derive(Deserialize)]
struct ReleaseBody {
    #[serde(default = "default_hand")]
    hand: Hand,
}

fn default_hand() -> Hand {
    Hand::Right
}

struct Outbox {
    tx: mpsc::Sender<WireMessage>,
}

impl Outbox {
    async fn send(&self, session: &mut Option<Session>, kind: MessageType, body: Value) -> bool {
        let (id, seq) = match session {
            Some(s) => {
                s.record.outbound_sequence += 1;
                (s.id.clone(), s.record.outbound_sequence)
            }
            None => (String::new(), 0),
        };
        self.tx.send(WireMessage::new(kind, id, seq, body)).await.is_ok()
    }
}

async fn run_session(
    shared: Arc<Shared>,
    mut inbound: mpsc::Receiver<Inbound>,
    outbound: mpsc::Sender<WireMessage>,
    mut shutdown: watch::Receiver<bool>,
) {
    let out = Outbox { tx: outbound };
    let mut ticks = shared.ticks.subscribe();
    let (done_tx, mut done_rx) = mpsc::channel::<Completion>(8);
    let mut session: Option<Session> = None;
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            item = inbound.recv() => match item {
                None | Some(Inbound::Closed) => break,
                Some(Inbound::Rejected(reason)) => {
                    out.send(&mut session, MessageType::Warning, json!({"message": format!("frame rejected: {reason}")})).await;
                }
                Some(Inbound::Message(m)) => {
                    if !handle_client_message(&shared, &out, &mut session, m, &done_tx).await {
                        break;
                    }
                }
            },
            frame = ticks.recv() => match frame {
                Ok(frame) => {
                    if let Some(s) = session.as_mut() {
                        if frame.tick <= s.last_tick {
                            continue;
                        }
                        s.last_tick = frame.tick;
                        let cadence = s.record.cadence;
                        for event in &frame.events {
                            out.send(&mut session, MessageType::Event, serde_json::to_value(event).expect("event serializes")).await;
                        }
                        for w in &frame.warnings {
                            out.send(&mut session, MessageType::Warning, json!({"message": w})).await;
                        }
                        if frame.tick % cadence == 0 {
                            out.send(&mut session, MessageType::Snapshot, serde_json::to_value(&frame.snapshot).expect("snapshot serializes")).await;
                        }
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("session lagged {n} ticks"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(done) = done_rx.recv() => {
                let Completion { request_id, history, result, elapsed_ms } = done;
                if let Some(s) = session.as_mut() {
                    s.record.history = history;
                    s.busy = false;
                }
                report_completion(&out, &mut session, request_id, result, elapsed_ms).await;
                start_next(&shared, &mut session, &done_tx).await;
            }
        }
    }
    if let Some(s) = session {
        // a request still in flight keeps its history copy; the stored one
        // lacks that request
        shared.sessions.lock().expect("sessions lock").insert(s.id, s.record);
    }
}

async fn report_completion(
    out: &Outbox,
    session: &mut Option<Session>,
    request_id: String,
    result: Result<(RequestOutcome, Vec<String>), LlmError>,
    elapsed_ms: f64,
) {
    match result {
        Ok((outcome, late)) => {
            for text in &outcome.speech {
                out.send(session, MessageType::Speech, json!({"request_id": request_id, "text": text})).await;
            }
            for w in outcome.warnings.iter().chain(&late) {
                out.send(session, MessageType::Warning, json!({"request_id": request_id, "message": w})).await;
            }
            let executed: Vec<&str> = outcome.executed.iter().map(|c| c.task_type.as_str()).collect();
            out.send(
                session,
                MessageType::Event,
                json!({"request_id": request_id, "executed": executed, "reports": outcome.reports}),
            )
            .await;
            out.send(
                session,
                MessageType::Usage,
                json!({
                    "request_id": request_id,
                    "input_tokens": outcome.usage.input_tokens,
                    "output_tokens": outcome.usage.output_tokens,
                    "calls": outcome.usage.calls,
                    "elapsed_ms": elapsed_ms,
                }),
            )
            .await;
        }
        Err(e) => {
            out.send(session, MessageType::Warning, json!({"request_id": request_id, "message": format!("request failed: {e}")})).await;
        }
    }
}

async fn start_next(shared: &Arc<Shared>, session: &mut Option<Session>, done_tx: &mpsc::Sender<Completion>) {
    let Some(s) = session.as_mut() else { return };
    if s.busy {
        return;
    }
    let Some((request_id, text)) = s.queue.pop_front() else { return };
    s.busy = true;
    let history = s.record.history.clone();
    let shared = shared.clone();
    let done_tx = done_tx.clone();
    tokio::spawn(async move {
        let started = Instant::now();
        let (history, result) = run_request(&shared, &request_id, text, history).await;
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        log::info!("{request_id} finished in {elapsed_ms:.1} ms");
        let _ = done_tx.send(Completion { request_id, history, result, elapsed_ms }).await;
    });
}

fn engine_stopped() -> LlmError {
    LlmError::ProviderUnavailable("engine stopped".into())
}

/// Plans against a fork of the live engine off the engine loop, then has
/// the loop commit. Returns the session history with the request recorded.
async fn run_request(
    shared: &Arc<Shared>,
    request_id: &str,
    text: String,
    mut history: HistoryQueue,
) -> (HistoryQueue, Result<(RequestOutcome, Vec<String>), LlmError>) {
    let (fork_tx, fork_rx) = oneshot::channel();
    if shared.engine.send(EngineCommand::Fork(fork_tx)).await.is_err() {
        return (history, Err(engine_stopped()));
    }
    let Ok(staging) = fork_rx.await else { return (history, Err(engine_stopped())) };
    let pipeline = shared.pipeline.clone();
    let id = request_id.to_string();
    let joined = tokio::task::spawn_blocking(move || {
        let planned = pipeline.lock().expect("pipeline lock").plan(&staging, &mut history, &id, &text);
        (history, planned)
    })
    .await;
    let (history, planned) = match joined {
        Ok(pair) => pair,
        Err(e) => return (HistoryQueue::default(), Err(LlmError::ProviderUnavailable(e.to_string()))),
    };
    let outcome = match planned {
        Ok(o) => o,
        Err(e) => return (history, Err(e)),
    };
    let (reply_tx, reply_rx) = oneshot::channel();
    let commit = EngineCommand::Commit { outcome: Box::new(outcome.clone()), reply: reply_tx };
    if shared.engine.send(commit).await.is_err() {
        return (history, Err(engine_stopped()));
    }
    match reply_rx.await {
        Ok((late, _tick)) => (history, Ok((outcome, late))),
        Err(_) => (history, Err(engine_stopped())),
    }
}

async fn engine_call<T>(shared: &Shared, make: impl FnOnce(Reply<T>) -> EngineCommand) -> Result<T, String> {
    let (tx, rx) = oneshot::channel();
    shared.engine.send(make(tx)).await.map_err(|_| "engine stopped".to_string())?;
    rx.await.map_err(|_| "engine stopped".to_string())?
}

fn open_session(shared: &Shared, requested: &str) -> (Session, bool) {
    let mut sessions = shared.sessions.lock().expect("sessions lock");
    if !requested.is_empty() {
        if let Some(record) = sessions.remove(requested) {
            return (Session { id: requested.into(), record, last_tick: 0, queue: VecDeque::new(), busy: false }, true);
        }
    }
    let id = if requested.is_empty() {
        format!("s-{}", shared.next_session.fetch_add(1, Ordering::Relaxed))
    } else {
        requested.to_string()
    };
    let record = SessionRecord {
        history: HistoryQueue::default(),
        outbound_sequence: 0,
        inbound_sequence: None,
        cadence: shared.default_cadence,
        requests: 0,
    };
    (Session { id, record, last_tick: 0, queue: VecDeque::new(), busy: false }, false)
}

/// Returns false when the connection should close.
async fn handle_client_message(
    shared: &Arc<Shared>,
    out: &Outbox,
    session: &mut Option<Session>,
    message: WireMessage,
    done_tx: &mpsc::Sender<Completion>,
) -> bool {
    if session.is_none() {
        let (s, resumed) = open_session(shared, &message.session_id);
        *session = Some(s);
        let s = session.as_mut().expect("just opened");
        let body = json!({
            "session_id": s.id,
            "snapshot_cadence": s.record.cadence,
            "timestep": shared.timestep,
            "resumed": resumed,
        });
        let latest = shared.latest.borrow().clone();
        s.last_tick = latest.tick;
        out.send(session, MessageType::ConfigAck, body).await;
        out.send(session, MessageType::Snapshot, serde_json::to_value(&latest.snapshot).expect("snapshot serializes")).await;
    }
    let current = session.as_ref().expect("session open").id.clone();
    if message.session_id != current && !message.session_id.is_empty() {
        let text = format!("message for session {:?} on session {current:?}", message.session_id);
        return out.send(session, MessageType::Warning, json!({"message": text})).await;
    }
    let s = session.as_mut().expect("session open");
    if let Some(last) = s.record.inbound_sequence {
        if message.sequence <= last {
            return out
                .send(
                    session,
                    MessageType::Warning,
                    json!({"message": format!("sequence {} does not follow {last}; message ignored", message.sequence)}),
                )
                .await;
        }
    }
    s.record.inbound_sequence = Some(message.sequence);
    let seq = message.sequence;
    let ack = |extra: Value| {
        let mut body = json!({"ack": seq});
        if let (Some(b), Value::Object(extra)) = (body.as_object_mut(), extra) {
            b.extend(extra);
        }
        body
    };
    let warn = |text: String| json!({"ack": seq, "message": text});
    match message.kind {
        MessageType::UserRequest => {
            let text = message.body.get("text").and_then(Value::as_str).map(str::to_string);
            let Some(text) = text.filter(|t| !t.trim().is_empty()) else {
                return out.send(session, MessageType::Warning, warn("user_request needs a non-empty \"text\"".into())).await;
            };
            s.record.requests += 1;
            let request_id = format!("{}/{}", s.id, s.record.requests);
            s.queue.push_back((request_id.clone(), text));
            let queued = s.queue.len() - 1 + usize::from(s.busy);
            let ok = out.send(session, MessageType::Event, ack(json!({"request_id": request_id, "queued": queued}))).await;
            start_next(shared, session, done_tx).await;
            ok
        }
        MessageType::HandPose => {
            let result = match serde_json::from_value::<HandPose>(message.body) {
                Ok(pose) => engine_call(shared, |r| EngineCommand::HandPose(Box::new(pose), r)).await,
                Err(e) => Err(format!("invalid hand pose: {e}")),
            };
            match result {
                Ok(()) => out.send(session, MessageType::Event, ack(json!({}))).await,
                Err(e) => out.send(session, MessageType::Warning, warn(e)).await,
            }
        }
        MessageType::Pick => {
            let result = match serde_json::from_value::<PickBody>(message.body) {
                Ok(b) => engine_call(shared, |r| EngineCommand::Pick(b.object, b.hand, r)).await,
                Err(e) => Err(format!("invalid pick: {e}")),
            };
            match result {
                Ok(name) => out.send(session, MessageType::Event, ack(json!({"picked": name}))).await,
                Err(e) => out.send(session, MessageType::Warning, warn(e)).await,
            }
        }
        MessageType::Release => {
            let result = match serde_json::from_value::<ReleaseBody>(message.body) {
                Ok(b) => engine_call(shared, |r| EngineCommand::Release(b.hand, r)).await,
                Err(e) => Err(format!("invalid release: {e}")),
            };
            match result {
                Ok(name) => out.send(session, MessageType::Event, ack(json!({"released": name}))).await,
                Err(e) => out.send(session, MessageType::Warning, warn(e)).await,
            }
        }
        MessageType::Event => match message.body.get("stop").and_then(Value::as_str).map(str::to_string) {
            Some(id) => match engine_call(shared, |r| EngineCommand::Stop(id.clone(), r)).await {
                Ok(()) => out.send(session, MessageType::Event, ack(json!({"stopped": id}))).await,
                Err(e) => out.send(session, MessageType::Warning, warn(e)).await,
            },
            None => out.send(session, MessageType::Warning, warn("client events must carry {\"stop\": id}".into())).await,
        },
        MessageType::ConfigAck => {
            if let Some(c) = message.body.get("snapshot_cadence") {
                match c.as_u64().filter(|c| *c > 0) {
                    Some(c) => s.record.cadence = c,
                    None => return out.send(session, MessageType::Warning, warn("snapshot_cadence must be a positive integer".into())).await,
                }
            }
            let body = json!({
                "ack": seq,
                "session_id": s.id,
                "snapshot_cadence": s.record.cadence,
                "timestep": shared.timestep,
            });
            out.send(session, MessageType::ConfigAck, body).await
        }
        MessageType::Speech | MessageType::Snapshot | MessageType::Warning | MessageType::Usage => {
            let kind = serde_json::to_value(message.kind).expect("type serializes");
            out.send(session, MessageType::Warning, warn(format!("{} messages only travel server to client", kind.as_str().unwrap_or("?")))).await
        }
    }
}
