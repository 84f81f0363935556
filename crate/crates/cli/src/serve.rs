//! Interactive session server.
//!
//! One port carries both transports. A connection whose first byte is `G`
//! is an HTTP request and goes to axum for the WebSocket upgrade on `/ws`;
//! anything else, including a client that stays silent, speaks
//! length-prefixed frames directly. WebSocket clients send and receive one
//! JSON message per text frame.

use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc as std_mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use hrc_safety::session::protocol::{decode_payload, frame_len, ProtocolError, Role};
use hrc_safety::session::{Button, ButtonEvent, Edge, Message, RunOptions, Session};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;

use crate::{load_config, load_scenario, ServeArgs};

const CLIENT_QUEUE: usize = 256;
const SERVER_NAME: &str = "hrc-cell";
const SNIFF_TIMEOUT: Duration = Duration::from_millis(200);

type ClientId = u64;

struct Hub {
    operator: Mutex<Option<ClientId>>,
    next_id: AtomicU64,
    buttons: Mutex<std_mpsc::Sender<(Button, Edge)>>,
    outbound: broadcast::Sender<Message>,
    latest: Mutex<Vec<Message>>,
}

impl Hub {
    fn register(&self) -> ClientId {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    fn leave(&self, id: ClientId) {
        let mut op = self.operator.lock().unwrap();
        if *op == Some(id) {
            *op = None;
        }
    }

    /// Stores the message for late joiners and sends it to every client.
    fn publish(&self, msg: Message) {
        {
            let mut latest = self.latest.lock().unwrap();
            let same_kind = |m: &Message| std::mem::discriminant(m) == std::mem::discriminant(&msg);
            latest.retain(|m| !same_kind(m));
            if matches!(msg, Message::Snapshot(_) | Message::Metrics(_)) {
                latest.push(msg.clone());
            }
        }
        // no subscribers is fine
        let _ = self.outbound.send(msg);
    }

    /// Queue of messages for one client, fed from the broadcast channel and
    /// primed with the latest snapshot and metrics.
    fn client_queue(self: &Arc<Self>) -> (mpsc::Sender<Message>, mpsc::Receiver<Message>, JoinHandle<()>) {
        let (tx, rx) = mpsc::channel(CLIENT_QUEUE);
        let mut sub = self.outbound.subscribe();
        let primed = self.latest.lock().unwrap().clone();
        let feed = tx.clone();
        let forward = tokio::spawn(async move {
            for m in primed {
                if feed.send(m).await.is_err() {
                    return;
                }
            }
            loop {
                match sub.recv().await {
                    Ok(m) => {
                        if feed.send(m).await.is_err() {
                            return;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => return,
                }
            }
        });
        (tx, rx, forward)
    }

    /// Handles one inbound message and returns the reply, if any.
    fn handle(&self, id: ClientId, msg: Result<Message, ProtocolError>) -> Option<Message> {
        let msg = match msg {
            Ok(m) => m,
            Err(e) => return Some(Message::error(e.to_string())),
        };
        match msg {
            Message::Hello {
                role: Role::Operator, ..
            } => {
                let mut op = self.operator.lock().unwrap();
                match *op {
                    Some(holder) if holder != id => {
                        Some(Message::error("operator role already held; connected as observer"))
                    }
                    _ => {
                        *op = Some(id);
                        Some(hello(Role::Operator))
                    }
                }
            }
            Message::Hello {
                role: Role::Observer, ..
            } => {
                self.leave(id);
                Some(hello(Role::Observer))
            }
            Message::Button { button, edge } => {
                if *self.operator.lock().unwrap() != Some(id) {
                    return Some(Message::error("button rejected: operator role not held"));
                }
                match self.buttons.lock().unwrap().send((button, edge)) {
                    Ok(()) => None,
                    Err(_) => Some(Message::error("button rejected: session has ended")),
                }
            }
            other => Some(Message::error(format!(
                "{} messages are server-to-client only",
                kind(&other)
            ))),
        }
    }
}

fn hello(role: Role) -> Message {
    Message::Hello {
        role,
        client: SERVER_NAME.into(),
    }
}

fn kind(msg: &Message) -> &'static str {
    match msg {
        Message::Hello { .. } => "hello",
        Message::Snapshot(_) => "snapshot",
        Message::Button { .. } => "button",
        Message::ConfirmAck { .. } => "confirm_ack",
        Message::Metrics(_) => "metrics",
        Message::Error { .. } => "error",
    }
}

struct Pacing {
    speed: f64,
    snapshot_period: f64,
    fence: bool,
}

/// Steps the session against the wall clock until the scenario finishes.
fn drive(mut session: Session, hub: &Hub, buttons: std_mpsc::Receiver<(Button, Edge)>, pacing: Pacing) {
    let tick = Duration::from_secs_f64(session.config().dt() / pacing.speed);
    let mut next_snapshot = 0.0;
    hub.publish(Message::Snapshot(session.snapshot(pacing.fence)));
    let mut deadline = Instant::now();
    loop {
        while let Ok((button, edge)) = buttons.try_recv() {
            session.queue_button(ButtonEvent {
                button,
                edge,
                time: session.time(),
            });
        }
        let finished = match session.step() {
            Ok(f) => f,
            Err(e) => {
                hub.publish(Message::error(format!("session stopped: {e}")));
                return;
            }
        };
        for confirmed in session.take_confirm_acks() {
            hub.publish(Message::ConfirmAck { confirmed });
        }
        if finished || session.time() >= next_snapshot {
            hub.publish(Message::Snapshot(session.snapshot(pacing.fence)));
            next_snapshot += pacing.snapshot_period;
        }
        if finished {
            if let Some(m) = session.metrics() {
                hub.publish(Message::Metrics(m));
            }
            return;
        }
        deadline += tick;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else {
            deadline = now;
        }
    }
}

async fn framed_client(hub: Arc<Hub>, stream: TcpStream) {
    let id = hub.register();
    let (mut rd, mut wr) = stream.into_split();
    let (tx, mut rx, forward) = hub.client_queue();
    let writer = tokio::spawn(async move {
        while let Some(m) = rx.recv().await {
            if wr.write_all(&m.encode()).await.is_err() {
                break;
            }
        }
    });
    loop {
        let mut prefix = [0u8; 4];
        if rd.read_exact(&mut prefix).await.is_err() {
            break;
        }
        let len = match frame_len(prefix) {
            Ok(len) => len,
            Err(e) => {
                // the stream cannot be resynchronized after a bad length
                let _ = tx.send(Message::error(e.to_string())).await;
                break;
            }
        };
        let mut payload = vec![0u8; len];
        if rd.read_exact(&mut payload).await.is_err() {
            break;
        }
        if let Some(reply) = hub.handle(id, decode_payload(&payload)) {
            if tx.send(reply).await.is_err() {
                break;
            }
        }
    }
    hub.leave(id);
    forward.abort();
    drop(tx);
    let _ = writer.await;
}

async fn ws_upgrade(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| ws_client(hub, socket))
}

async fn ws_client(hub: Arc<Hub>, mut socket: WebSocket) {
    let id = hub.register();
    let (_tx, mut rx, forward) = hub.client_queue();
    loop {
        let inbound = tokio::select! {
            out = rx.recv() => {
                match out {
                    Some(m) if socket.send(WsMessage::Text(m.to_json().into())).await.is_ok() => continue,
                    _ => break,
                }
            }
            inbound = socket.recv() => inbound,
        };
        let parsed = match inbound {
            Some(Ok(WsMessage::Text(text))) => Message::from_json(text.as_str()),
            Some(Ok(WsMessage::Binary(bytes))) => decode_payload(&bytes),
            Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => break,
            Some(Ok(_)) => continue,
        };
        if let Some(reply) = hub.handle(id, parsed) {
            if socket.send(WsMessage::Text(reply.to_json().into())).await.is_err() {
                break;
            }
        }
    }
    hub.leave(id);
    forward.abort();
}

/// Hands HTTP connections sorted out by the accept loop to axum.
struct HttpConnections {
    rx: mpsc::Receiver<(TcpStream, SocketAddr)>,
    addr: SocketAddr,
}

impl axum::serve::Listener for HttpConnections {
    type Io = TcpStream;
    type Addr = SocketAddr;

    async fn accept(&mut self) -> (Self::Io, Self::Addr) {
        match self.rx.recv().await {
            Some(conn) => conn,
            None => std::future::pending().await,
        }
    }

    fn local_addr(&self) -> io::Result<Self::Addr> {
        Ok(self.addr)
    }
}

async fn accept_loop(listener: TcpListener, hub: Arc<Hub>, http: mpsc::Sender<(TcpStream, SocketAddr)>) {
    loop {
        let Ok((stream, peer)) = listener.accept().await else {
            continue;
        };
        let hub = hub.clone();
        let http = http.clone();
        tokio::spawn(async move {
            // HTTP clients speak first; a framed client may just listen
            let mut first = [0u8; 1];
            match tokio::time::timeout(SNIFF_TIMEOUT, stream.peek(&mut first)).await {
                Ok(Ok(1)) if first[0] == b'G' => {
                    let _ = http.send((stream, peer)).await;
                }
                Ok(Ok(0) | Err(_)) => {}
                _ => framed_client(hub, stream).await,
            }
        });
    }
}

pub fn serve(args: ServeArgs) -> Result<()> {
    ensure!(args.speed > 0.0, "--speed must be positive");
    ensure!(args.snapshot_rate > 0.0, "--snapshot-rate must be positive");
    let scenario = load_scenario(&args.scenario)?;
    let config = load_config(args.config.as_deref())?;
    let options = RunOptions {
        operator_buttons: args.auto_operator,
        ..RunOptions::new(args.mode, args.seed)
    };
    let session = Session::new(scenario, config, options)?;

    let (button_tx, button_rx) = std_mpsc::channel();
    let (outbound, _) = broadcast::channel(CLIENT_QUEUE);
    let hub = Arc::new(Hub {
        operator: Mutex::new(None),
        next_id: AtomicU64::new(1),
        buttons: Mutex::new(button_tx),
        outbound,
        latest: Mutex::new(Vec::new()),
    });

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = TcpListener::bind((args.bind.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.bind, args.port))?;
        let addr = listener.local_addr()?;
        println!("listening on {addr}");

        let pacing = Pacing {
            speed: args.speed,
            snapshot_period: 1.0 / args.snapshot_rate,
            fence: args.fence,
        };
        let driver_hub = hub.clone();
        thread::spawn(move || drive(session, &driver_hub, button_rx, pacing));

        let (http_tx, http_rx) = mpsc::channel(16);
        tokio::spawn(accept_loop(listener, hub.clone(), http_tx));
        let app = Router::new()
            .route(
                "/",
                get(|| async { "hrc-cell session server; open a WebSocket on /ws\n" }),
            )
            .route("/ws", get(ws_upgrade))
            .with_state(hub);
        axum::serve(HttpConnections { rx: http_rx, addr }, app).await?;
        Ok(())
    })
}
