//! Daemon client: mDNS discovery, the WebSocket-then-HTTP probe, and calls.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use skill_core::agent::Endpoint;
use skill_core::api::{ApiError, ApiEvent, ErrorCode, ResponseEnvelope, OWNER_TOKEN_HEADER};
use tokio::net::TcpStream;
use tokio::runtime::Runtime;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::http::HeaderValue;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::mdns;

pub const DISCOVERY_TIMEOUT: Duration = Duration::from_secs(3);
const PROBE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// Nothing answered: no mDNS record, or neither transport connected.
    #[error("{0}")]
    Unreachable(String),
    #[error("connection: {0}")]
    Transport(String),
    #[error("{0}")]
    Api(#[from] ApiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    WebSocket,
    Http,
}

#[derive(Debug, Clone, Default)]
pub struct ConnectOptions {
    /// `host:port`; skips discovery.
    pub addr: Option<String>,
    /// Use HTTP even when WebSocket would work.
    pub force_http: bool,
    pub owner_token: Option<String>,
    /// Defaults to [`DISCOVERY_TIMEOUT`].
    pub discovery_timeout: Option<Duration>,
}

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

enum Conn {
    Ws { ws: Ws, next_id: u64, events: VecDeque<ApiEvent> },
    Http { http: reqwest::Client, base: String },
}

/// A connected client.
pub struct Client {
    conn: Conn,
    pub addr: String,
}

fn transport_err(e: impl std::fmt::Display) -> ClientError {
    ClientError::Transport(e.to_string())
}

async fn open_ws(addr: &str, token: Option<&str>) -> Result<Ws, ClientError> {
    let mut req = format!("ws://{addr}/").into_client_request().map_err(transport_err)?;
    if let Some(t) = token {
        req.headers_mut().insert(OWNER_TOKEN_HEADER, HeaderValue::from_str(t).map_err(transport_err)?);
    }
    let (ws, _) = tokio::time::timeout(PROBE_TIMEOUT, tokio_tungstenite::connect_async(req))
        .await
        .map_err(|_| ClientError::Transport(format!("ws://{addr}: timed out")))?
        .map_err(transport_err)?;
    Ok(ws)
}

/// Turns JSON args into query pairs the server reads back as CLI words.
pub fn query_pairs(args: &Value) -> Vec<(String, String)> {
    let Some(map) = args.as_object() else { return Vec::new() };
    map.iter()
        .map(|(k, v)| {
            let text = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), text)
        })
        .collect()
}

impl Client {
    pub async fn websocket(addr: &str, owner_token: Option<&str>) -> Result<Self, ClientError> {
        let ws = open_ws(addr, owner_token).await?;
        Ok(Self { conn: Conn::Ws { ws, next_id: 1, events: VecDeque::new() }, addr: addr.to_string() })
    }

    /// An HTTP client, checked with a `status` request.
    pub async fn http(addr: &str) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder().timeout(Duration::from_secs(30)).build().map_err(transport_err)?;
        let mut c = Self { conn: Conn::Http { http, base: format!("http://{addr}/api/v1") }, addr: addr.to_string() };
        tokio::time::timeout(PROBE_TIMEOUT, c.call("status", &json!({})))
            .await
            .map_err(|_| ClientError::Transport(format!("http://{addr}: timed out")))??;
        Ok(c)
    }

    pub fn transport(&self) -> TransportKind {
        match self.conn {
            Conn::Ws { .. } => TransportKind::WebSocket,
            Conn::Http { .. } => TransportKind::Http,
        }
    }

    /// `WebSocket ws://addr` or `HTTP http://addr`.
    pub fn describe(&self) -> String {
        match self.transport() {
            TransportKind::WebSocket => format!("WebSocket ws://{}", self.addr),
            TransportKind::Http => format!("HTTP http://{}", self.addr),
        }
    }

    /// Sends one command and waits for its response; events that arrive
    /// meanwhile are queued for [`Client::next_event`].
    pub async fn call(&mut self, cmd: &str, args: &Value) -> Result<Value, ClientError> {
        let env = self.request(cmd, args).await?;
        match (env.ok, env.data, env.error) {
            (true, data, _) => Ok(data.unwrap_or(Value::Null)),
            (false, _, Some(body)) => Err(ApiError::from_body(&body).into()),
            (false, _, None) => Err(ApiError::new(ErrorCode::Internal, "error response without a body").into()),
        }
    }

    /// The raw response envelope.
    pub async fn request(&mut self, cmd: &str, args: &Value) -> Result<ResponseEnvelope, ClientError> {
        match &mut self.conn {
            Conn::Ws { ws, next_id, events } => {
                let id = *next_id;
                *next_id += 1;
                let msg = json!({ "id": id, "cmd": cmd, "args": args });
                ws.send(Message::Text(msg.to_string().into())).await.map_err(transport_err)?;
                loop {
                    let v = read_json(ws).await?;
                    if v.get("ok").is_some() {
                        let env: ResponseEnvelope = serde_json::from_value(v).map_err(transport_err)?;
                        if env.id == json!(id) {
                            return Ok(env);
                        }
                        log::warn!("dropping response for unexpected id {}", env.id);
                    } else if let Ok(ev) = serde_json::from_value::<ApiEvent>(v) {
                        events.push_back(ev);
                    }
                }
            }
            Conn::Http { http, base } => {
                let resp = http
                    .get(format!("{base}/{cmd}"))
                    .query(&query_pairs(args))
                    .send()
                    .await
                    .map_err(transport_err)?;
                resp.json::<ResponseEnvelope>().await.map_err(transport_err)
            }
        }
    }

    /// The next streamed event, or `None` after `timeout`.
    pub async fn next_event(&mut self, timeout: Duration) -> Result<Option<ApiEvent>, ClientError> {
        let Conn::Ws { ws, events, .. } = &mut self.conn else {
            return Err(ApiError::new(ErrorCode::ReadOnlyTransport, "events need a WebSocket connection").into());
        };
        if let Some(ev) = events.pop_front() {
            return Ok(Some(ev));
        }
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let v = match tokio::time::timeout_at(deadline, read_json(ws)).await {
                Err(_) => return Ok(None),
                Ok(v) => v?,
            };
            if v.get("ok").is_none() {
                if let Ok(ev) = serde_json::from_value(v) {
                    return Ok(Some(ev));
                }
            }
        }
    }

    pub async fn close(self) {
        if let Conn::Ws { mut ws, .. } = self.conn {
            let _ = ws.close(None).await;
        }
    }
}

async fn read_json(ws: &mut Ws) -> Result<Value, ClientError> {
    loop {
        let msg = ws.next().await.ok_or_else(|| ClientError::Transport("connection closed".into()))?;
        match msg.map_err(transport_err)? {
            Message::Text(t) => return serde_json::from_str(&t).map_err(transport_err),
            Message::Binary(b) => return serde_json::from_slice(&b).map_err(transport_err),
            Message::Close(_) => return Err(ClientError::Transport("connection closed".into())),
            _ => {}
        }
    }
}

/// Connects, reporting progress through `say` one line at a time.
///
/// With an explicit address only the transport line is reported; otherwise
/// discovery and the probe are narrated first.
pub async fn connect(opts: &ConnectOptions, say: &mut dyn FnMut(&str)) -> Result<Client, ClientError> {
    let token = opts.owner_token.as_deref();
    if let Some(addr) = &opts.addr {
        let client = if opts.force_http { Client::http(addr).await? } else { Client::websocket(addr, token).await? };
        say(&format!("transport: {}", client.describe()));
        return Ok(client);
    }
    say("discovering Skill via mDNS...");
    let timeout = opts.discovery_timeout.unwrap_or(DISCOVERY_TIMEOUT);
    let found = tokio::task::spawn_blocking(move || mdns::discover(timeout))
        .await
        .map_err(transport_err)?
        .map_err(|e| ClientError::Unreachable(format!("{e}; pass --addr HOST:PORT")))?
        .ok_or_else(|| {
            ClientError::Unreachable("no daemon found via mDNS; start skilld or pass --addr HOST:PORT".into())
        })?;
    say(&format!("found: {} @ {}:{}", found.instance, found.host, found.port));
    let addr = SocketAddr::new(found.addr, found.port).to_string();
    if !opts.force_http {
        say("auto-transport: probing WebSocket...");
        match Client::websocket(&addr, token).await {
            Ok(c) => {
                say(&format!("transport: {}", c.describe()));
                return Ok(c);
            }
            Err(e) => log::info!("WebSocket probe failed: {e}"),
        }
    }
    let c = Client::http(&addr).await.map_err(|e| ClientError::Unreachable(format!("{addr}: {e}")))?;
    say(&format!("transport: {}", c.describe()));
    Ok(c)
}

/// A client with its own runtime, for synchronous callers such as the check-in loop.
pub struct BlockingClient {
    rt: Runtime,
    inner: tokio::sync::Mutex<Client>,
}

impl BlockingClient {
    pub fn connect(opts: &ConnectOptions, say: &mut dyn FnMut(&str)) -> Result<Self, ClientError> {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(transport_err)?;
        let client = rt.block_on(connect(opts, say))?;
        Ok(Self { rt, inner: tokio::sync::Mutex::new(client) })
    }

    pub fn call(&self, cmd: &str, args: &Value) -> Result<Value, ClientError> {
        self.rt.block_on(async { self.inner.lock().await.call(cmd, args).await })
    }

    pub fn request(&self, cmd: &str, args: &Value) -> Result<ResponseEnvelope, ClientError> {
        self.rt.block_on(async { self.inner.lock().await.request(cmd, args).await })
    }

    pub fn next_event(&self, timeout: Duration) -> Result<Option<ApiEvent>, ClientError> {
        self.rt.block_on(async { self.inner.lock().await.next_event(timeout).await })
    }

    pub fn transport(&self) -> TransportKind {
        self.inner.blocking_lock().transport()
    }

    pub fn close(self) {
        let client = self.inner.into_inner();
        self.rt.block_on(client.close());
    }
}

impl Endpoint for BlockingClient {
    fn call(&self, cmd: &str, args: &Value) -> Result<Value, ApiError> {
        BlockingClient::call(self, cmd, args).map_err(|e| match e {
            ClientError::Api(e) => e,
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        })
    }
}
