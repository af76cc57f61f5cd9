//! WebSocket endpoint at `/` and the read-only HTTP mirror at `/api/v1/<cmd>`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::Value;
use skill_core::api::{
    command, parse_cli_args, Api, ApiError, ApiEvent, CallContext, CommandEnvelope, ErrorCode, EventSink,
    ResponseEnvelope, OWNER_TOKEN_HEADER,
};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

/// Capacity of the event fan-out; slow subscribers skip what they missed.
pub const EVENT_BUFFER: usize = 1024;

/// Publishes API events to every subscribed connection.
pub struct BroadcastEvents(pub broadcast::Sender<ApiEvent>);

impl BroadcastEvents {
    pub fn new() -> Self {
        Self(broadcast::channel(EVENT_BUFFER).0)
    }
}

impl Default for BroadcastEvents {
    fn default() -> Self {
        Self::new()
    }
}

impl EventSink for BroadcastEvents {
    fn publish(&self, event: ApiEvent) {
        let _ = self.0.send(event);
    }
}

#[derive(Clone)]
struct Shared {
    api: Arc<Api>,
    events: broadcast::Sender<ApiEvent>,
}

/// A bound, serving endpoint.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    /// Stops accepting and waits up to two seconds for open connections to drain.
    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.task).await.is_err() {
            self.task.abort();
        }
    }
}

pub fn router(api: Arc<Api>, events: broadcast::Sender<ApiEvent>) -> Router {
    Router::new()
        .route("/", get(ws_upgrade))
        .route("/api/v1/{cmd}", get(http_command))
        .with_state(Shared { api, events })
}

/// Binds `bind` and serves until [`ServerHandle::stop`]. A busy port is an error.
pub async fn serve(api: Arc<Api>, events: broadcast::Sender<ApiEvent>, bind: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let app = router(api, events);
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = server.await {
            log::error!("server: {e}");
        }
    });
    log::info!("listening on {addr}");
    Ok(ServerHandle { addr, shutdown: Some(tx), task })
}

async fn run_blocking(api: Arc<Api>, cmd: String, args: Value, ctx: CallContext) -> Result<Value, ApiError> {
    tokio::task::spawn_blocking(move || api.dispatch(&cmd, &args, &ctx))
        .await
        .unwrap_or_else(|e| Err(ApiError::new(ErrorCode::Internal, format!("handler panicked: {e}"))))
}

fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::UnknownCommand | ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::ReadOnlyTransport => StatusCode::METHOD_NOT_ALLOWED,
        ErrorCode::OwnerOnly | ErrorCode::BadToken => StatusCode::FORBIDDEN,
        ErrorCode::Busy | ErrorCode::InvalidState => StatusCode::CONFLICT,
        ErrorCode::Internal | ErrorCode::Embedding => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

async fn http_command(
    State(st): State<Shared>,
    Path(cmd): Path<String>,
    Query(query): Query<Vec<(String, String)>>,
) -> Response {
    let result = match command(&cmd) {
        None => Err(ApiError::new(ErrorCode::UnknownCommand, format!("unknown command `{cmd}`"))),
        Some(spec) => {
            let words: Vec<String> = query
                .into_iter()
                .flat_map(|(k, v)| [format!("--{}", k.replace('_', "-")), v])
                .collect();
            match parse_cli_args(spec, &words) {
                Ok(args) => {
                    let ctx = CallContext { owner_token: None, read_only_transport: true };
                    run_blocking(st.api.clone(), cmd, args, ctx).await
                }
                Err(e) => Err(e),
            }
        }
    };
    let status = match &result {
        Ok(_) => StatusCode::OK,
        Err(e) => status_of(e.code),
    };
    (status, Json(ResponseEnvelope::from_result(Value::Null, result))).into_response()
}

async fn ws_upgrade(State(st): State<Shared>, headers: HeaderMap, ws: WebSocketUpgrade) -> Response {
    let token = headers.get(OWNER_TOKEN_HEADER).and_then(|v| v.to_str().ok()).map(|s| s.trim().to_string());
    ws.on_upgrade(move |socket| connection(socket, st, token))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubscribeArgs {
    events: Option<Vec<String>>,
    #[allow(dead_code)]
    seconds: Option<f64>,
}

fn subscribe_filter(args: &Value) -> Result<Vec<String>, ApiError> {
    let args = if args.is_null() { Value::Object(Default::default()) } else { args.clone() };
    let a: SubscribeArgs =
        serde_json::from_value(args).map_err(|e| ApiError::bad_args(format!("stream-subscribe: {e}")))?;
    let kinds = a.events.unwrap_or_else(|| ApiEvent::KINDS.iter().map(|k| k.to_string()).collect());
    if let Some(bad) = kinds.iter().find(|k| !ApiEvent::KINDS.contains(&k.as_str())) {
        return Err(ApiError::bad_args(format!("stream-subscribe: unknown event type `{bad}`")));
    }
    Ok(kinds)
}

fn encode<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("envelopes serialize")
}

async fn connection(socket: WebSocket, st: Shared, owner_token: Option<String>) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut out_rx) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let ctx = CallContext { owner_token, read_only_transport: false };
    let mut forwarder: Option<JoinHandle<()>> = None;

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        let raw: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                let err = ApiError::new(ErrorCode::BadRequest, format!("invalid JSON: {e}"));
                let _ = out.send(encode(&ResponseEnvelope::from_result(Value::Null, Err(err))));
                continue;
            }
        };
        let id = raw.get("id").cloned().unwrap_or(Value::Null);
        let env: CommandEnvelope = match serde_json::from_value(raw) {
            Ok(env) => env,
            Err(e) => {
                let err = ApiError::new(ErrorCode::BadRequest, format!("envelope: {e}"));
                let _ = out.send(encode(&ResponseEnvelope::from_result(id, Err(err))));
                continue;
            }
        };
        match env.cmd.as_str() {
            "stream-subscribe" => {
                let result = subscribe_filter(&env.args);
                if let Ok(kinds) = &result {
                    let rx = st.events.subscribe();
                    let reply = serde_json::json!({ "subscribed": kinds });
                    let _ = out.send(encode(&ResponseEnvelope::from_result(env.id, Ok(reply))));
                    if let Some(old) = forwarder.take() {
                        old.abort();
                    }
                    forwarder = Some(tokio::spawn(forward(rx, kinds.clone(), out.clone())));
                } else {
                    let _ = out.send(encode(&ResponseEnvelope::from_result(env.id, result.map(|_| Value::Null))));
                }
            }
            "stream-unsubscribe" => {
                let was = forwarder.take().map(|f| f.abort()).is_some();
                let reply = serde_json::json!({ "unsubscribed": was });
                let _ = out.send(encode(&ResponseEnvelope::from_result(env.id, Ok(reply))));
            }
            _ => {
                let result = run_blocking(st.api.clone(), env.cmd, env.args, ctx.clone()).await;
                let _ = out.send(encode(&ResponseEnvelope::from_result(env.id, result)));
            }
        }
    }
    if let Some(f) = forwarder {
        f.abort();
    }
    drop(out);
    let _ = writer.await;
}

async fn forward(mut rx: broadcast::Receiver<ApiEvent>, kinds: Vec<String>, out: mpsc::UnboundedSender<String>) {
    loop {
        match rx.recv().await {
            Ok(ev) => {
                if kinds.iter().any(|k| k == ev.kind()) && out.send(encode(&ev)).is_err() {
                    return;
                }
            }
            Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("subscriber lagged, skipped {n} events"),
            Err(broadcast::error::RecvError::Closed) => return,
        }
    }
}
