mod common;

use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use skill::client::{query_pairs, Client};
use skill::ClientError;
use skill_core::api::{ApiEvent, ErrorCode, OWNER_TOKEN_HEADER};
use tokio_tungstenite::tungstenite::client::IntoClientRequest;
use tokio_tungstenite::tungstenite::Message;

use common::*;

async fn raw_ws(addr: &str) -> tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>> {
    tokio_tungstenite::connect_async(format!("ws://{addr}/")).await.unwrap().0
}

async fn next_json<S>(ws: &mut S) -> Value
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        if let Message::Text(t) = ws.next().await.unwrap().unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[test]
fn status_round_trip_and_error_codes() {
    let td = fixture_daemon();
    let addr = td.addr();
    td.rt.block_on(async {
        let mut ws = raw_ws(&addr).await;
        ws.send(Message::Text(json!({"id": "a", "cmd": "status"}).to_string().into())).await.unwrap();
        let r = next_json(&mut ws).await;
        assert_eq!(r["id"], "a");
        assert_eq!(r["ok"], true);
        for k in ["device", "session", "last_metrics"] {
            assert!(r["data"].get(k).is_some(), "status lacks {k}");
        }

        ws.send(Message::Text(json!({"id": 2, "cmd": "frobnicate"}).to_string().into())).await.unwrap();
        let r = next_json(&mut ws).await;
        assert_eq!((r["id"].clone(), r["ok"].clone()), (json!(2), json!(false)));
        assert_eq!(r["error"]["code"], "unknown-command");

        ws.send(Message::Text("{not json".into())).await.unwrap();
        assert_eq!(next_json(&mut ws).await["error"]["code"], "bad-request");
        ws.send(Message::Text(json!({"id": 3}).to_string().into())).await.unwrap();
        let r = next_json(&mut ws).await;
        assert_eq!((r["id"].clone(), r["error"]["code"].clone()), (json!(3), json!("bad-request")));

        ws.send(Message::Text(json!({"id": 4, "cmd": "delete", "args": {"all": true}}).to_string().into())).await.unwrap();
        assert_eq!(next_json(&mut ws).await["error"]["code"], "owner-only");
    });
}

#[test]
fn concurrent_clients_get_their_own_ids() {
    let td = fixture_daemon();
    let addr = td.addr();
    td.rt.block_on(async {
        let want = {
            let mut c = Client::websocket(&addr, None).await.unwrap();
            c.call("sessions", &json!({})).await.unwrap()
        };
        let tasks: Vec<_> = (0..8)
            .map(|k| {
                let addr = addr.clone();
                tokio::spawn(async move {
                    let mut ws = raw_ws(&addr).await;
                    // Pipeline all requests before reading anything back.
                    let ids: Vec<String> = (0..10).map(|i| format!("c{k}-{i}")).collect();
                    for id in &ids {
                        let m = json!({"id": id, "cmd": "sessions"});
                        ws.send(Message::Text(m.to_string().into())).await.unwrap();
                    }
                    let mut got = Vec::new();
                    for _ in &ids {
                        got.push(next_json(&mut ws).await);
                    }
                    (ids, got)
                })
            })
            .collect();
        for t in tasks {
            let (ids, got) = t.await.unwrap();
            let got_ids: Vec<&str> = got.iter().map(|r| r["id"].as_str().unwrap()).collect();
            assert_eq!(got_ids, ids.iter().map(String::as_str).collect::<Vec<_>>(), "order and ownership of ids");
            for r in &got {
                assert_eq!(r["data"], want);
            }
        }
    });
}

#[test]
fn http_and_websocket_payloads_match() {
    let td = fixture_daemon();
    let addr = td.addr();
    let calls = [
        ("status", json!({})),
        ("sessions", json!({"limit": 3})),
        ("compare", json!({})),
        ("search-labels", json!({"query": "movie", "n": 18})),
        ("labels-list", json!({"limit": 5})),
        ("get-state", json!({"at": 1772450119.0})),
        ("sleep", json!({})),
        ("recipes-list", json!({})),
        ("protocols-list", json!({})),
        ("data-reference", json!({})),
    ];
    td.rt.block_on(async {
        let mut ws = Client::websocket(&addr, None).await.unwrap();
        let mut http = Client::http(&addr).await.unwrap();
        for (cmd, args) in &calls {
            let a = ws.call(cmd, args).await.unwrap_or_else(|e| panic!("ws {cmd}: {e}"));
            let b = http.call(cmd, args).await.unwrap_or_else(|e| panic!("http {cmd}: {e}"));
            assert_eq!(a, b, "{cmd}");
        }
        // Mutations are refused over HTTP with a typed code and status.
        let url = format!("http://{addr}/api/v1/label-add");
        let resp = reqwest::Client::new().get(&url).query(&query_pairs(&json!({"text": "x"}))).send().await.unwrap();
        assert_eq!(resp.status(), reqwest::StatusCode::METHOD_NOT_ALLOWED);
        let body: Value = resp.json().await.unwrap();
        assert_eq!(body["error"]["code"], "read-only-transport");
        match http.call("stream-subscribe", &json!({})).await {
            Err(ClientError::Api(e)) => assert_eq!(e.code, ErrorCode::ReadOnlyTransport),
            other => panic!("{other:?}"),
        }
    });
}

#[test]
fn owner_token_header_allows_delete() {
    let td = fixture_daemon();
    let addr = td.addr();
    let token = td.daemon().api.store().read_owner_token().unwrap();
    td.rt.block_on(async {
        let mut wrong = Client::websocket(&addr, Some("nope")).await.unwrap();
        match wrong.call("delete", &json!({"all": true})).await {
            Err(ClientError::Api(e)) => assert_eq!(e.code, ErrorCode::BadToken),
            other => panic!("{other:?}"),
        }
        let mut req = format!("ws://{addr}/").into_client_request().unwrap();
        req.headers_mut().insert(OWNER_TOKEN_HEADER, token.parse().unwrap());
        assert!(tokio_tungstenite::connect_async(req).await.is_ok());
        let mut owner = Client::websocket(&addr, Some(&token)).await.unwrap();
        owner.call("delete", &json!({"t_start": 1772447823.0, "t_end": 1772450119.0})).await.unwrap();
        let sessions = owner.call("sessions", &json!({})).await.unwrap();
        assert_eq!(sessions["sessions"].as_array().unwrap().len(), 7);
    });
}

#[test]
fn live_stream_emits_metrics_every_second() {
    let td = synthetic_daemon(12.0);
    let addr = td.addr();
    td.rt.block_on(async {
        let mut c = Client::websocket(&addr, None).await.unwrap();
        let r = c.call("stream-subscribe", &json!({"events": ["metrics", "label-added"]})).await.unwrap();
        assert_eq!(r["subscribed"], json!(["metrics", "label-added"]));
        // From the first event on: at least one per second, with no long gaps.
        let first = c.next_event(Duration::from_secs(3)).await.unwrap().expect("a first metrics event");
        assert_eq!(first.kind(), "metrics");
        let start = Instant::now();
        let mut last = start;
        let (mut count, mut max_gap) = (0usize, Duration::ZERO);
        while start.elapsed() < Duration::from_secs(6) {
            if let Some(ev) = c.next_event(Duration::from_millis(200)).await.unwrap() {
                assert!(matches!(ev, ApiEvent::Metrics { .. }), "filtered kinds only: {ev:?}");
                max_gap = max_gap.max(last.elapsed());
                last = Instant::now();
                count += 1;
            }
        }
        max_gap = max_gap.max(last.elapsed());
        assert!(count >= 5, "{count} events in 6 s");
        assert!(max_gap <= Duration::from_millis(1250), "gap {max_gap:?}");
        // A label from another connection reaches this subscriber.
        let mut other = Client::websocket(&addr, None).await.unwrap();
        let label = other.call("label-add", &json!({"text": "streamed"})).await.unwrap();
        let mut seen = false;
        let deadline = Instant::now() + Duration::from_secs(3);
        while !seen && Instant::now() < deadline {
            if let Some(ApiEvent::LabelAdded { label_id, .. }) = c.next_event(Duration::from_millis(500)).await.unwrap() {
                seen = label_id == label["label_id"].as_u64().unwrap();
            }
        }
        assert!(seen, "label-added event");
        let r = c.call("stream-unsubscribe", &json!({})).await.unwrap();
        assert_eq!(r["unsubscribed"], true);
        assert!(c.call("stream-subscribe", &json!({"events": ["bogus"]})).await.is_err());
    });
}

#[test]
fn busy_port_fails_startup() {
    let td = empty_daemon();
    let port = td.daemon().addr.port();
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut cfg = config(dir.path());
    cfg.port = port;
    let err = rt.block_on(skill::Daemon::start(cfg)).err().expect("second bind fails");
    assert!(matches!(err, skill::DaemonError::Bind(..)), "{err}");
}

#[test]
fn config_file_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("skilld.toml");
    std::fs::write(
        &p,
        "store = \"/tmp/s\"\nport = 9000\nmdns = false\ntz = \"Europe/Berlin\"\n\n[source]\nkind = \"replay\"\npath = \"/tmp/r.jsonl\"\n",
    )
    .unwrap();
    let cfg = skill::DaemonConfig::load(&p).unwrap();
    assert_eq!(cfg.port, 9000);
    assert!(!cfg.mdns);
    assert_eq!(cfg.pipeline.embed_every, 4);
    std::fs::write(&p, "prot = 1\n").unwrap();
    assert!(skill::DaemonConfig::load(&p).is_err());
}
