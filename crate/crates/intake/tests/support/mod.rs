#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use intake::service::BackgroundServer;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub type Reply = Arc<dyn Fn(usize, &Value) -> (u16, Value) + Send + Sync>;

/// Observations made by a [`FakeChat`] server.
#[derive(Default)]
pub struct Seen {
    pub calls: AtomicUsize,
    pub auth: Mutex<Vec<Option<String>>>,
    pub bodies: Mutex<Vec<Value>>,
}

/// Local stand-in for an OpenAI-compatible chat completions endpoint.
pub struct FakeChat {
    pub server: BackgroundServer,
    pub seen: Arc<Seen>,
}

impl FakeChat {
    pub fn start(reply: Reply) -> Self {
        let seen = Arc::new(Seen::default());
        let app = Router::new()
            .route("/v1/chat/completions", post(handle))
            .with_state((reply, seen.clone()));
        FakeChat { server: BackgroundServer::start_router(app).expect("fake server"), seen }
    }

    /// Base URL to put in a provider config.
    pub fn base_url(&self) -> String {
        self.server.url("/v1")
    }

    pub fn calls(&self) -> usize {
        self.seen.calls.load(Ordering::SeqCst)
    }
}

async fn handle(
    State((reply, seen)): State<(Reply, Arc<Seen>)>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = seen.calls.fetch_add(1, Ordering::SeqCst);
    seen.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string));
    seen.bodies.lock().unwrap().push(body.clone());
    let (status, value) = reply(n, &body);
    (StatusCode::from_u16(status).unwrap(), Json(value))
}

pub fn completion(content: &str) -> Value {
    json!({
        "id": "cmpl-1",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
}

/// Replies with the accept grammar unless the prompt mentions `deny_marker`.
pub fn grammar_reply(deny_marker: &'static str) -> Reply {
    Arc::new(move |_, body| {
        let user = body["messages"][1]["content"].as_str().unwrap_or_default();
        if user.contains(deny_marker) {
            (200, completion("STATUS: DOES_NOT_QUALIFY\nEXPLANATION: Outside the listed case types."))
        } else {
            (200, completion("STATUS: QUALIFIES\nEXPLANATION: Matches a listed case type."))
        }
    })
}
