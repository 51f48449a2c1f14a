//! A local chat-completions server that replays fixture replies in order.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::error::{Error, Result};
use crate::teacher::{FaultKind, Fixtures};

/// Delay used by a `timeout` fault without an explicit `delay_ms`.
pub const DEFAULT_TIMEOUT_DELAY_MS: u64 = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StubRequest {
    pub path: String,
    pub authorization: Option<String>,
    /// Parsed request body; `Value::Null` when it was not JSON.
    pub body: Value,
    pub status: u16,
}

impl StubRequest {
    /// Contents of the request's messages, in order.
    pub fn message_contents(&self) -> Vec<String> {
        self.body["messages"]
            .as_array()
            .map(|m| {
                m.iter()
                    .filter_map(|msg| msg["content"].as_str().map(str::to_string))
                    .collect()
            })
            .unwrap_or_default()
    }
}

struct State {
    fixtures: Fixtures,
    cursor: usize,
    /// Remaining failures per 0-based reply index.
    faults: HashMap<usize, (FaultKind, u32, Option<u64>)>,
    log: Vec<StubRequest>,
}

pub struct StubServer {
    server: Arc<Server>,
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for StubServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubServer").field("addr", &self.addr).finish()
    }
}

impl StubServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and serves on a background thread.
    pub fn start(fixtures: Fixtures, port: u16) -> Result<Self> {
        let server = Server::http(("127.0.0.1", port))
            .map_err(|e| Error::Io(std::io::Error::other(format!("stub server: {e}"))))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Io(std::io::Error::other("stub server has no IP address")))?;
        let faults = fixtures
            .manifest
            .faults
            .iter()
            .map(|f| (f.call - 1, (f.fault, f.times, f.delay_ms)))
            .collect();
        let state = Arc::new(Mutex::new(State {
            fixtures,
            cursor: 0,
            faults,
            log: Vec::new(),
        }));
        let server = Arc::new(server);
        let worker = {
            let server = server.clone();
            let state = state.clone();
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&state, request);
                }
            })
        };
        Ok(Self {
            server,
            addr,
            state,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to use as the teacher endpoint.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.state.lock().expect("stub state").log.clone()
    }

    /// Replies served so far.
    pub fn served(&self) -> usize {
        self.state.lock().expect("stub state").cursor
    }

    /// Blocks until the server thread stops (it never does unless unblocked).
    pub fn wait(mut self) {
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn error_body(message: &str) -> String {
    json!({"error": {"message": message}}).to_string()
}

fn handle(state: &Mutex<State>, mut request: Request) {
    let path = request.url().to_string();
    let authorization = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str().to_string());
    let mut raw = String::new();
    let body = match request.as_reader().read_to_string(&mut raw) {
        Ok(_) => serde_json::from_str(&raw).unwrap_or(Value::Null),
        Err(_) => Value::Null,
    };

    let mut delay = None;
    let (status, payload) = {
        let mut st = state.lock().expect("stub state");
        let (status, payload) = respond(&mut st, &request, &path, authorization.as_deref(), &body, &mut delay);
        st.log.push(StubRequest {
            path,
            authorization,
            body,
            status,
        });
        (status, payload)
    };
    if let Some(ms) = delay {
        std::thread::sleep(Duration::from_millis(ms));
    }
    // The client may have given up already; nothing to do then.
    let _ = request.respond(json_response(status, payload));
}

fn respond(
    st: &mut State,
    request: &Request,
    path: &str,
    authorization: Option<&str>,
    body: &Value,
    delay: &mut Option<u64>,
) -> (u16, String) {
    if request.method() != &Method::Post || !path.ends_with("/chat/completions") {
        return (404, error_body(&format!("no route for {} {path}", request.method())));
    }
    if let Some(key) = &st.fixtures.manifest.api_key {
        if authorization != Some(format!("Bearer {key}").as_str()) {
            return (401, error_body("invalid API key"));
        }
    }
    if !body["messages"].is_array() {
        return (400, error_body("request body needs a messages array"));
    }
    let index = st.cursor;
    if index >= st.fixtures.len() {
        return (
            409,
            error_body(&format!("fixtures exhausted: all {} replies already served", st.fixtures.len())),
        );
    }
    if let Some((fault, remaining, delay_ms)) = st.faults.get_mut(&index) {
        if *remaining > 0 {
            *remaining -= 1;
            return match fault {
                FaultKind::Http500 => (500, error_body("injected server error")),
                FaultKind::Unauthorized => (401, error_body("injected auth failure")),
                FaultKind::MalformedJson => (200, "{\"choices\": [".to_string()),
                FaultKind::Timeout => {
                    *delay = Some(delay_ms.unwrap_or(DEFAULT_TIMEOUT_DELAY_MS));
                    (504, error_body("injected timeout"))
                }
            };
        }
    }
    st.cursor += 1;
    let reply = st.fixtures.reply(index);
    let mut out = json!({
        "id": format!("stub-{}", index + 1),
        "object": "chat.completion",
        "model": body["model"].clone(),
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": reply.content},
            "finish_reason": "stop"
        }]
    });
    if let Some(usage) = reply.usage {
        out["usage"] = json!({
            "prompt_tokens": usage.prompt_tokens,
            "completion_tokens": usage.completion_tokens,
            "total_tokens": usage.prompt_tokens + usage.completion_tokens
        });
    }
    (200, out.to_string())
}
