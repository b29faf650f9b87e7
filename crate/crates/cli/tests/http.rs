//! Drives the real server over a TCP socket.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use healthy_choice::{App, ServiceConfig};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

struct Reply {
    status: u16,
    content_type: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

fn send(port: u16, method: &str, target: &str, body: Option<&Value>) -> Reply {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    write!(
        stream,
        "{method} {target} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, rest) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    let content_type = head
        .lines()
        .find_map(|l| {
            l.to_ascii_lowercase()
                .strip_prefix("content-type: ")
                .map(str::to_string)
        })
        .unwrap_or_default();
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    let body = if chunked { dechunk(rest) } else { rest.to_string() };
    Reply {
        status,
        content_type,
        body,
    }
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let size = usize::from_str_radix(size.trim(), 16).unwrap();
        if size == 0 {
            return out;
        }
        out.push_str(&rest[..size]);
        s = &rest[size + 2..];
    }
}

fn start_server(data_dir: &Path) -> (u16, tokio::runtime::Runtime) {
    let config = ServiceConfig::new(data_dir, fixture("catalog.json"), fixture("scenarios.json"));
    let app = Arc::new(App::boot(config).unwrap());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let port = listener.local_addr().unwrap().port();
    runtime.spawn(async move {
        axum::serve(listener, healthy_choice_cli::router(app)).await.unwrap();
    });
    (port, runtime)
}

#[test]
fn scripted_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (port, runtime) = start_server(dir.path());

    let health = send(port, "GET", "/healthz", None);
    assert_eq!(health.status, 200);
    assert!(health.content_type.starts_with("application/json"));
    assert_eq!(health.json()["status"], "ok");

    let created = send(
        port,
        "POST",
        "/api/sessions",
        Some(&json!({"user_ref": "ID001", "scenario_id": "half-marathon-hydration"})),
    );
    assert_eq!(created.status, 201);
    let id = created.json()["id"].as_str().unwrap().to_string();
    let base = format!("/api/sessions/{id}");

    assert_eq!(
        send(
            port,
            "POST",
            &format!("{base}/highlights"),
            Some(&json!({"start": 0, "end": 3}))
        )
        .status,
        200
    );
    let assess = json!({"product_id": "bodyarmor-lyte", "rating": "Highly Appropriate", "decision": "Select"});
    assert_eq!(
        send(port, "POST", &format!("{base}/assessments"), Some(&assess)).status,
        200
    );
    let ask = send(
        port,
        "POST",
        &format!("{base}/ask"),
        Some(&json!({"question": "How much potassium?", "focus_product_id": "bodyarmor-lyte"})),
    );
    assert_eq!(ask.status, 200);
    assert!(ask.json()["answer"].as_str().unwrap().starts_with("STUB["));

    let finalize = send(port, "POST", &format!("{base}/finalize"), None);
    assert_eq!(finalize.status, 409);
    assert_eq!(finalize.json()["code"], "missing_recommendation");

    assert_eq!(
        send(
            port,
            "POST",
            &format!("{base}/recommendation"),
            Some(&json!({"product_id": "bodyarmor-lyte"}))
        )
        .status,
        200
    );
    assert_eq!(
        send(
            port,
            "POST",
            &format!("{base}/justification"),
            Some(&json!({"text": "Most potassium, least sugar."}))
        )
        .status,
        200
    );
    let done = send(port, "POST", &format!("{base}/finalize"), None);
    assert_eq!(done.json()["phase"], "completed");

    let summary = send(port, "GET", &format!("{base}/summary"), None);
    assert_eq!(
        summary.json()["recommendation_product"]["name"],
        "BODYARMOR LYTE Sports Drink Dragonfruit Berry"
    );

    assert_eq!(
        send(
            port,
            "POST",
            "/api/surveys",
            Some(&json!({"participant_ref": "ID001", "usefulness": 9, "ease": 8}))
        )
        .status,
        201
    );
    let csv = send(port, "GET", "/api/admin/export.csv", None);
    assert!(csv.content_type.starts_with("text/csv"));
    assert_eq!(csv.body, "participant_ref,usefulness,ease,feedback\r\nID001,9,8,\r\n");

    assert_eq!(send(port, "GET", "/nope", None).status, 404);
    assert_eq!(send(port, "PUT", "/api/sessions", None).status, 405);
    drop(runtime);

    // A second server on the same data directory sees the finished session.
    let (port, _runtime) = start_server(dir.path());
    let restored = send(port, "GET", &base, None);
    assert_eq!(restored.json()["phase"], "completed");
}
