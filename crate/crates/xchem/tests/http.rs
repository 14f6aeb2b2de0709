mod support;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use support::http::serve;
use xchem::chat::HttpChat;
use xchem::embed::{EmbedError, Embedder, EmbeddingService, HttpEmbedder};
use xchem_core::dialogue::{BackendError, ChatBackend, ChatMessage};

fn vectors_for(body: &str, dim: usize) -> String {
    let req: Value = serde_json::from_str(body).unwrap();
    let n = req["input"].as_array().unwrap().len();
    let vectors: Vec<Vec<f32>> = (0..n).map(|i| vec![i as f32 * 0.5; dim]).collect();
    json!({ "vectors": vectors }).to_string()
}

#[test]
fn embedding_request_and_response_shape() {
    let server = serve(|body| (200, vectors_for(body, 768)));
    let e = HttpEmbedder::new(&server.url, "clip-test", Duration::from_secs(5), 0).unwrap();
    let out = e.embed(&["XLogP: 1.2".to_string(), "PSA: 20.2 Å²".to_string()]).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1][0], 0.5);
    let req: Value = serde_json::from_str(&server.bodies()[0]).unwrap();
    assert_eq!(req["model"], "clip-test");
    assert_eq!(req["input"], json!(["XLogP: 1.2", "PSA: 20.2 Å²"]));
}

#[test]
fn embedding_retries_server_errors() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let server = serve(move |body| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, "busy".into())
        } else {
            (200, vectors_for(body, 768))
        }
    });
    let e = HttpEmbedder::new(&server.url, "m", Duration::from_secs(5), 2).unwrap();
    assert_eq!(e.embed(&["Formula: CH4O".to_string()]).unwrap().len(), 1);
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[test]
fn embedding_client_errors_are_not_retried() {
    let server = serve(|_| (404, "{}".into()));
    let e = HttpEmbedder::new(&server.url, "m", Duration::from_secs(5), 3).unwrap();
    assert!(matches!(e.embed(&["x".to_string()]), Err(EmbedError::Config(_))));
    assert_eq!(server.bodies().len(), 1);
}

#[test]
fn wrong_dimension_from_server_is_rejected() {
    let server = serve(|body| (200, vectors_for(body, 512)));
    let dir = tempfile::tempdir().unwrap();
    let e = HttpEmbedder::new(&server.url, "m", Duration::from_secs(5), 0).unwrap();
    let svc = EmbeddingService::new(Box::new(e), dir.path());
    let err = svc.embed_text("Rotatable Bonds: 2").unwrap_err();
    assert!(matches!(err.downcast_ref::<EmbedError>(), Some(EmbedError::Dimension { got: 512, expected: 768 })));
}

#[test]
fn unreachable_embedding_backend_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let e = HttpEmbedder::new(format!("http://127.0.0.1:{port}/"), "m", Duration::from_secs(2), 1).unwrap();
    assert!(matches!(e.embed(&["x".to_string()]), Err(EmbedError::Transport(_))));
}

#[test]
fn chat_request_and_response_shape() {
    let server = serve(|_| (200, json!({ "message": { "role": "assistant", "content": "{\"validated\": true}" } }).to_string()));
    let mut chat = HttpChat::new(&server.url, "llama-test", 0.0, Duration::from_secs(5), 0).unwrap();
    let reply = chat.chat(&[ChatMessage::system("rules"), ChatMessage::user("check this")]).unwrap();
    assert_eq!(reply, "{\"validated\": true}");
    let req: Value = serde_json::from_str(&server.bodies()[0]).unwrap();
    assert_eq!(req["model"], "llama-test");
    assert_eq!(req["temperature"], 0.0);
    assert_eq!(req["messages"][0], json!({ "role": "system", "content": "rules" }));
    assert_eq!(req["messages"][1]["role"], "user");
}

#[test]
fn chat_retries_then_gives_up() {
    let server = serve(|_| (500, "down".into()));
    let mut chat = HttpChat::new(&server.url, "m", 0.0, Duration::from_secs(5), 2).unwrap();
    assert!(matches!(chat.chat(&[ChatMessage::user("hi")]), Err(BackendError::Transport(_))));
    assert_eq!(server.bodies().len(), 3);

    let server = serve(|_| (400, "bad".into()));
    let mut chat = HttpChat::new(&server.url, "m", 0.0, Duration::from_secs(5), 2).unwrap();
    assert!(matches!(chat.chat(&[ChatMessage::user("hi")]), Err(BackendError::Config(_))));
    assert_eq!(server.bodies().len(), 1);
}
