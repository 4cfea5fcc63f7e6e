use std::sync::Arc;
use std::time::Duration;

use erpchat_core::agent::AgentLimits;
use erpchat_core::fixture;
use erpchat_core::llm::{Gateway, Role, RoleTable, ScriptedBackend, ScriptedReply};
use erpchat_core::orchestrator::Assistant;
use erpchat_core::prompts::PromptSet;
use erpchat_core::sandbox::{Sandbox, SandboxConfig};
use erpchat_core::schema::IntrospectOptions;
use erpchat_core::service::{router, ChatService, SessionStore};
use serde_json::{json, Value};

const PROCEED: &str = "```json\n{\"decision\": \"proceed\", \"normalized_intent\": \"count parts\", \"reason\": \"clear\"}\n```";
const APPROVE: &str = "```json\n{\"decision\": \"approved\", \"issues\": []}\n```";

async fn start(backend: ScriptedBackend, dir: &std::path::Path) -> String {
    let db = fixture::database().unwrap();
    let schema = Arc::new(fixture::schema_document(&db, &IntrospectOptions::default()).unwrap());
    let assistant = Assistant::new(
        Gateway::new(Arc::new(backend), RoleTable::default()),
        Arc::new(PromptSet::builtin()),
        schema,
        Sandbox::new(db, SandboxConfig::default()),
        AgentLimits::default(),
    )
    .unwrap();
    let service = ChatService::new(Arc::new(assistant), SessionStore::open(dir).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(service, None)).await.unwrap() });
    format!("http://{addr}")
}

fn happy() -> ScriptedBackend {
    ScriptedBackend::new()
        .with_script(Role::Dialogue, [ScriptedReply::stall(Duration::from_millis(150), PROCEED), "There are 40 parts.".into()])
        .with_script(Role::Reasoner, ["```sql\nSELECT COUNT(*) AS parts FROM T_A\n```"])
        .with_script(Role::Critic, [APPROVE])
}

#[derive(Debug, Default)]
struct Frame {
    id: Option<String>,
    event: String,
    data: String,
}

/// Reads SSE frames until one named `until` arrives.
async fn read_frames(mut response: reqwest::Response, until: &str) -> Vec<Frame> {
    let mut buffer = String::new();
    let mut frames = Vec::new();
    loop {
        let chunk = tokio::time::timeout(Duration::from_secs(10), response.chunk()).await.unwrap().unwrap().unwrap();
        buffer.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buffer.find("\n\n") {
            let raw: String = buffer.drain(..end + 2).collect();
            let mut frame = Frame::default();
            for line in raw.lines() {
                if let Some(v) = line.strip_prefix("id: ") {
                    frame.id = Some(v.into());
                } else if let Some(v) = line.strip_prefix("event: ") {
                    frame.event = v.into();
                } else if let Some(v) = line.strip_prefix("data: ") {
                    frame.data.push_str(v);
                }
            }
            if frame.event.is_empty() {
                continue;
            }
            let done = frame.event == until;
            frames.push(frame);
            if done {
                return frames;
            }
        }
    }
}

#[tokio::test]
async fn live_stream_matches_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(happy(), dir.path()).await;
    let http = reqwest::Client::new();

    let created = http.post(format!("{base}/sessions")).send().await.unwrap();
    assert_eq!(created.status(), 201);
    let id = created.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_string();

    let stream = http.get(format!("{base}/sessions/{id}/events")).send().await.unwrap();
    assert_eq!(stream.status(), 200);
    assert!(stream.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));

    let posted = http.post(format!("{base}/sessions/{id}/messages")).json(&json!({"text": "how many parts"})).send().await.unwrap();
    assert_eq!(posted.status(), 202);
    assert_eq!(posted.json::<Value>().await.unwrap(), json!({"turn": 0, "first_seq": 0}));

    let busy = http.post(format!("{base}/sessions/{id}/messages")).json(&json!({"text": "again"})).send().await.unwrap();
    assert_eq!(busy.status(), 409);

    let frames = read_frames(stream, "turn_completed").await;
    let names: Vec<&str> = frames.iter().map(|f| f.event.as_str()).collect();
    assert_eq!(
        names,
        ["intent_assessed", "sql_attempt", "execution_result", "critique", "final_sql", "answer", "turn_completed"]
    );

    let transcript: Value = http.get(format!("{base}/sessions/{id}")).send().await.unwrap().json().await.unwrap();
    let persisted = transcript["events"].as_array().unwrap();
    assert_eq!(persisted.len(), 6);
    for (frame, event) in frames.iter().zip(persisted) {
        assert_eq!(frame.id.as_deref(), Some(event["seq"].to_string().as_str()));
        assert_eq!(&serde_json::from_str::<Value>(&frame.data).unwrap(), event);
    }
    let completed: Value = serde_json::from_str(&frames[6].data).unwrap();
    assert_eq!(completed["reply"], transcript["state"]["turns"][0]["reply"]);

    // reconnecting with the last seen id replays only what came after it
    let resumed = http.get(format!("{base}/sessions/{id}/events")).header("Last-Event-ID", "3").send().await.unwrap();
    let tail = read_frames(resumed, "turn_completed").await;
    let ids: Vec<Option<&str>> = tail.iter().map(|f| f.id.as_deref()).collect();
    assert_eq!(ids, [Some("4"), Some("5"), None]);
}

#[tokio::test]
async fn wait_returns_report_and_listing_shows_title() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(happy(), dir.path()).await;
    let http = reqwest::Client::new();
    let id = http.post(format!("{base}/sessions")).send().await.unwrap().json::<Value>().await.unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let report: Value = http
        .post(format!("{base}/sessions/{id}/messages?wait=true"))
        .json(&json!({"text": "how many parts"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(report["status"], "answered");
    assert_eq!(report["final_sql"], "SELECT COUNT(*) AS parts FROM T_A");
    let listing: Value = http.get(format!("{base}/sessions")).send().await.unwrap().json().await.unwrap();
    assert_eq!(listing[0]["title"], "how many parts");
    assert_eq!(listing[0]["turns"], 1);
}

#[tokio::test]
async fn errors_schema_and_health() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(ScriptedBackend::new(), dir.path()).await;
    let http = reqwest::Client::new();
    assert_eq!(http.get(format!("{base}/sessions/missing")).send().await.unwrap().status(), 404);
    assert_eq!(http.get(format!("{base}/sessions/missing/events")).send().await.unwrap().status(), 404);
    let posted = http.post(format!("{base}/sessions/missing/messages")).json(&json!({"text": "x"})).send().await.unwrap();
    assert_eq!(posted.status(), 404);
    assert!(posted.json::<Value>().await.unwrap()["error"].as_str().unwrap().contains("missing"));

    let health: Value = http.get(format!("{base}/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    let schema = http.get(format!("{base}/schema")).send().await.unwrap();
    assert!(schema.headers()["content-type"].to_str().unwrap().starts_with("text/markdown"));
    let text = schema.text().await.unwrap();
    assert!(text.contains("T_D") && text.contains("PathID"));

    let id = http.post(format!("{base}/sessions")).send().await.unwrap().json::<Value>().await.unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let empty = http.post(format!("{base}/sessions/{id}/messages")).json(&json!({"text": " "})).send().await.unwrap();
    assert_eq!(empty.status(), 422);
    let fresh: Value = http.get(format!("{base}/sessions/{id}")).send().await.unwrap().json().await.unwrap();
    assert_eq!(fresh["state"]["turns"], json!([]));
}
