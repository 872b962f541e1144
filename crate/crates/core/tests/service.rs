use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::DateTime;
use http_body_util::BodyExt;
use tower::ServiceExt;

use sleepcoach::datastore::UNAVAILABLE_MESSAGE;
use sleepcoach::domain::AgentRoute;
use sleepcoach::service::{decode_stream, router, AppState, Ports, ServiceConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn config(data: &Path) -> ServiceConfig {
    let text = format!(
        r#"
weather = "fixture"
weather_fixture = "{}"

[[users]]
id = "p01"
token = "tok-1"

[[users]]
id = "p02"
token = "tok-2"
mode = "baseline"
"#,
        fixtures().join("weather_sunny.json").display()
    );
    let mut cfg = ServiceConfig::from_toml(&text).unwrap();
    cfg.data_dir = data.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

fn app(data: &Path) -> axum::Router {
    let cfg = config(data);
    let ports = Ports::from_config(&cfg);
    let clock = Arc::new(|| DateTime::parse_from_rfc3339("2024-08-14T15:00:00-04:00").unwrap());
    router(AppState::new(cfg, ports, clock))
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, String) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&body).into_owned())
}

fn chat_req(token: &str, user: &str, message: &str) -> Request<Body> {
    Request::post("/api/chat")
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(Body::from(serde_json::json!({"user_id": user, "message": message}).to_string()))
        .unwrap()
}

fn ingest_req(token: &str, body: String) -> Request<Body> {
    Request::post("/api/ingest")
        .header("authorization", format!("Bearer {token}"))
        .body(Body::from(body))
        .unwrap()
}

fn week() -> String {
    std::fs::read_to_string(fixtures().join("sleep_week.jsonl")).unwrap()
}

#[tokio::test]
async fn chat_streams_text_then_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let svc = app(dir.path());
    let (status, body) = send(&svc, chat_req("tok-1", "p01", "what do you recommend?")).await;
    assert_eq!(status, StatusCode::OK);
    let (text, meta) = decode_stream(&body).unwrap();
    assert!(text.contains("sunny"), "{text}");
    assert_eq!(meta.routes, vec![AgentRoute::Recommendation]);
    assert_eq!(meta.rec_id.as_ref().unwrap().0, "rec-p01-00001");

    // A second service over a fresh directory answers identically.
    let dir2 = tempfile::tempdir().unwrap();
    let (_, body2) = send(&app(dir2.path()), chat_req("tok-1", "p01", "what do you recommend?")).await;
    assert_eq!(body, body2);
}

#[tokio::test]
async fn chat_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    assert_eq!(send(&app, chat_req("nope", "p01", "hi")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, chat_req("tok-2", "p01", "hi")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, chat_req("tok-1", "p01", "   ")).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let garbled = Request::post("/api/chat")
        .header("authorization", "Bearer tok-1")
        .body(Body::from("{\"message\": 3}"))
        .unwrap();
    assert_eq!(send(&app, garbled).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let missing = Request::post("/api/chat").body(Body::from("{}")).unwrap();
    assert_eq!(send(&app, missing).await.0, StatusCode::UNAUTHORIZED);
    assert!(!dir.path().join("users/p01/sessions.log").exists());
}

#[tokio::test]
async fn baseline_user_gets_no_recommendation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = send(&app, chat_req("tok-2", "p02", "what do you recommend?")).await;
    assert_eq!(status, StatusCode::OK);
    let (_, meta) = decode_stream(&body).unwrap();
    assert!(meta.rec_id.is_none());
    assert!(meta.techniques.is_empty());
}

#[tokio::test]
async fn ingest_counts_and_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = send(&app, ingest_req("tok-1", week())).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!((v["sleep"].as_u64(), v["activity"].as_u64(), v["physio"].as_u64()), (Some(7), Some(2), Some(1)));
    assert_eq!(v["rewards_applied"], 0);

    let (status, body) = send(&app, ingest_req("tok-1", "{}\n{\"user_id\": \"p09\", \"stress_level\": 3}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    let lines: Vec<u64> = v["lines"].as_array().unwrap().iter().map(|l| l["line"].as_u64().unwrap()).collect();
    assert_eq!(lines, vec![1, 2]);
}

#[tokio::test]
async fn metrics_query_and_apology() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let get = |uri: &str, token: &str| {
        Request::get(uri)
            .header("authorization", format!("Bearer {token}"))
            .body(Body::empty())
            .unwrap()
    };
    let (status, body) = send(&app, get("/api/metrics/p01", "tok-1")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body, UNAVAILABLE_MESSAGE);

    send(&app, ingest_req("tok-1", week())).await;
    let (status, body) = send(&app, get("/api/metrics/p01?metric=sleep_score&aggregate=max", "tok-1")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["n"], 7);

    let (status, _) = send(
        &app,
        get(
            "/api/metrics/p01?from=2024-08-11&to=2024-08-14&aggregate=compare_periods&compare_from=2024-08-08&compare_to=2024-08-10",
            "tok-1",
        ),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    assert_eq!(send(&app, get("/api/metrics/p01?metric=nope", "tok-1")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(send(&app, get("/api/metrics/p01", "tok-2")).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn adherence_needs_known_recommendation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, body) = send(&app, chat_req("tok-1", "p01", "what do you recommend?")).await;
    let rec = decode_stream(&body).unwrap().1.rec_id.unwrap();
    let post = |rec: &str| {
        Request::post("/api/adherence")
            .header("authorization", "Bearer tok-1")
            .header("content-type", "application/json")
            .body(Body::from(serde_json::json!({"rec_id": rec, "followed": true}).to_string()))
            .unwrap()
    };
    assert_eq!(send(&app, post(&rec.0)).await.0, StatusCode::NO_CONTENT);
    assert_eq!(send(&app, post("rec-p01-99999")).await.0, StatusCode::NOT_FOUND);
    let ledger = std::fs::read_to_string(dir.path().join("users/p01/pending.json")).unwrap();
    assert!(ledger.contains("\"followed\": true"));
}

#[tokio::test]
async fn state_survives_restart_and_reward_lands_once() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path());
        send(&app, chat_req("tok-1", "p01", "what do you recommend?")).await;
    }
    let app = app(dir.path());
    let night = r#"{"user_id": "p01", "day": "2024-08-15", "bedtime_start": "2024-08-14T23:00:00-04:00", "bedtime_end": "2024-08-15T07:00:00-04:00", "total_sleep_duration": 26000, "time_in_bed": 28800, "efficiency": 90, "sleep_score": 82, "readiness_score": 80, "average_hrv": 45.0, "lowest_heart_rate": 52.0, "average_breath": 14.0}"#;
    let (_, body) = send(&app, ingest_req("tok-1", night.into())).await;
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["rewards_applied"], 1);
    assert_eq!(v["updates"][0]["reward"], 0.82);
    assert!(dir.path().join("users/p01/bandit.state").exists());
    let (_, body) = send(&app, ingest_req("tok-1", night.into())).await;
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["rewards_applied"], 0);

    // The session continues after the restart.
    let (_, body) = send(&app, chat_req("tok-1", "p01", "thanks")).await;
    assert!(decode_stream(&body).is_some());
    let log = std::fs::read_to_string(dir.path().join("users/p01/sessions.log")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"event\":\"session\"")).count(), 1);
    assert_eq!(log.lines().filter(|l| l.contains("\"event\":\"turn\"")).count(), 4);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_users_stay_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut tasks = Vec::new();
    for i in 0..10 {
        for (token, user) in [("tok-1", "p01"), ("tok-2", "p02")] {
            let app = app.clone();
            tasks.push(tokio::spawn(async move {
                send(&app, chat_req(token, user, &format!("message {i} how did I sleep?"))).await
            }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    for user in ["p01", "p02"] {
        let log = std::fs::read_to_string(dir.path().join("users").join(user).join("sessions.log")).unwrap();
        assert_eq!(log.lines().count(), 21, "{user}");
        assert!(log.lines().all(|l| !l.contains(if user == "p01" { "p02" } else { "p01" })));
        // Turns are strictly ordered even though they raced.
        let stamps: Vec<String> = log
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter_map(|v| v["turn"]["timestamp"].as_str().map(str::to_string))
            .collect();
        let parsed: Vec<_> = stamps.iter().map(|s| DateTime::parse_from_rfc3339(s).unwrap()).collect();
        assert!(parsed.windows(2).all(|w| w[0] < w[1]));
    }
}

#[tokio::test]
async fn health_is_open() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = send(&app(dir.path()), Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!((status, body.as_str()), (StatusCode::OK, "ok"));
}
