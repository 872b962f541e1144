//! Live ports against a local stub speaking the chat-completions,
//! moderation and weather wire formats.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::DateTime;
use serde_json::{json, Value};

use sleepcoach::context::{HttpWeatherProvider, UnavailableProvider, WeatherProvider};
use sleepcoach::domain::{Mode, Timestamp, UserId};
use sleepcoach::orchestrator::live::{LiveLlm, LiveModeration};
use sleepcoach::orchestrator::{
    ClassifyRequest, ClassifyTask, LlmPort, MockLlm, MockModeration, ModerationPort, ModerationVerdict, PortError,
    REFUSAL_REPLY,
};
use sleepcoach::service::{Ports, ServiceConfig, UserState};

#[derive(Debug, Clone)]
struct Seen {
    target: String,
    auth: Option<String>,
    body: String,
}

type Handler = Arc<dyn Fn(&Seen) -> (u16, String) + Send + Sync>;

struct Stub {
    base: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn read_request(stream: &TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let target = line.split_whitespace().nth(1)?.to_string();
    let (mut len, mut auth) = (0usize, None);
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (name, value) = h.split_once(':')?;
        match name.to_ascii_lowercase().as_str() {
            "content-length" => len = value.trim().parse().ok()?,
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Seen {
        target,
        auth,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn stub(handler: Handler) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(req) = read_request(&stream) else { continue };
            log.lock().unwrap().push(req.clone());
            let (status, body) = handler(&req);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Stub { base, seen }
}

fn completion(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn system_prompt(req: &Seen) -> String {
    let v: Value = serde_json::from_str(&req.body).unwrap();
    v["messages"][0]["content"].as_str().unwrap_or_default().to_string()
}

fn ts(s: &str) -> Timestamp {
    DateTime::parse_from_rfc3339(s).unwrap()
}

const TIMEOUT: Duration = Duration::from_secs(5);

fn chatty_handler() -> Handler {
    Arc::new(|req: &Seen| {
        if req.target.starts_with("/weather") {
            return (
                200,
                json!({"location": {"name": "Boston", "localtime": "2024-08-14 19:05"},
                       "current": {"temp_c": 3.5, "condition": {"text": "Light snow"}}})
                .to_string(),
            );
        }
        if req.target.starts_with("/moderations") {
            let flagged = req.body.contains("forbidden");
            return (
                200,
                json!({"results": [{"flagged": flagged, "categories": {"harassment": flagged}}]}).to_string(),
            );
        }
        let system = system_prompt(req);
        let answer = if system.contains("Decide which kind of help") {
            "recommendation".to_string()
        } else if system.contains("behavior-change technique") {
            "goal_setting, nonsense".to_string()
        } else if system.contains("Suggest the activity") {
            let arm = system.split('`').nth(1).unwrap_or("?").to_string();
            format!("A short {arm} session indoors would suit this snowy evening.")
        } else {
            format!("COMPOSED[{}]", system.contains("snowy evening"))
        };
        (200, completion(&answer))
    })
}

fn live_ports(base: &str) -> Ports {
    Ports {
        llm: Arc::new(LiveLlm::new(format!("{base}/v1/chat/completions"), "m-test", "test-key", TIMEOUT)),
        moderation: Arc::new(LiveModeration::new(format!("{base}/moderations"), "test-key", TIMEOUT)),
        weather: Arc::new(HttpWeatherProvider::new(format!("{base}/weather"), "wkey", TIMEOUT)),
    }
}

#[test]
fn full_turn_through_live_ports() {
    let stub = stub(chatty_handler());
    let ports = live_ports(&stub.base);
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig::default();
    let mut state = UserState::load(dir.path(), UserId::new("p01"), &cfg).unwrap();
    let turn = state
        .chat("what should I do today?", Mode::HealthGuru, ts("2024-08-14T19:05:00-04:00"), &ports, &cfg)
        .unwrap();
    assert_eq!(turn.text, "COMPOSED[true]");
    assert!(turn.rec_id.is_some());
    assert_eq!(turn.techniques_used.len(), 1);

    let seen = stub.seen.lock().unwrap().clone();
    let weather = seen.iter().find(|s| s.target.starts_with("/weather")).unwrap();
    assert!(weather.target.contains("key=wkey") && weather.target.contains("q=Boston"), "{}", weather.target);
    for s in seen.iter().filter(|s| !s.target.starts_with("/weather")) {
        assert_eq!(s.auth.as_deref(), Some("Bearer test-key"));
    }
    let chat_calls: Vec<Value> = seen
        .iter()
        .filter(|s| s.target.starts_with("/v1/chat"))
        .map(|s| serde_json::from_str(&s.body).unwrap())
        .collect();
    assert!(chat_calls.iter().all(|v| v["model"] == "m-test"));
    // Snowy cold evening reached the bandit context.
    let pending = &state.ledger.pending[0];
    assert_eq!(pending.context_vector.ones(), vec![5, 7, 15]);
}

#[test]
fn flagged_message_gets_refusal() {
    let stub = stub(chatty_handler());
    let ports = live_ports(&stub.base);
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig::default();
    let mut state = UserState::load(dir.path(), UserId::new("p01"), &cfg).unwrap();
    let turn = state
        .chat("something forbidden", Mode::HealthGuru, ts("2024-08-14T19:05:00-04:00"), &ports, &cfg)
        .unwrap();
    assert_eq!(turn.text, REFUSAL_REPLY);
    assert!(turn.rec_id.is_none());
    let moderation = LiveModeration::new(format!("{}/moderations", stub.base), "k", TIMEOUT);
    assert!(matches!(moderation.check("forbidden").unwrap(), ModerationVerdict::Block { .. }));
    assert_eq!(moderation.check("fine").unwrap(), ModerationVerdict::Allow);
}

#[test]
fn unreachable_providers_fall_back_to_offline_behaviour() {
    let dead = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let offline = Ports {
        llm: Arc::new(MockLlm),
        moderation: Arc::new(MockModeration::default()),
        weather: Arc::new(UnavailableProvider),
    };
    let cfg = ServiceConfig::default();
    let script = ["hello", "what should I do today?", "how did I sleep last night?", "I feel stressed at night"];
    let mut texts = Vec::new();
    for ports in [live_ports(&dead), offline] {
        let dir = tempfile::tempdir().unwrap();
        let mut state = UserState::load(dir.path(), UserId::new("p01"), &cfg).unwrap();
        let mut out = Vec::new();
        for (i, m) in script.iter().enumerate() {
            let now = ts("2024-08-14T19:05:00-04:00") + chrono::Duration::minutes(i as i64);
            out.push(state.chat(m, Mode::HealthGuru, now, &ports, &cfg).unwrap());
        }
        texts.push(out);
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn error_kinds_are_distinguished() {
    let request = ClassifyRequest {
        task: ClassifyTask::Route,
        message: "hi",
        history: &[],
        labels: &["direct"],
        max_labels: 1,
    };

    let failing = stub(Arc::new(|_: &Seen| (500, "{}".to_string())));
    let llm = LiveLlm::new(&failing.base, "m", "k", TIMEOUT);
    assert!(matches!(llm.classify(&request), Err(PortError::Transport(_))));

    let garbage = stub(Arc::new(|_: &Seen| (200, "not json".to_string())));
    let llm = LiveLlm::new(&garbage.base, "m", "k", TIMEOUT);
    assert!(matches!(llm.classify(&request), Err(PortError::BadAnswer(_))));

    let off_list = stub(Arc::new(|_: &Seen| (200, completion("banana"))));
    let llm = LiveLlm::new(&off_list.base, "m", "k", TIMEOUT);
    assert!(matches!(llm.classify(&request), Err(PortError::BadAnswer(_))));

    let slow = stub(Arc::new(|_: &Seen| {
        thread::sleep(Duration::from_millis(1500));
        (200, completion("direct"))
    }));
    let llm = LiveLlm::new(&slow.base, "m", "k", Duration::from_millis(200));
    assert_eq!(llm.classify(&request), Err(PortError::Timeout));

    let weather = HttpWeatherProvider::new(&garbage.base, "k", TIMEOUT);
    assert!(weather.current("Boston", ts("2024-08-14T19:05:00-04:00")).is_err());
}
