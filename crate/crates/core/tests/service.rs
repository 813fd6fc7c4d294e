use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use gazetype::estimator::{build_model, ModelConfig};
use gazetype::service::{InputMode, Server, ServerHandle, ServiceContext, SessionConfig};
use gazetype::t9::{typing_segments, Layout};
use serde_json::Value;
use tungstenite::Message;

const SENTINEL: &str = r#"{"type":"sentinel"}"#;

fn start(config: SessionConfig) -> ServerHandle {
    let context = ServiceContext::new(config).unwrap();
    Server::bind("127.0.0.1:0", context).unwrap().spawn()
}

fn gaze_lines(text: &str) -> Vec<String> {
    typing_segments(&Layout::default(), text, 20, 12)
        .unwrap()
        .iter()
        .flat_map(|seg| vec![format!(r#"{{"type":"gaze_state","state":{}}}"#, seg.state.code()); seg.frames])
        .collect()
}

/// Sends `lines` plus a sentinel and collects replies up to the sentinel's
/// error.
fn exchange(stream: &TcpStream, lines: &[String]) -> Vec<Value> {
    let mut writer = stream.try_clone().unwrap();
    let mut payload = lines.join("\n");
    payload.push('\n');
    payload.push_str(SENTINEL);
    payload.push('\n');
    writer.write_all(payload.as_bytes()).unwrap();
    let mut replies = Vec::new();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    loop {
        let mut line = String::new();
        assert!(reader.read_line(&mut line).unwrap() > 0, "connection closed early");
        let v: Value = serde_json::from_str(&line).unwrap();
        let done = v["type"] == "error" && v["code"] == "unknown_type";
        replies.push(v);
        if done {
            return replies;
        }
    }
}

fn connect(handle: &ServerHandle) -> TcpStream {
    let s = TcpStream::connect(handle.addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    s
}

fn last_text(replies: &[Value]) -> String {
    replies
        .iter()
        .rev()
        .find(|v| v["type"] == "ui_state")
        .map(|v| v["text"].as_str().unwrap().to_string())
        .unwrap_or_default()
}

fn clicks(replies: &[Value]) -> usize {
    replies.iter().filter(|v| v["type"] == "feedback" && v["kind"] == "selection_click").count()
}

#[test]
fn tcp_session_types_text() {
    let server = start(SessionConfig::default());
    let stream = connect(&server);
    let replies = exchange(&stream, &gaze_lines("hi"));
    assert_eq!(last_text(&replies), "hi");
    assert_eq!(clicks(&replies), 4);
    let highlights: Vec<u64> = replies
        .iter()
        .filter(|v| v["type"] == "feedback" && v["kind"] == "direction_changed")
        .map(|v| v["highlight"].as_u64().unwrap())
        .collect();
    assert_eq!(highlights, [4, 5, 4, 6]);
    server.stop();
}

#[test]
fn malformed_lines_do_not_close_the_connection() {
    let server = start(SessionConfig::default());
    let stream = connect(&server);
    let lines = vec!["not json".to_string(), r#"{"type":"gaze_state","state":12}"#.to_string()];
    let replies = exchange(&stream, &lines);
    let codes: Vec<&str> = replies.iter().map(|v| v["code"].as_str().unwrap()).collect();
    assert_eq!(codes, ["bad_message", "bad_state", "unknown_type"]);

    let replies = exchange(&stream, &vec![r#"{"type":"gaze_state","state":5}"#.to_string(); 9]);
    assert!(replies.iter().any(|v| v["type"] == "ui_state" && v["highlight"] == 5));
    server.stop();
}

#[test]
fn connections_have_independent_sessions() {
    let server = start(SessionConfig::default());
    let a = connect(&server);
    let b = connect(&server);
    let from_a = exchange(&a, &gaze_lines("a"));
    let from_b = exchange(&b, &gaze_lines("b"));
    assert_eq!(last_text(&from_a), "a");
    assert_eq!(last_text(&from_b), "b");
    let reset = exchange(&a, &[r#"{"type":"reset"}"#.to_string()]);
    assert_eq!(last_text(&reset), "");
    server.stop();
}

#[test]
fn frames_mode_needs_a_model_and_frames() {
    let config = SessionConfig { input_mode: InputMode::Frames, ..SessionConfig::default() };
    assert!(ServiceContext::new(config.clone()).is_err());

    let model = build_model(ModelConfig::double_eye(), 1).unwrap();
    let context = ServiceContext::with_model(config, Some(model)).unwrap();
    let server = Server::bind("127.0.0.1:0", context).unwrap().spawn();
    let stream = connect(&server);
    let lines = [
        r#"{"type":"frame","png_base64":"AAAA"}"#.to_string(),
        r#"{"type":"gaze_state","state":3}"#.to_string(),
    ];
    let replies = exchange(&stream, &lines);
    let codes: Vec<&str> = replies.iter().map(|v| v["code"].as_str().unwrap()).collect();
    assert_eq!(codes, ["bad_frame", "wrong_input_mode", "unknown_type"]);
    server.stop();
}

#[test]
fn websocket_clients_share_the_port() {
    let server = start(SessionConfig::default());
    let url = format!("ws://{}/", server.addr());
    let (mut ws, _) = tungstenite::connect(url.as_str()).unwrap();
    let mut messages = gaze_lines("a");
    messages.push(SENTINEL.to_string());
    for m in &messages {
        ws.send(Message::Text(m.clone())).unwrap();
    }
    let mut replies = Vec::new();
    loop {
        let Message::Text(text) = ws.read().unwrap() else { continue };
        let v: Value = serde_json::from_str(&text).unwrap();
        let done = v["type"] == "error";
        replies.push(v);
        if done {
            break;
        }
    }
    assert_eq!(replies.last().unwrap()["code"], "unknown_type");
    assert_eq!(last_text(&replies), "a");
    assert_eq!(clicks(&replies), 2);
    ws.close(None).unwrap();
    server.stop();
}
