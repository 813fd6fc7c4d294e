use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::FeedbackMode;
use crate::t9::{FeedbackEvent, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    UnknownType,
    BadState,
    BadFrame,
    BadDimensions,
    NoModel,
    WrongInputMode,
    BadConfig,
    LogFailed,
}

/// Client to server.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientMessage {
    GazeState { state: i64 },
    /// One eye strip, or several candidate crops of which the most
    /// confident is used; an empty candidate list is a frame without eyes.
    Frame { candidates: Vec<String> },
    Reset,
    Configure(ConfigureRequest),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigureRequest {
    pub capacity: Option<usize>,
    pub fps: Option<f64>,
    pub feedback: Option<FeedbackMode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireError {
    pub code: ErrorCode,
    pub message: String,
}

impl WireError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<WireError> for ServerMessage {
    fn from(e: WireError) -> Self {
        ServerMessage::Error {
            code: e.code,
            message: e.message,
        }
    }
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, WireError> {
        let bad = |m: String| WireError::new(ErrorCode::BadMessage, m);
        let value: Value = serde_json::from_str(text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| bad("message must be a JSON object".into()))?;
        let kind = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string field \"type\"".into()))?;
        match kind {
            "gaze_state" => {
                let state = obj.get("state").and_then(Value::as_i64).ok_or_else(|| {
                    WireError::new(ErrorCode::BadState, "gaze_state needs an integer \"state\" in 0-9")
                })?;
                if !(0..=9).contains(&state) {
                    return Err(WireError::new(ErrorCode::BadState, format!("state {state} is outside 0-9")));
                }
                Ok(ClientMessage::GazeState { state })
            }
            "frame" => {
                let single = obj.get("png_base64");
                let many = obj.get("candidates");
                let as_string = |v: &Value| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| bad("frame images must be base64 strings".into()))
                };
                let candidates = match (single, many) {
                    (Some(s), None) => vec![as_string(s)?],
                    (None, Some(Value::Array(list))) => list.iter().map(as_string).collect::<Result<_, _>>()?,
                    _ => return Err(bad("frame needs either \"png_base64\" or a \"candidates\" array".into())),
                };
                Ok(ClientMessage::Frame { candidates })
            }
            "reset" => Ok(ClientMessage::Reset),
            "configure" => {
                let mut fields = obj.clone();
                fields.remove("type");
                serde_json::from_value(Value::Object(fields))
                    .map(ClientMessage::Configure)
                    .map_err(|e| WireError::new(ErrorCode::BadConfig, e.to_string()))
            }
            other => Err(WireError::new(ErrorCode::UnknownType, format!("unknown message type {other:?}"))),
        }
    }
}

/// Server to client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    UiState {
        mode: Mode,
        highlight: Option<u8>,
        text: String,
        /// Cell labels for directions 1-9 in the current mode.
        labels: Vec<String>,
        feedback: FeedbackMode,
    },
    Feedback {
        #[serde(flatten)]
        event: FeedbackEvent,
        /// Button to highlight; only sent in screen mode.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        highlight: Option<u8>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> ErrorCode {
        ClientMessage::parse(text).unwrap_err().code
    }

    #[test]
    fn parses_client_messages() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"gaze_state","state":5}"#).unwrap(),
            ClientMessage::GazeState { state: 5 }
        );
        assert_eq!(ClientMessage::parse(r#"{"type":"reset"}"#).unwrap(), ClientMessage::Reset);
        assert_eq!(
            ClientMessage::parse(r#"{"type":"frame","png_base64":"AAAA"}"#).unwrap(),
            ClientMessage::Frame { candidates: vec!["AAAA".into()] }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"frame","candidates":[]}"#).unwrap(),
            ClientMessage::Frame { candidates: vec![] }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"configure","capacity":12,"feedback":"off_screen"}"#).unwrap(),
            ClientMessage::Configure(ConfigureRequest {
                capacity: Some(12),
                fps: None,
                feedback: Some(FeedbackMode::OffScreen)
            })
        );
    }

    #[test]
    fn error_codes() {
        assert_eq!(code(r#"{"type":"gaze_state","state":10}"#), ErrorCode::BadState);
        assert_eq!(code(r#"{"type":"gaze_state","state":-1}"#), ErrorCode::BadState);
        assert_eq!(code(r#"{"type":"gaze_state","state":"up"}"#), ErrorCode::BadState);
        assert_eq!(code(r#"{"type":"wink"}"#), ErrorCode::UnknownType);
        assert_eq!(code("not json"), ErrorCode::BadMessage);
        assert_eq!(code(r#"[1,2]"#), ErrorCode::BadMessage);
        assert_eq!(code(r#"{"state":1}"#), ErrorCode::BadMessage);
        assert_eq!(code(r#"{"type":"frame"}"#), ErrorCode::BadMessage);
        assert_eq!(code(r#"{"type":"configure","colour":1}"#), ErrorCode::BadConfig);
    }

    #[test]
    fn server_message_shapes() {
        let fb = ServerMessage::Feedback {
            event: FeedbackEvent::DirectionChanged { direction: 3, label: "def".into() },
            highlight: Some(3),
        };
        let v: Value = serde_json::from_str(&fb.to_json()).unwrap();
        assert_eq!(v["type"], "feedback");
        assert_eq!(v["kind"], "direction_changed");
        assert_eq!(v["payload"]["label"], "def");
        assert_eq!(v["highlight"], 3);
        assert_eq!(serde_json::from_value::<ServerMessage>(v).unwrap(), fb);

        let click = ServerMessage::Feedback { event: FeedbackEvent::SelectionClick, highlight: None };
        assert_eq!(serde_json::from_str::<ServerMessage>(&click.to_json()).unwrap(), click);

        let ui = ServerMessage::UiState {
            mode: Mode::Secondary { button: 3 },
            highlight: None,
            text: "he".into(),
            labels: vec![String::new(); 9],
            feedback: FeedbackMode::Screen,
        };
        let v: Value = serde_json::from_str(&ui.to_json()).unwrap();
        assert_eq!(v["type"], "ui_state");
        assert_eq!(v["mode"]["kind"], "secondary");
        assert!(v["highlight"].is_null());
        assert_eq!(serde_json::from_value::<ServerMessage>(v).unwrap(), ui);
    }
}
