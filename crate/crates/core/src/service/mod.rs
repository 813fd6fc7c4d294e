//! Session service: turns a stream of gaze observations into keyboard
//! state and feedback, over line-delimited JSON or WebSocket.

mod config;
mod server;
mod session;
mod wire;

use thiserror::Error;

use crate::estimator::EstimatorError;

pub use config::{FeedbackMode, InputMode, SessionConfig};
pub use server::{Server, ServerHandle, ServiceContext};
pub use session::{replay_log, LogRecord, Replay, Session, LOG_VERSION};
pub use wire::{ClientMessage, ConfigureRequest, ErrorCode, ServerMessage, WireError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("session log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("websocket: {0}")]
    Socket(String),
    #[error(transparent)]
    Model(#[from] EstimatorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
