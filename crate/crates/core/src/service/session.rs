use std::fs::{File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::config::{FeedbackMode, InputMode, SessionConfig};
use super::wire::{ClientMessage, ConfigureRequest, ErrorCode, ServerMessage, WireError};
use super::ServiceError;
use crate::estimator::{argmax, disambiguate, ModelParams};
use crate::filter::FilterWindow;
use crate::state::EyeState;
use crate::strip::{EyeStrip, StripError};
use crate::t9::{FeedbackEvent, LoggedEvent, Mode, T9Engine};

pub const LOG_VERSION: u32 = 1;

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        version: u32,
        /// Wall-clock start, milliseconds since the Unix epoch.
        started_ms: u64,
        capacity: usize,
        fps: f64,
        input_mode: InputMode,
        feedback: FeedbackMode,
    },
    Observation {
        /// Seconds since the session started.
        t: f64,
        frame: u64,
        raw: u8,
        filtered: Option<u8>,
        events: Vec<FeedbackEvent>,
    },
    Reset {
        t: f64,
        frame: u64,
    },
}

struct SessionLog {
    path: PathBuf,
    file: File,
}

impl SessionLog {
    fn create(dir: &Path, header: &LogRecord) -> std::io::Result<Self> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        std::fs::create_dir_all(dir)?;
        let millis = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("session-{millis}-{}-{n}.jsonl", std::process::id()));
        let file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        let mut log = Self { path, file };
        log.append(header)?;
        Ok(log)
    }

    /// Appends one record as a single write so a crash truncates at most
    /// the last line.
    fn append(&mut self, record: &LogRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(std::io::Error::from)?;
        line.push(b'\n');
        self.file.write_all(&line)
    }
}

/// One client's pipeline: optional classifier, filter window, keyboard.
pub struct Session {
    config: SessionConfig,
    model: Option<Arc<ModelParams<f32>>>,
    filter: FilterWindow,
    engine: T9Engine,
    frame: u64,
    started: Instant,
    log: Option<SessionLog>,
    pending: Vec<ServerMessage>,
}

type Snapshot = (Mode, Option<u8>, String);

impl Session {
    /// A failure to open the log does not fail the session; it is reported
    /// with the first reply and logging stays off.
    pub fn new(config: SessionConfig, model: Option<Arc<ModelParams<f32>>>) -> Result<Self, ServiceError> {
        config.validate_numbers()?;
        let filter = FilterWindow::new(config.capacity).map_err(|e| ServiceError::Config(e.to_string()))?;
        let mut session = Self {
            filter,
            model,
            engine: T9Engine::default(),
            frame: 0,
            started: Instant::now(),
            log: None,
            pending: Vec::new(),
            config,
        };
        if let Some(dir) = session.config.log_dir.clone() {
            let header = LogRecord::Header {
                version: LOG_VERSION,
                started_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
                capacity: session.config.capacity,
                fps: session.config.fps,
                input_mode: session.config.input_mode,
                feedback: session.config.feedback,
            };
            match SessionLog::create(&dir, &header) {
                Ok(log) => session.log = Some(log),
                Err(e) => session.pending.push(
                    WireError::new(ErrorCode::LogFailed, format!("session log disabled: {e}")).into(),
                ),
            }
        }
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn engine(&self) -> &T9Engine {
        &self.engine
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|l| l.path.as_path())
    }

    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn snapshot(&self) -> Snapshot {
        let s = self.engine.state();
        (s.mode, s.highlight, s.text.clone())
    }

    pub fn ui_state(&self) -> ServerMessage {
        let s = self.engine.state();
        ServerMessage::UiState {
            mode: s.mode,
            highlight: s.highlight,
            text: s.text.clone(),
            labels: self.engine.labels(),
            feedback: self.config.feedback,
        }
    }

    fn write_log(&mut self, record: &LogRecord, replies: &mut Vec<ServerMessage>) {
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(record) {
                self.log = None;
                replies.push(WireError::new(ErrorCode::LogFailed, format!("session log disabled: {e}")).into());
            }
        }
    }

    /// Handles one line of client input.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => {
                let mut replies = std::mem::take(&mut self.pending);
                replies.push(e.into());
                replies
            }
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let mut replies = std::mem::take(&mut self.pending);
        let result = match msg {
            ClientMessage::GazeState { state } => self.gaze_state(state),
            ClientMessage::Frame { candidates } => self.frame(&candidates),
            ClientMessage::Reset => Ok(self.reset()),
            ClientMessage::Configure(req) => self.configure(req),
        };
        match result {
            Ok(mut r) => replies.append(&mut r),
            Err(e) => replies.push(e.into()),
        }
        replies
    }

    fn gaze_state(&mut self, state: i64) -> Result<Vec<ServerMessage>, WireError> {
        if self.config.input_mode != InputMode::States {
            return Err(WireError::new(ErrorCode::WrongInputMode, "this session expects frame messages"));
        }
        let state = EyeState::new(state).map_err(|e| WireError::new(ErrorCode::BadState, e.to_string()))?;
        Ok(self.observe(Some(state)))
    }

    fn frame(&mut self, candidates: &[String]) -> Result<Vec<ServerMessage>, WireError> {
        if self.config.input_mode != InputMode::Frames {
            return Err(WireError::new(ErrorCode::WrongInputMode, "this session expects gaze_state messages"));
        }
        let model = self
            .model
            .clone()
            .ok_or_else(|| WireError::new(ErrorCode::NoModel, "no model loaded"))?;
        let strips = candidates
            .iter()
            .map(|c| decode_strip(c, model.config.width, model.config.height))
            .collect::<Result<Vec<_>, _>>()?;
        let observation = match strips.len() {
            0 => None,
            1 => {
                let scores = model.predict(&strips[0]).map_err(internal)?;
                Some(EyeState::from_index(argmax(&scores).0))
            }
            _ => Some(disambiguate(&model, &strips).map_err(internal)?.state),
        };
        Ok(self.observe(observation))
    }

    /// Runs one observation through filter and keyboard.
    pub fn observe(&mut self, raw: Option<EyeState>) -> Vec<ServerMessage> {
        let frame = self.frame;
        self.frame += 1;
        let mut replies = Vec::new();
        let Some(raw) = raw else {
            return replies;
        };
        let before = self.snapshot();
        let filtered = self.filter.push(Some(raw));
        let events = self.engine.on_state(filtered);
        let record = LogRecord::Observation {
            t: self.elapsed(),
            frame,
            raw: raw.code(),
            filtered: filtered.map(EyeState::code),
            events: events.clone(),
        };
        self.write_log(&record, &mut replies);
        let screen = self.config.feedback == FeedbackMode::Screen;
        for event in events {
            let highlight = match &event {
                FeedbackEvent::DirectionChanged { direction, .. } if screen => Some(*direction),
                _ => None,
            };
            replies.push(ServerMessage::Feedback { event, highlight });
        }
        if self.snapshot() != before {
            replies.push(self.ui_state());
        }
        replies
    }

    fn reset(&mut self) -> Vec<ServerMessage> {
        let mut replies = Vec::new();
        self.filter.clear();
        self.engine.reset();
        let record = LogRecord::Reset {
            t: self.elapsed(),
            frame: self.frame,
        };
        self.write_log(&record, &mut replies);
        replies.push(self.ui_state());
        replies
    }

    fn configure(&mut self, req: ConfigureRequest) -> Result<Vec<ServerMessage>, WireError> {
        let mut next = self.config.clone();
        if let Some(c) = req.capacity {
            next.capacity = c;
        }
        if let Some(f) = req.fps {
            next.fps = f;
        }
        if let Some(f) = req.feedback {
            next.feedback = f;
        }
        next.validate().map_err(|e| WireError::new(ErrorCode::BadConfig, e.to_string()))?;
        if next.capacity != self.config.capacity {
            self.filter = FilterWindow::new(next.capacity).expect("validated capacity");
        }
        self.config = next;
        Ok(vec![self.ui_state()])
    }
}

fn internal(e: impl std::fmt::Display) -> WireError {
    WireError::new(ErrorCode::BadFrame, e.to_string())
}

fn decode_strip(b64: &str, width: usize, height: usize) -> Result<EyeStrip, WireError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64.trim())
        .map_err(|e| WireError::new(ErrorCode::BadFrame, format!("invalid base64: {e}")))?;
    let strip = EyeStrip::decode_png(&bytes).map_err(|e: StripError| WireError::new(ErrorCode::BadFrame, e.to_string()))?;
    if (strip.width(), strip.height()) != (width, height) {
        return Err(WireError::new(
            ErrorCode::BadDimensions,
            format!("frame is {}x{}, model expects {width}x{height}", strip.width(), strip.height()),
        ));
    }
    Ok(strip)
}

/// What a session log replays to.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    /// Filtered state per logged observation, in order.
    pub filtered: Vec<Option<EyeState>>,
    /// Events re-derived by the keyboard, tagged with the logged frame.
    pub events: Vec<LoggedEvent>,
    /// Events as recorded in the log.
    pub logged_events: Vec<LoggedEvent>,
    pub text: String,
    /// The last line was incomplete and skipped.
    pub truncated: bool,
}

/// Replays a session log through a fresh keyboard. An unparseable final
/// line without a newline is treated as a torn write and skipped.
pub fn replay_log<R: BufRead>(mut reader: R) -> Result<Replay, ServiceError> {
    let mut content = String::new();
    reader.read_to_string(&mut content).map_err(|source| ServiceError::Io {
        path: "<session log>".into(),
        source,
    })?;
    let complete = content.ends_with('\n');
    let lines: Vec<&str> = content.lines().collect();
    let mut engine = T9Engine::default();
    let mut replay = Replay {
        filtered: Vec::new(),
        events: Vec::new(),
        logged_events: Vec::new(),
        text: String::new(),
        truncated: false,
    };
    let mut seen_header = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) if i + 1 == lines.len() && !complete => {
                replay.truncated = true;
                break;
            }
            Err(e) => return Err(ServiceError::Log { line: i + 1, message: e.to_string() }),
        };
        match record {
            LogRecord::Header { version, .. } => {
                if seen_header || i != 0 {
                    return Err(ServiceError::Log { line: i + 1, message: "unexpected header".into() });
                }
                if version != LOG_VERSION {
                    return Err(ServiceError::Log { line: i + 1, message: format!("unsupported log version {version}") });
                }
                seen_header = true;
            }
            LogRecord::Observation { frame, filtered, events, .. } => {
                let filtered = filtered
                    .map(|c| EyeState::new(c as i64))
                    .transpose()
                    .map_err(|e| ServiceError::Log { line: i + 1, message: e.to_string() })?;
                replay.filtered.push(filtered);
                let frame = frame as usize;
                replay
                    .events
                    .extend(engine.on_state(filtered).into_iter().map(|event| LoggedEvent { frame, event }));
                replay.logged_events.extend(events.into_iter().map(|event| LoggedEvent { frame, event }));
            }
            LogRecord::Reset { .. } => engine.reset(),
        }
        if !seen_header {
            return Err(ServiceError::Log { line: 1, message: "missing header".into() });
        }
    }
    replay.text = engine.text().to_string();
    Ok(replay)
}
