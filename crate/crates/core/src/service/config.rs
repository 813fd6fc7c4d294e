use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::filter::DEFAULT_CAPACITY;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Clients send already classified states.
    #[default]
    States,
    /// Clients send eye-strip images for the model to classify.
    Frames,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Visual highlight plus sound.
    #[default]
    Screen,
    /// Sound only.
    OffScreen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub weights: Option<PathBuf>,
    pub input_mode: InputMode,
    pub capacity: usize,
    pub fps: f64,
    pub feedback: FeedbackMode,
    pub log_dir: Option<PathBuf>,
    pub listen: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            weights: None,
            input_mode: InputMode::States,
            capacity: DEFAULT_CAPACITY,
            fps: 29.0,
            feedback: FeedbackMode::Screen,
            log_dir: None,
            listen: "127.0.0.1:8765".into(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.validate_numbers()?;
        if self.input_mode == InputMode::Frames && self.weights.is_none() {
            return Err(ServiceError::Config("frames input needs a weights file".into()));
        }
        Ok(())
    }

    /// Capacity and fps only; for callers that supply the model themselves.
    pub(crate) fn validate_numbers(&self) -> Result<(), ServiceError> {
        if self.capacity < 2 {
            return Err(ServiceError::Config(format!("capacity must be at least 2, got {}", self.capacity)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(ServiceError::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    /// Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| ServiceError::Config(format!("line {}: {m}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: not a number: {v:?}")));
            match key {
                "weights" => config.weights = Some(PathBuf::from(value)),
                "log_dir" => config.log_dir = Some(PathBuf::from(value)),
                "listen" => config.listen = value.to_string(),
                "fps" => config.fps = number(value)?,
                "capacity" => {
                    config.capacity = value
                        .parse()
                        .map_err(|_| err(format!("capacity: not a count: {value:?}")))?
                }
                "input_mode" => {
                    config.input_mode = match value {
                        "states" => InputMode::States,
                        "frames" => InputMode::Frames,
                        _ => return Err(err(format!("input_mode must be states or frames, got {value:?}"))),
                    }
                }
                "feedback" => {
                    config.feedback = match value {
                        "screen" => FeedbackMode::Screen,
                        "off_screen" => FeedbackMode::OffScreen,
                        _ => return Err(err(format!("feedback must be screen or off_screen, got {value:?}"))),
                    }
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let c = SessionConfig::parse(
            "# session\nweights = m.bin\ninput_mode = frames\ncapacity=12\nfps = 30\nfeedback = off_screen # quiet\nlog_dir = logs\nlisten = 0.0.0.0:9000\n",
        )
        .unwrap();
        assert_eq!(c.weights, Some(PathBuf::from("m.bin")));
        assert_eq!(c.input_mode, InputMode::Frames);
        assert_eq!((c.capacity, c.fps), (12, 30.0));
        assert_eq!(c.feedback, FeedbackMode::OffScreen);
        assert_eq!(c.log_dir, Some(PathBuf::from("logs")));
        assert_eq!(c.listen, "0.0.0.0:9000");
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(SessionConfig::parse("\n# nothing\n").unwrap(), SessionConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        for text in ["capacity = 1", "fps = 0", "fps = x", "color = red", "just words", "input_mode = frames"] {
            assert!(SessionConfig::parse(text).is_err(), "{text}");
        }
    }
}
