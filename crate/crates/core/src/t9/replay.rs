use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{FeedbackEvent, T9Error};
use crate::state::EyeState;

#[derive(Serialize, Deserialize)]
struct ReplayRow {
    frame: usize,
    state: Option<i64>,
}

/// Filtered stream as CSV with columns frame, state (empty when absent).
pub fn write_replay_csv<W: Write>(w: W, stream: &[Option<EyeState>]) -> Result<(), T9Error> {
    let mut writer = csv::Writer::from_writer(w);
    for (frame, s) in stream.iter().enumerate() {
        writer.serialize(ReplayRow {
            frame,
            state: s.map(|s| s.code() as i64),
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_replay_csv<R: Read>(r: R) -> Result<Vec<Option<EyeState>>, T9Error> {
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(r).deserialize::<ReplayRow>().enumerate() {
        let row = row?;
        let state = row
            .state
            .map(EyeState::new)
            .transpose()
            .map_err(|e| T9Error::Replay { line: i + 2, message: e.to_string() })?;
        out.push(state);
    }
    Ok(out)
}

/// One engine event with the frame that caused it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub frame: usize,
    #[serde(flatten)]
    pub event: FeedbackEvent,
}

pub fn write_event_log<W: Write>(mut w: W, events: &[LoggedEvent]) -> Result<(), T9Error> {
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(r: R) -> Result<Vec<LoggedEvent>, T9Error> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| T9Error::Replay { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
