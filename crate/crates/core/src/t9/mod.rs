//! Two-level T9 keyboard driven by the filtered gaze stream: looking picks
//! a button, a voluntary blink selects it.

mod layout;
mod metrics;
mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::Segment;
use crate::state::EyeState;

pub use layout::{
    Action, Layout, BACKSPACE_DIRECTION, BACK_DIRECTION, DIGIT_DIRECTION, LETTER_DIRECTIONS, LETTER_GROUPS,
    SPACE_DIRECTION,
};
pub use metrics::{compute_metrics, SessionMetrics};
pub use replay::{read_event_log, read_replay_csv, write_event_log, write_replay_csv, LoggedEvent};

#[derive(Debug, Error)]
pub enum T9Error {
    #[error("elapsed time must be positive, got {0}")]
    Elapsed(f64),
    #[error("the layout has no key for {0:?}")]
    Untypable(char),
    #[error("replay line {line}: {message}")]
    Replay { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Main,
    Secondary { button: u8 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum FeedbackEvent {
    DirectionChanged { direction: u8, label: String },
    SelectionClick,
    CharCommitted { ch: char },
    CharDeleted,
    ModeChanged { mode: Mode },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyboardState {
    pub mode: Mode,
    /// Direction currently looked at; cleared while the eyes are closed.
    pub highlight: Option<u8>,
    pub last_stable_direction: Option<u8>,
    pub text: String,
    /// A selection already fired during the current closure.
    pub closed_latch: bool,
}

/// The keyboard state machine.
#[derive(Clone, Debug, Default)]
pub struct T9Engine {
    layout: Layout,
    state: KeyboardState,
}

impl T9Engine {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            state: KeyboardState::default(),
        }
    }

    pub fn state(&self) -> &KeyboardState {
        &self.state
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn text(&self) -> &str {
        &self.state.text
    }

    pub fn reset(&mut self) {
        self.state = KeyboardState::default();
    }

    /// Label read out for `direction` in the current mode.
    pub fn label(&self, direction: u8) -> String {
        match self.state.mode {
            Mode::Main => self.layout.main_label(direction).to_string(),
            Mode::Secondary { button } => self.layout.action(button, direction).label(),
        }
    }

    /// Labels of the nine cells in the current mode, direction 1 first.
    pub fn labels(&self) -> Vec<String> {
        (1..=9).map(|d| self.label(d)).collect()
    }

    /// Applies one filtered observation.
    pub fn on_state(&mut self, filtered: Option<EyeState>) -> Vec<FeedbackEvent> {
        let Some(state) = filtered else {
            return Vec::new();
        };
        let mut events = Vec::new();
        if state.is_closed() {
            self.state.highlight = None;
            if !self.state.closed_latch {
                self.state.closed_latch = true;
                if let Some(direction) = self.state.last_stable_direction {
                    events.push(FeedbackEvent::SelectionClick);
                    self.select(direction, &mut events);
                }
            }
        } else {
            self.state.closed_latch = false;
            let direction = state.code();
            if self.state.highlight != Some(direction) {
                self.state.highlight = Some(direction);
                self.state.last_stable_direction = Some(direction);
                events.push(FeedbackEvent::DirectionChanged {
                    direction,
                    label: self.label(direction),
                });
            }
        }
        events
    }

    fn set_mode(&mut self, mode: Mode, events: &mut Vec<FeedbackEvent>) {
        self.state.mode = mode;
        events.push(FeedbackEvent::ModeChanged { mode });
    }

    fn select(&mut self, direction: u8, events: &mut Vec<FeedbackEvent>) {
        let button = match self.state.mode {
            Mode::Main => return self.set_mode(Mode::Secondary { button: direction }, events),
            Mode::Secondary { button } => button,
        };
        let ch = match self.layout.action(button, direction) {
            Action::Noop => return,
            Action::Back => None,
            Action::Backspace => {
                if self.state.text.pop().is_some() {
                    events.push(FeedbackEvent::CharDeleted);
                }
                None
            }
            Action::CommitChar(c) => Some(c),
            Action::Digit(d) => Some(char::from(b'0' + d)),
            Action::Space => Some(' '),
        };
        if let Some(ch) = ch {
            self.state.text.push(ch);
            events.push(FeedbackEvent::CharCommitted { ch });
        }
        self.set_mode(Mode::Main, events);
    }
}

/// Folds a filtered stream through a fresh engine, returning the events
/// tagged with their frame index and the final text.
pub fn run_stream(layout: &Layout, stream: &[Option<EyeState>]) -> (Vec<LoggedEvent>, String) {
    let mut engine = T9Engine::new(layout.clone());
    let mut log = Vec::new();
    for (frame, &obs) in stream.iter().enumerate() {
        log.extend(engine.on_state(obs).into_iter().map(|event| LoggedEvent { frame, event }));
    }
    (log, engine.state.text)
}

pub fn type_script(layout: &Layout, stream: &[Option<EyeState>]) -> String {
    run_stream(layout, stream).1
}

/// The (button, direction) selections that type `text` from the main
/// interface.
pub fn plan_selections(layout: &Layout, text: &str) -> Result<Vec<(u8, u8)>, T9Error> {
    let mut plan = Vec::new();
    for c in text.chars() {
        let (button, direction) = layout.locate(c).ok_or(T9Error::Untypable(c))?;
        plan.push((button, button));
        plan.push((button, direction));
    }
    Ok(plan)
}

/// Gaze script typing `text`: for every selection, look at the target for
/// `look_frames` and then close the eyes for `close_frames`.
pub fn typing_segments(
    layout: &Layout,
    text: &str,
    look_frames: usize,
    close_frames: usize,
) -> Result<Vec<Segment>, T9Error> {
    let mut segments = Vec::new();
    for (_, target) in plan_selections(layout, text)? {
        segments.push(Segment {
            state: EyeState::new(target as i64).expect("direction 1-9"),
            frames: look_frames,
        });
        segments.push(Segment {
            state: EyeState::CLOSED,
            frames: close_frames,
        });
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(code: u8) -> Option<EyeState> {
        Some(EyeState::new(code as i64).unwrap())
    }

    fn expand(segments: &[Segment]) -> Vec<Option<EyeState>> {
        segments.iter().flat_map(|seg| vec![Some(seg.state); seg.frames]).collect()
    }

    #[test]
    fn main_selection_enters_secondary() {
        let mut e = T9Engine::default();
        assert_eq!(
            e.on_state(s(3)),
            vec![FeedbackEvent::DirectionChanged { direction: 3, label: "def".into() }]
        );
        assert_eq!(
            e.on_state(s(0)),
            vec![FeedbackEvent::SelectionClick, FeedbackEvent::ModeChanged { mode: Mode::Secondary { button: 3 } }]
        );
        assert_eq!(e.state().highlight, None);
        assert_eq!(e.state().last_stable_direction, Some(3));
    }

    #[test]
    fn secondary_selection_commits_and_returns() {
        let mut e = T9Engine::default();
        for obs in [s(3), s(0), s(5)] {
            e.on_state(obs);
        }
        assert_eq!(
            e.on_state(s(0)),
            vec![
                FeedbackEvent::SelectionClick,
                FeedbackEvent::CharCommitted { ch: 'e' },
                FeedbackEvent::ModeChanged { mode: Mode::Main }
            ]
        );
        assert_eq!(e.text(), "e");
    }

    #[test]
    fn long_closure_clicks_once() {
        let mut e = T9Engine::default();
        e.on_state(s(4));
        let clicks = (0..100)
            .flat_map(|_| e.on_state(s(0)))
            .filter(|ev| *ev == FeedbackEvent::SelectionClick)
            .count();
        assert_eq!(clicks, 1);
    }

    #[test]
    fn blink_before_any_direction_is_ignored() {
        let mut e = T9Engine::default();
        assert!(e.on_state(s(0)).is_empty());
        assert!(e.on_state(None).is_empty());
        assert_eq!(type_script(&Layout::default(), &[s(0), s(0), None]), "");
    }

    #[test]
    fn empty_stream_types_nothing() {
        assert_eq!(type_script(&Layout::default(), &[]), "");
    }

    #[test]
    fn hello() {
        let layout = Layout::default();
        let plan = plan_selections(&layout, "hello").unwrap();
        let buttons: Vec<u8> = plan.iter().step_by(2).map(|p| p.0).collect();
        assert_eq!(buttons, vec![4, 3, 5, 5, 6]);
        let stream = expand(&typing_segments(&layout, "hello", 30, 12).unwrap());
        let (events, text) = run_stream(&layout, &stream);
        assert_eq!(text, "hello");
        let clicks = events.iter().filter(|e| e.event == FeedbackEvent::SelectionClick).count();
        assert_eq!(clicks, 10);
    }

    #[test]
    fn backspace_space_digit_and_back() {
        let layout = Layout::default();
        // "ab", then space, digit 2, backspace, and a back-out of button 7.
        let selections = [(2, 4), (2, 5), (1, 4), (2, 8), (1, 6), (7, 2)];
        let mut stream = Vec::new();
        for (b, d) in selections {
            stream.extend([s(b), s(0), s(d), s(0)]);
        }
        let (events, text) = run_stream(&layout, &stream);
        assert_eq!(text, "ab ");
        assert!(events.iter().any(|e| e.event == FeedbackEvent::CharDeleted));
        assert_eq!(events.last().unwrap().event, FeedbackEvent::ModeChanged { mode: Mode::Main });
    }

    #[test]
    fn noop_direction_stays_in_secondary() {
        let mut e = T9Engine::default();
        for obs in [s(1), s(0), s(9)] {
            e.on_state(obs);
        }
        assert_eq!(e.on_state(s(0)), vec![FeedbackEvent::SelectionClick]);
        assert_eq!(e.state().mode, Mode::Secondary { button: 1 });
    }

    #[test]
    fn untypable_text_rejected() {
        assert!(matches!(plan_selections(&Layout::default(), "a!"), Err(T9Error::Untypable('!'))));
    }

    #[test]
    fn event_json_shape() {
        let ev = FeedbackEvent::ModeChanged { mode: Mode::Secondary { button: 3 } };
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(v["kind"], "mode_changed");
        assert_eq!(v["payload"]["mode"]["kind"], "secondary");
        assert_eq!(v["payload"]["mode"]["button"], 3);
        let click = serde_json::to_value(FeedbackEvent::SelectionClick).unwrap();
        assert_eq!(click, serde_json::json!({"kind": "selection_click"}));
    }

    fn closed_episodes_with_direction(stream: &[Option<EyeState>]) -> usize {
        let (mut count, mut seen_dir, mut prev_closed) = (0, false, false);
        for obs in stream.iter().flatten() {
            if obs.is_closed() {
                if !prev_closed && seen_dir {
                    count += 1;
                }
                prev_closed = true;
            } else {
                seen_dir = true;
                prev_closed = false;
            }
        }
        count
    }

    proptest! {
        #[test]
        fn engine_invariants(stream in prop::collection::vec(prop::option::weighted(0.9, 0u8..10), 0..300)) {
            let stream: Vec<Option<EyeState>> = stream.into_iter().map(|o| o.and_then(s)).collect();
            let layout = Layout::default();
            let mut engine = T9Engine::default();
            let mut clicks = 0;
            let mut all = Vec::new();
            for &obs in &stream {
                let before = engine.text().to_string();
                let events = engine.on_state(obs);
                let after = engine.text();
                if after != before {
                    let appended = after.len() == before.len() + 1 && after.starts_with(&before);
                    let removed = before.len() == after.len() + 1 && before.starts_with(after);
                    prop_assert!(appended || removed);
                }
                for (i, ev) in events.iter().enumerate() {
                    if let FeedbackEvent::CharCommitted { .. } = ev {
                        prop_assert_eq!(&events[i + 1], &FeedbackEvent::ModeChanged { mode: Mode::Main });
                    }
                }
                if let Mode::Secondary { button } = engine.state().mode {
                    prop_assert!((1..=9).contains(&button));
                }
                clicks += events.iter().filter(|e| **e == FeedbackEvent::SelectionClick).count();
                all.extend(events);
            }
            prop_assert_eq!(clicks, closed_episodes_with_direction(&stream));
            let (replayed, text) = run_stream(&layout, &stream);
            prop_assert_eq!(replayed.into_iter().map(|l| l.event).collect::<Vec<_>>(), all);
            prop_assert_eq!(text, engine.text());
        }
    }
}
