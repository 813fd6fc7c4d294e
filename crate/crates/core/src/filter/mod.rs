//! Sliding-window majority vote over the per-frame state stream, plus a
//! generator of noisy synthetic streams to exercise it.

mod simulate;

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::state::EyeState;

pub use simulate::{
    simulate, simulate_sequence, FrameRange, NoiseKind, NoiseScript, Segment, SimulatedFrame,
};

pub const DEFAULT_CAPACITY: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("filter capacity must be positive")]
    ZeroCapacity,
    #[error("invalid noise script: {0}")]
    Script(String),
}

/// Ring buffer of the most recent observations and the stabilized output.
#[derive(Clone, Debug)]
pub struct FilterWindow {
    capacity: usize,
    buffer: VecDeque<EyeState>,
    counts: [usize; EyeState::COUNT],
    output: Option<EyeState>,
}

impl Default for FilterWindow {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY).expect("nonzero default")
    }
}

impl FilterWindow {
    pub fn new(capacity: usize) -> Result<Self, FilterError> {
        if capacity == 0 {
            return Err(FilterError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            counts: [0; EyeState::COUNT],
            output: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Buffered observations, oldest first.
    pub fn buffer(&self) -> impl Iterator<Item = EyeState> + '_ {
        self.buffer.iter().copied()
    }

    pub fn current(&self) -> Option<EyeState> {
        self.output
    }

    /// Adds one frame's observation. `None` (no eyes found) is skipped and
    /// leaves the window untouched.
    pub fn push(&mut self, observation: Option<EyeState>) -> Option<EyeState> {
        let Some(state) = observation else {
            return self.output;
        };
        if self.buffer.len() == self.capacity {
            let old = self.buffer.pop_front().expect("full buffer");
            self.counts[old.index()] -= 1;
        }
        self.buffer.push_back(state);
        self.counts[state.index()] += 1;
        self.output = Some(mode_with_hysteresis(&self.counts, self.output));
        self.output
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.counts = [0; EyeState::COUNT];
        self.output = None;
    }
}

/// Most frequent state; a tie keeps `previous` if it is among the leaders,
/// otherwise the smallest code wins.
fn mode_with_hysteresis(counts: &[usize; EyeState::COUNT], previous: Option<EyeState>) -> EyeState {
    let best = *counts.iter().max().expect("ten counts");
    if let Some(p) = previous {
        if counts[p.index()] == best {
            return p;
        }
    }
    let idx = counts.iter().position(|&c| c == best).expect("max exists");
    EyeState::from_index(idx)
}

/// Smallest even window strictly longer than twice the longest noise burst.
pub fn recommend_capacity(longest_noise_frames: usize) -> usize {
    2 * longest_noise_frames.max(1) + 2
}

/// Runs a fresh window over a raw stream, returning the output per frame.
pub fn filter_stream(capacity: usize, raw: &[Option<EyeState>]) -> Result<Vec<Option<EyeState>>, FilterError> {
    let mut window = FilterWindow::new(capacity)?;
    Ok(raw.iter().map(|&obs| window.push(obs)).collect())
}

/// The sequence of distinct outputs, with consecutive repeats and gaps
/// collapsed.
pub fn distinct_runs(outputs: &[Option<EyeState>]) -> Vec<EyeState> {
    let mut runs: Vec<EyeState> = Vec::new();
    for s in outputs.iter().flatten() {
        if runs.last() != Some(s) {
            runs.push(*s);
        }
    }
    runs
}

#[derive(Serialize)]
struct TraceRow {
    frame: usize,
    raw: Option<u8>,
    filtered: Option<u8>,
}

/// CSV with columns frame, raw, filtered; absent values are empty cells.
pub fn write_trace_csv<W: Write>(
    w: W,
    raw: &[Option<EyeState>],
    filtered: &[Option<EyeState>],
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    for (frame, (r, f)) in raw.iter().zip(filtered).enumerate() {
        writer.serialize(TraceRow {
            frame,
            raw: r.map(EyeState::code),
            filtered: f.map(EyeState::code),
        })?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(code: u8) -> EyeState {
        EyeState::new(code as i64).unwrap()
    }

    fn saturated(code: u8) -> FilterWindow {
        let mut w = FilterWindow::default();
        for _ in 0..DEFAULT_CAPACITY {
            w.push(Some(s(code)));
        }
        w
    }

    /// Brute-force oracle: recount the buffer from scratch.
    fn oracle(buffer: &[EyeState], previous: Option<EyeState>) -> EyeState {
        let mut best: Vec<EyeState> = Vec::new();
        let mut best_count = 0;
        for code in 0..10u8 {
            let c = buffer.iter().filter(|&&b| b == s(code)).count();
            if c > best_count {
                best = vec![s(code)];
                best_count = c;
            } else if c == best_count && c > 0 {
                best.push(s(code));
            }
        }
        match previous {
            Some(p) if best.contains(&p) => p,
            _ => best[0],
        }
    }

    #[test]
    fn single_blink_frame_is_ignored() {
        let mut w = saturated(5);
        assert_eq!(w.push(Some(s(0))), Some(s(5)));
    }

    #[test]
    fn flips_on_ninth_frame() {
        let mut w = saturated(5);
        for i in 1..=9 {
            let out = w.push(Some(s(2)));
            assert_eq!(out, Some(if i < 9 { s(5) } else { s(2) }), "push {i}");
        }
    }

    #[test]
    fn eight_eight_tie_keeps_previous() {
        let mut w = saturated(5);
        for _ in 0..8 {
            w.push(Some(s(2)));
        }
        assert_eq!(w.current(), Some(s(5)));
    }

    #[test]
    fn fresh_and_single_push() {
        let mut w = FilterWindow::default();
        assert_eq!(w.current(), None);
        w.push(Some(s(7)));
        assert_eq!(w.current(), Some(s(7)));
        assert_eq!(w.current(), Some(s(7)));
    }

    #[test]
    fn first_tie_takes_smallest_code() {
        let mut w = FilterWindow::default();
        w.push(Some(s(6)));
        w.push(Some(s(3)));
        assert_eq!(w.current(), Some(s(6)));
        let mut fresh = FilterWindow::default();
        assert_eq!(mode_with_hysteresis(&[0, 0, 0, 1, 0, 0, 1, 0, 0, 0], None), s(3));
        fresh.push(None);
        assert_eq!(fresh.current(), None);
    }

    #[test]
    fn absent_observation_changes_nothing() {
        let mut w = saturated(4);
        w.push(Some(s(1)));
        let before: Vec<_> = w.buffer().collect();
        assert_eq!(w.push(None), Some(s(4)));
        assert_eq!(w.buffer().collect::<Vec<_>>(), before);
    }

    #[test]
    fn zero_capacity_rejected() {
        assert_eq!(FilterWindow::new(0).unwrap_err(), FilterError::ZeroCapacity);
    }

    #[test]
    fn capacity_rule() {
        assert_eq!(recommend_capacity(1), 4);
        assert!(recommend_capacity(5) >= 11);
        assert!(recommend_capacity(5) <= DEFAULT_CAPACITY);
        for d in 1..50 {
            let c = recommend_capacity(d);
            assert!(c.is_multiple_of(2) && c > 2 * d && c - 2 <= 2 * d);
            assert!(recommend_capacity(d + 1) >= c);
        }
    }

    #[test]
    fn distinct_runs_collapses() {
        let out = [None, Some(s(1)), Some(s(1)), None, Some(s(2)), Some(s(1))];
        assert_eq!(distinct_runs(&out), vec![s(1), s(2), s(1)]);
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[Some(s(3)), None], &[Some(s(3)), Some(s(3))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame,raw,filtered\n0,3,3\n1,,3\n");
    }

    proptest! {
        #[test]
        fn matches_brute_force_mode(
            capacity in 1usize..24,
            stream in prop::collection::vec(prop::option::weighted(0.9, 0u8..10), 1..200),
        ) {
            let mut w = FilterWindow::new(capacity).unwrap();
            let mut prev = None;
            for obs in stream {
                let out = w.push(obs.map(s));
                prop_assert!(w.len() <= capacity);
                if obs.is_some() {
                    let buf: Vec<_> = w.buffer().collect();
                    prop_assert_eq!(out, Some(oracle(&buf, prev)));
                } else {
                    prop_assert_eq!(out, prev);
                }
                prev = out;
            }
        }

        #[test]
        fn short_bursts_never_change_output(
            base in 0u8..10,
            burst in prop::collection::vec(0u8..10, 1..=8),
        ) {
            let mut w = saturated(base);
            for b in burst {
                prop_assert_eq!(w.push(Some(s(b))), Some(s(base)));
            }
        }

        #[test]
        fn nine_frames_always_flip(base in 0u8..10, target in 0u8..10) {
            let mut w = saturated(base);
            for _ in 0..9 {
                w.push(Some(s(target)));
            }
            prop_assert_eq!(w.current(), Some(s(target)));
        }

        #[test]
        fn output_only_reflects_recent_frames(
            prefix in prop::collection::vec(0u8..10, 0..40),
            tail_state in 0u8..10,
        ) {
            let mut w = FilterWindow::default();
            for p in prefix {
                w.push(Some(s(p)));
            }
            for _ in 0..DEFAULT_CAPACITY {
                w.push(Some(s(tail_state)));
            }
            prop_assert_eq!(w.current(), Some(s(tail_state)));
        }
    }
}
