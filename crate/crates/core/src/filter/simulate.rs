use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FilterError, DEFAULT_CAPACITY};
use crate::state::EyeState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub state: EyeState,
    pub frames: usize,
}

/// Inclusive burst-length range in frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub min: usize,
    pub max: usize,
}

impl FrameRange {
    pub fn contains(&self, n: usize) -> bool {
        (self.min..=self.max).contains(&n)
    }
}

/// A scripted gaze sequence and the noise to lay over it.
///
/// Noise replaces frames rather than inserting them, so every segment keeps
/// its scripted start frame and length. Noise events are kept at least
/// `min_gap_frames` clean frames apart from each other and from the next
/// segment boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseScript {
    pub fps: f64,
    pub segments: Vec<Segment>,
    /// Expected natural blinks per second of fixation.
    pub blink_rate: f64,
    pub blink_frames: FrameRange,
    /// Chance that a segment change is preceded by a saccade burst.
    pub saccade_probability: f64,
    pub saccade_frames: FrameRange,
    /// Per-frame chance of a single wrong estimate.
    pub misestimation_rate: f64,
    pub min_gap_frames: usize,
}

impl Default for NoiseScript {
    fn default() -> Self {
        Self {
            fps: 29.0,
            segments: Vec::new(),
            blink_rate: 0.3,
            blink_frames: FrameRange { min: 3, max: 5 },
            saccade_probability: 1.0,
            saccade_frames: FrameRange { min: 1, max: 4 },
            misestimation_rate: 0.01,
            min_gap_frames: DEFAULT_CAPACITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Blink,
    Saccade,
    Misestimation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimulatedFrame {
    pub state: EyeState,
    /// Segment index this frame belongs to.
    pub segment: usize,
    pub noise: Option<NoiseKind>,
}

impl NoiseScript {
    /// Noise-free script visiting `states` for `frames` each.
    pub fn clean(states: &[EyeState], frames: usize) -> Self {
        Self {
            segments: states.iter().map(|&state| Segment { state, frames }).collect(),
            blink_rate: 0.0,
            saccade_probability: 0.0,
            misestimation_rate: 0.0,
            ..Self::default()
        }
    }

    /// Random fixation sequence with default noise: `count` segments with
    /// consecutive states distinct, each lasting one to two seconds.
    pub fn random(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Self::default();
        let min_frames = base.fps.ceil() as usize;
        let mut segments: Vec<Segment> = Vec::with_capacity(count);
        while segments.len() < count {
            let state = EyeState::from_index(rng.gen_range(0..EyeState::COUNT));
            if segments.last().is_some_and(|s| s.state == state) {
                continue;
            }
            segments.push(Segment {
                state,
                frames: rng.gen_range(min_frames..=2 * min_frames),
            });
        }
        Self { segments, ..base }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::Script(m.to_string()));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if self.segments.iter().any(|s| s.frames == 0) {
            return bad("segment durations must be positive");
        }
        for (name, r) in [("blink", self.blink_frames), ("saccade", self.saccade_frames)] {
            if r.min == 0 || r.min > r.max {
                return bad(&format!("{name} frame range must satisfy 1 <= min <= max"));
            }
        }
        let rate_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.blink_rate >= 0.0 && rate_ok(self.blink_rate / self.fps)) {
            return bad("blink rate must be between zero and one per frame");
        }
        if !rate_ok(self.saccade_probability) || !rate_ok(self.misestimation_rate) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames).sum()
    }
}

fn other_state(rng: &mut ChaCha8Rng, not: EyeState) -> EyeState {
    let k = rng.gen_range(0..EyeState::COUNT - 1);
    EyeState::from_index(if k >= not.index() { k + 1 } else { k })
}

/// Expands the script into per-frame raw states with their noise labels.
pub fn simulate(script: &NoiseScript, seed: u64) -> Result<Vec<SimulatedFrame>, FilterError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(script.total_frames());
    let blink_p = script.blink_rate / script.fps;
    let gap = script.min_gap_frames;

    for (index, seg) in script.segments.iter().enumerate() {
        let start = frames.len();
        frames.extend((0..seg.frames).map(|_| SimulatedFrame {
            state: seg.state,
            segment: index,
            noise: None,
        }));
        let last = index + 1 == script.segments.len();
        // Room that must stay clean before the next boundary.
        let tail = if last { 0 } else { gap };
        let mut pos = 0;

        if index > 0 && rng.gen_bool(script.saccade_probability) {
            let len = rng.gen_range(script.saccade_frames.min..=script.saccade_frames.max).min(seg.frames);
            for f in &mut frames[start..start + len] {
                f.state = EyeState::from_index(rng.gen_range(0..EyeState::COUNT));
                f.noise = Some(NoiseKind::Saccade);
            }
            pos = len;
        }
        // The new state needs a clean stretch to take hold before any
        // further noise.
        pos += gap;

        while pos < seg.frames {
            let (kind, len) = if rng.gen_bool(blink_p) {
                let r = script.blink_frames;
                (NoiseKind::Blink, rng.gen_range(r.min..=r.max))
            } else if rng.gen_bool(script.misestimation_rate) {
                (NoiseKind::Misestimation, 1)
            } else {
                pos += 1;
                continue;
            };
            if pos + len + tail > seg.frames {
                pos += 1;
                continue;
            }
            for f in &mut frames[start + pos..start + pos + len] {
                f.state = match kind {
                    NoiseKind::Blink => EyeState::CLOSED,
                    _ => other_state(&mut rng, seg.state),
                };
                f.noise = Some(kind);
            }
            pos += len + gap;
        }
    }
    Ok(frames)
}

/// Raw per-frame states only.
pub fn simulate_sequence(script: &NoiseScript, seed: u64) -> Result<Vec<EyeState>, FilterError> {
    Ok(simulate(script, seed)?.into_iter().map(|f| f.state).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{distinct_runs, filter_stream};

    /// Maximal runs of consecutive frames sharing one noise label.
    fn bursts(frames: &[SimulatedFrame]) -> Vec<(NoiseKind, usize)> {
        let mut out: Vec<(NoiseKind, usize, usize)> = Vec::new();
        for (i, f) in frames.iter().enumerate() {
            if let Some(k) = f.noise {
                match out.last_mut() {
                    Some((lk, _, end)) if *lk == k && *end == i => *end = i + 1,
                    _ => out.push((k, i, i + 1)),
                }
            }
        }
        out.into_iter().map(|(k, s, e)| (k, e - s)).collect()
    }

    #[test]
    fn noise_free_script_expands_verbatim() {
        let states: Vec<EyeState> = (1..=3).map(|c| EyeState::new(c).unwrap()).collect();
        let script = NoiseScript::clean(&states, 4);
        let raw = simulate_sequence(&script, 9).unwrap();
        let expect: Vec<EyeState> = states.iter().flat_map(|&s| [s; 4]).collect();
        assert_eq!(raw, expect);
    }

    #[test]
    fn deterministic_in_seed() {
        let script = NoiseScript::random(8, 1);
        assert_eq!(simulate(&script, 3).unwrap(), simulate(&script, 3).unwrap());
    }

    #[test]
    fn burst_lengths_within_ranges() {
        for seed in 0..50 {
            let mut script = NoiseScript::random(12, seed);
            script.blink_rate = 2.0;
            script.misestimation_rate = 0.05;
            let frames = simulate(&script, seed).unwrap();
            assert_eq!(frames.len(), script.total_frames());
            for (kind, len) in bursts(&frames) {
                match kind {
                    NoiseKind::Blink => assert!(script.blink_frames.contains(len), "blink {len}"),
                    NoiseKind::Saccade => assert!((1..=4).contains(&len), "saccade {len}"),
                    NoiseKind::Misestimation => assert_eq!(len, 1),
                }
            }
        }
    }

    #[test]
    fn segment_boundaries_preserved() {
        let script = NoiseScript::random(10, 4);
        let frames = simulate(&script, 4).unwrap();
        let mut start = 0;
        for (i, seg) in script.segments.iter().enumerate() {
            assert!(frames[start..start + seg.frames].iter().all(|f| f.segment == i));
            start += seg.frames;
        }
    }

    #[test]
    fn fixation_sweep_survives_filter() {
        // Fixations 1..9 then closed, one second each with blinks.
        let states: Vec<EyeState> = (1..=9).chain([0]).map(|c| EyeState::new(c).unwrap()).collect();
        let mut script = NoiseScript::clean(&states, 29);
        script.blink_rate = 1.0;
        script.saccade_probability = 1.0;
        let raw: Vec<_> = simulate_sequence(&script, 2).unwrap().into_iter().map(Some).collect();
        let filtered = filter_stream(DEFAULT_CAPACITY, &raw).unwrap();
        assert_eq!(distinct_runs(&filtered), states);
    }

    #[test]
    fn rejects_invalid_scripts() {
        let mut s = NoiseScript::random(3, 0);
        s.segments[1].frames = 0;
        assert!(s.validate().is_err());
        let mut s = NoiseScript::random(3, 0);
        s.blink_frames = FrameRange { min: 5, max: 3 };
        assert!(s.validate().is_err());
        let mut s = NoiseScript::random(3, 0);
        s.misestimation_rate = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let script = NoiseScript::random(3, 7);
        let text = serde_json::to_string(&script).unwrap();
        assert_eq!(serde_json::from_str::<NoiseScript>(&text).unwrap(), script);
        let minimal: NoiseScript =
            serde_json::from_str(r#"{"segments":[{"state":5,"frames":30}]}"#).unwrap();
        assert_eq!(minimal.fps, 29.0);
        assert_eq!(minimal.segments[0].state, EyeState::new(5).unwrap());
    }
}
