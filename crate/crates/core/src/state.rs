use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("eye state code {0} is outside 0-9")]
pub struct InvalidState(pub i64);

/// One of ten eye states: closed (0) or a gaze direction 1–9 laid out like
/// a phone keypad (1 = left-up … 9 = right-down).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct EyeState(u8);

impl EyeState {
    pub const CLOSED: EyeState = EyeState(0);
    pub const LEFT_UP: EyeState = EyeState(1);
    pub const UP: EyeState = EyeState(2);
    pub const RIGHT_UP: EyeState = EyeState(3);
    pub const LEFT: EyeState = EyeState(4);
    pub const MIDDLE: EyeState = EyeState(5);
    pub const RIGHT: EyeState = EyeState(6);
    pub const LEFT_DOWN: EyeState = EyeState(7);
    pub const DOWN: EyeState = EyeState(8);
    pub const RIGHT_DOWN: EyeState = EyeState(9);

    pub const COUNT: usize = 10;

    pub const ALL: [EyeState; 10] = [
        EyeState(0),
        EyeState(1),
        EyeState(2),
        EyeState(3),
        EyeState(4),
        EyeState(5),
        EyeState(6),
        EyeState(7),
        EyeState(8),
        EyeState(9),
    ];

    pub fn new(code: i64) -> Result<Self, InvalidState> {
        if (0..=9).contains(&code) {
            Ok(EyeState(code as u8))
        } else {
            Err(InvalidState(code))
        }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < Self::COUNT, "class index {index} out of range");
        EyeState(index as u8)
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_closed(self) -> bool {
        self.0 == 0
    }

    /// Unit step `(dx, dy)` in image coordinates (x right, y down), or
    /// `None` for closed eyes.
    pub fn direction(self) -> Option<(i32, i32)> {
        if self.is_closed() {
            return None;
        }
        let k = self.0 as i32 - 1;
        Some((k % 3 - 1, k / 3 - 1))
    }

    pub fn from_direction(dx: i32, dy: i32) -> Option<Self> {
        if !(-1..=1).contains(&dx) || !(-1..=1).contains(&dy) {
            return None;
        }
        Some(EyeState(((dy + 1) * 3 + dx + 1 + 1) as u8))
    }

    /// Label after a horizontal flip: 1↔3, 4↔6, 7↔9; 0, 2, 5, 8 fixed.
    pub fn mirror(self) -> Self {
        match self.direction() {
            None => self,
            Some((dx, dy)) => Self::from_direction(-dx, dy).unwrap(),
        }
    }

    pub fn name(self) -> &'static str {
        [
            "closed",
            "left-up",
            "up",
            "right-up",
            "left",
            "middle",
            "right",
            "left-down",
            "down",
            "right-down",
        ][self.0 as usize]
    }
}

impl TryFrom<i64> for EyeState {
    type Error = InvalidState;

    fn try_from(code: i64) -> Result<Self, Self::Error> {
        EyeState::new(code)
    }
}

impl From<EyeState> for u8 {
    fn from(s: EyeState) -> u8 {
        s.0
    }
}

impl fmt::Debug for EyeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EyeState({} {})", self.0, self.name())
    }
}

impl fmt::Display for EyeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypad_directions() {
        assert_eq!(EyeState::LEFT_UP.direction(), Some((-1, -1)));
        assert_eq!(EyeState::UP.direction(), Some((0, -1)));
        assert_eq!(EyeState::MIDDLE.direction(), Some((0, 0)));
        assert_eq!(EyeState::RIGHT.direction(), Some((1, 0)));
        assert_eq!(EyeState::RIGHT_DOWN.direction(), Some((1, 1)));
        assert_eq!(EyeState::CLOSED.direction(), None);
        for s in EyeState::ALL.iter().skip(1) {
            let (dx, dy) = s.direction().unwrap();
            assert_eq!(EyeState::from_direction(dx, dy), Some(*s));
        }
    }

    #[test]
    fn mirror_permutation() {
        let images: Vec<u8> = EyeState::ALL.iter().map(|s| s.mirror().code()).collect();
        assert_eq!(images, vec![0, 3, 2, 1, 6, 5, 4, 9, 8, 7]);
        let fixed: Vec<u8> = EyeState::ALL.iter().filter(|s| s.mirror() == **s).map(|s| s.code()).collect();
        assert_eq!(fixed, vec![0, 2, 5, 8]);
    }

    #[test]
    fn serde_rejects_out_of_range() {
        assert_eq!(serde_json::from_str::<EyeState>("7").unwrap(), EyeState(7));
        assert!(serde_json::from_str::<EyeState>("11").is_err());
        assert!(serde_json::from_str::<EyeState>("-1").is_err());
        assert_eq!(serde_json::to_string(&EyeState::DOWN).unwrap(), "8");
    }
}
