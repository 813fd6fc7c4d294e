use serde::{Deserialize, Serialize};

/// What selecting a direction in a secondary interface does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "value", rename_all = "snake_case")]
pub enum Action {
    CommitChar(char),
    Digit(u8),
    Back,
    Space,
    Backspace,
    Noop,
}

impl Action {
    /// Text read out when this action is highlighted.
    pub fn label(self) -> String {
        match self {
            Action::CommitChar(c) => c.to_string(),
            Action::Digit(d) => d.to_string(),
            Action::Back => "back".into(),
            Action::Space => "space".into(),
            Action::Backspace => "backspace".into(),
            Action::Noop => String::new(),
        }
    }
}

/// Main labels and secondary actions, indexed by button/direction 1–9.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    main: [String; 9],
    secondary: [[Action; 9]; 9],
}

pub const LETTER_GROUPS: [&str; 8] = ["abc", "def", "ghi", "jkl", "mno", "pqrs", "tuv", "wxyz"];

/// Directions holding the letters of a group, in order.
pub const LETTER_DIRECTIONS: [u8; 4] = [4, 5, 6, 7];
pub const DIGIT_DIRECTION: u8 = 8;
pub const BACK_DIRECTION: u8 = 2;
pub const SPACE_DIRECTION: u8 = 4;
pub const BACKSPACE_DIRECTION: u8 = 6;

impl Default for Layout {
    /// Letters on buttons 2–9 as on a phone keypad, Space and Backspace
    /// behind button 1.
    fn default() -> Self {
        let mut main: [String; 9] = Default::default();
        let mut secondary = [[Action::Noop; 9]; 9];
        main[0] = "space backspace".into();
        secondary[0][(SPACE_DIRECTION - 1) as usize] = Action::Space;
        secondary[0][(BACKSPACE_DIRECTION - 1) as usize] = Action::Backspace;
        secondary[0][(BACK_DIRECTION - 1) as usize] = Action::Back;
        for (i, group) in LETTER_GROUPS.iter().enumerate() {
            let button = i + 2;
            main[button - 1] = group.to_string();
            let keys = &mut secondary[button - 1];
            for (c, &d) in group.chars().zip(&LETTER_DIRECTIONS) {
                keys[(d - 1) as usize] = Action::CommitChar(c);
            }
            keys[(DIGIT_DIRECTION - 1) as usize] = Action::Digit(button as u8);
            keys[(BACK_DIRECTION - 1) as usize] = Action::Back;
        }
        Self { main, secondary }
    }
}

impl Layout {
    /// Label of a main-interface button; panics outside 1–9.
    pub fn main_label(&self, button: u8) -> &str {
        &self.main[index(button)]
    }

    pub fn action(&self, button: u8, direction: u8) -> Action {
        self.secondary[index(button)][index(direction)]
    }

    /// Button and direction selecting `c`, if the layout can type it.
    pub fn locate(&self, c: char) -> Option<(u8, u8)> {
        let wanted = match c {
            ' ' => Action::Space,
            '0'..='9' => Action::Digit(c as u8 - b'0'),
            _ => Action::CommitChar(c),
        };
        (1..=9u8).find_map(|b| (1..=9u8).find(|&d| self.action(b, d) == wanted).map(|d| (b, d)))
    }
}

fn index(n: u8) -> usize {
    assert!((1..=9).contains(&n), "button/direction {n} out of range");
    (n - 1) as usize
}
