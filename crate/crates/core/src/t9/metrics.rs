use serde::{Deserialize, Serialize};

use super::T9Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Typed characters excluding spaces.
    pub letters: usize,
    pub elapsed_seconds: f64,
    pub letters_per_minute: f64,
    /// Wrong letters over typed letters, spaces removed from both texts.
    pub error_rate: f64,
}

pub fn compute_metrics(typed: &str, reference: &str, elapsed_seconds: f64) -> Result<SessionMetrics, T9Error> {
    if !(elapsed_seconds > 0.0 && elapsed_seconds.is_finite()) {
        return Err(T9Error::Elapsed(elapsed_seconds));
    }
    let typed: Vec<char> = typed.chars().filter(|c| *c != ' ').collect();
    let reference: Vec<char> = reference.chars().filter(|c| *c != ' ').collect();
    let letters = typed.len();
    let wrong = typed
        .iter()
        .enumerate()
        .filter(|(i, c)| reference.get(*i) != Some(c))
        .count();
    let (letters_per_minute, error_rate) = if letters == 0 {
        (0.0, 0.0)
    } else {
        (60.0 * letters as f64 / elapsed_seconds, wrong as f64 / letters as f64)
    };
    Ok(SessionMetrics {
        letters,
        elapsed_seconds,
        letters_per_minute,
        error_rate,
    })
}
