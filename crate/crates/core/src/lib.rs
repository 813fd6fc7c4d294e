//! Eye-typing engine: a small CNN classifies eye strips into nine gaze
//! directions or closed, a majority filter stabilizes the stream, and a
//! two-level T9 keyboard turns fixations and blinks into text.

pub mod augment;
pub mod estimator;
pub mod filter;
pub mod nn;
pub mod service;
pub mod state;
pub mod strip;
pub mod synth;
pub mod t9;

pub use state::EyeState;
pub use strip::EyeStrip;
