//! The gaze-state CNN: model assembly, training, evaluation and candidate
//! disambiguation.

mod eval;
mod io;
mod model;
mod train;

use thiserror::Error;

use crate::nn::{NnError, Tensor};
use crate::state::EyeState;
use crate::strip::EyeStrip;
use crate::synth::dataset::DatasetError;

pub use eval::{evaluate, evaluate_split, EvalReport};
pub use io::{load_weights, read_weights, save_weights, write_weights};
pub use model::{
    build_model, BatchPass, ConvBlock, Gradients, ModelConfig, ModelParams, CONV_BLOCKS, INPUT_CHANNELS,
};
pub use train::{train, train_from_manifest, write_history_csv, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input has shape {got:?}, model expects {}x{}x3", expected.0, expected.1)]
    Dimensions { expected: (usize, usize), got: Vec<usize> },
    #[error("non-finite loss at batch {batch} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("no candidates this frame")]
    NoCandidates,
    #[error("weight file does not match the network topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Stacks strips into an N×H×W×3 batch.
pub fn batch_tensor<'a>(strips: impl IntoIterator<Item = &'a EyeStrip>) -> Tensor<f32> {
    let mut data = Vec::new();
    let (mut n, mut h, mut w) = (0, 0, 0);
    for s in strips {
        n += 1;
        h = s.height();
        w = s.width();
        data.extend_from_slice(s.data());
    }
    Tensor::new(vec![n, h, w, 3], data).expect("strips of equal size")
}

impl ModelParams<f32> {
    /// Softmax scores for one strip.
    pub fn predict(&self, strip: &EyeStrip) -> Result<Vec<f32>, EstimatorError> {
        let batch = strip.to_tensor().reshape(&[1, strip.height(), strip.width(), 3])?;
        Ok(self.predict_batch(&batch)?.remove(0))
    }

    /// Most likely state and its score.
    pub fn classify(&self, strip: &EyeStrip) -> Result<(EyeState, f32), EstimatorError> {
        let scores = self.predict(strip)?;
        let (idx, score) = argmax(&scores);
        Ok((EyeState::from_index(idx), score))
    }
}

/// Index and value of the largest entry; ties go to the lowest index.
pub fn argmax(scores: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disambiguation {
    pub index: usize,
    pub state: EyeState,
    pub score: f32,
}

/// Picks among per-candidate score vectors by their maximum score.
pub fn pick_candidate(scores: &[Vec<f32>]) -> Result<Disambiguation, EstimatorError> {
    let mut best: Option<Disambiguation> = None;
    for (index, s) in scores.iter().enumerate() {
        let (cls, score) = argmax(s);
        if best.is_none_or(|b| score > b.score) {
            best = Some(Disambiguation {
                index,
                state: EyeState::from_index(cls),
                score,
            });
        }
    }
    best.ok_or(EstimatorError::NoCandidates)
}

/// Chooses the candidate crop the network is most confident about.
pub fn disambiguate(params: &ModelParams<f32>, candidates: &[EyeStrip]) -> Result<Disambiguation, EstimatorError> {
    if candidates.is_empty() {
        return Err(EstimatorError::NoCandidates);
    }
    let scores = params.predict_batch(&batch_tensor(candidates))?;
    pick_candidate(&scores)
}
