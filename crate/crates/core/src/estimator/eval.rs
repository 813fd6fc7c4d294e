use serde::{Deserialize, Serialize};

use super::{batch_tensor, EstimatorError, ModelParams};
use crate::state::EyeState;
use crate::strip::EyeStrip;
use crate::synth::dataset::{load_split, DatasetManifest, Split};

const EVAL_BATCH: usize = 64;

/// Accuracy summary of one evaluated split. Percentages are in [0, 100];
/// confusion rows are indexed by the true class, columns by the top-1 guess.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub top1: f64,
    pub top2: f64,
    pub confusion: Vec<Vec<usize>>,
    pub counts: Vec<usize>,
}

impl EvalReport {
    /// Builds a report from per-sample truths and score vectors.
    pub fn from_scores(truths: &[EyeState], scores: &[Vec<f32>]) -> Self {
        let classes = EyeState::COUNT;
        let mut confusion = vec![vec![0; classes]; classes];
        let mut counts = vec![0; classes];
        let (mut hit1, mut hit2) = (0usize, 0usize);
        for (truth, s) in truths.iter().zip(scores) {
            let t = truth.index();
            let mut order: Vec<usize> = (0..s.len()).collect();
            // Stable sort keeps the lower index first on ties.
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            counts[t] += 1;
            confusion[t][order[0]] += 1;
            hit1 += usize::from(order[0] == t);
            hit2 += usize::from(order.iter().take(2).any(|&c| c == t));
        }
        let n = truths.len().max(1) as f64;
        Self {
            top1: 100.0 * hit1 as f64 / n,
            top2: 100.0 * hit2 as f64 / n,
            confusion,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn score_samples(
    params: &ModelParams<f32>,
    samples: &[(EyeStrip, EyeState)],
) -> Result<Vec<Vec<f32>>, EstimatorError> {
    let mut scores = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        scores.extend(params.predict_batch(&batch_tensor(chunk.iter().map(|(s, _)| s)))?);
    }
    Ok(scores)
}

/// Scores every sample with batch norm in inference mode.
pub fn evaluate(params: &ModelParams<f32>, samples: &[(EyeStrip, EyeState)]) -> Result<EvalReport, EstimatorError> {
    let scores = score_samples(params, samples)?;
    let truths: Vec<EyeState> = samples.iter().map(|(_, l)| *l).collect();
    Ok(EvalReport::from_scores(&truths, &scores))
}

pub fn evaluate_split(
    params: &ModelParams<f32>,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<EvalReport, EstimatorError> {
    let samples = load_split(manifest, split)?;
    if samples.is_empty() {
        return Err(EstimatorError::EmptySplit(split.as_str()));
    }
    evaluate(params, &samples)
}
