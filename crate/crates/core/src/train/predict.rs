use crate::crf::{argmax_rows, viterbi};
use crate::dataio::Sample;
use crate::error::{Error, Result};
use crate::model::{forward_batch, Batch, ModelConfig, ModelParams};
use crate::train::loss::effective_transitions;

use super::metrics::{scores, Scores};

const PREDICT_BATCH: usize = 256;

/// Per-step room ids for every window: Viterbi under the (optionally
/// masked) transitions, or row-wise argmax for the no-crf variant.
pub fn predict(params: &ModelParams, cfg: &ModelConfig, samples: &[Sample], forbidden: &[bool]) -> Result<Vec<Vec<usize>>> {
    let tm = effective_transitions(params, forbidden);
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs, cfg)?;
        let (fwd, _) = forward_batch::<rand_chacha::ChaCha8Rng>(params, cfg, &batch, None)?;
        for b in 0..chunk.len() {
            let (e, _) = fwd.window(b, cfg.window);
            out.push(match &tm {
                Some(tm) => viterbi(&e, tm)?.0,
                None => argmax_rows(&e),
            });
        }
    }
    Ok(out)
}

/// Scores of `predictions` against the windows' labels.
pub fn score_predictions(predictions: &[Vec<usize>], samples: &[Sample], rooms: usize) -> Result<Scores> {
    if samples.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let pred: Vec<usize> = predictions.iter().flatten().copied().collect();
    let truth: Vec<usize> = samples.iter().flat_map(|s| s.labels.iter().copied()).collect();
    scores(&pred, &truth, rooms)
}

pub fn evaluate(params: &ModelParams, cfg: &ModelConfig, samples: &[Sample], forbidden: &[bool]) -> Result<Scores> {
    if samples.is_empty() {
        return Err(Error::Empty("test set"));
    }
    score_predictions(&predict(params, cfg, samples, forbidden)?, samples, cfg.rooms)
}
