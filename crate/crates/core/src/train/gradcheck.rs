//! Finite-difference check of the full training objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_loss, loss_and_grad};
use crate::error::{Error, Result};
use crate::model::{Batch, ModelConfig, ModelParams};
use crate::nn::gradcheck::{compare, finite_diff_grad, GradCheckReport};

/// Compares analytic and central-difference gradients of the batch loss for
/// every named parameter tensor. With `dropout_seed` set, each evaluation
/// redraws the same dropout masks from that seed.
pub fn check_model_gradients(
    cfg: &ModelConfig,
    params: &ModelParams,
    batch: &Batch,
    labels: &[usize],
    forbidden: &[bool],
    dropout_seed: Option<u64>,
    eps: f64,
) -> Result<Vec<GradCheckReport>> {
    let rng = || dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let mut grad = params.zeros_like();
    loss_and_grad(params, cfg, batch, labels, forbidden, rng().as_mut(), &mut grad)?;
    let analytic = grad.flatten();
    let theta = params.flatten();
    let mut probe = params.clone();
    let mut failure = None;
    let numeric = finite_diff_grad(
        |flat| {
            probe.unflatten(flat);
            match batch_loss(&probe, cfg, batch, labels, forbidden, rng().as_mut()) {
                Ok(l) => l.total(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &theta,
        eps,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let numeric = numeric?;
    let mut reports = Vec::new();
    let mut off = 0;
    for (name, t) in params.named() {
        let n = t.len();
        reports.push(compare(name, &analytic[off..off + n], &numeric[off..off + n], eps)?);
        off += n;
    }
    if off != analytic.len() {
        return Err(Error::Oracle("parameter layout changed during the check".into()));
    }
    Ok(reports)
}
