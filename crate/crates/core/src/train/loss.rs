//! Joint objective: CRF negative log-likelihood (or per-step cross-entropy
//! for the no-crf variant) plus Huber backcast of the normalised RSSI.

use rand::Rng;

use crate::crf::{self, TransitionMatrix};
use crate::error::{Error, Result};
use crate::model::{backward_batch, forward_batch, Batch, ModelConfig, ModelParams};
use crate::nn::ops::softmax_in_place;
use crate::nn::Tensor2;

/// `0.5 e²` inside `|e| <= tau`, `tau (|e| − tau/2)` outside.
pub fn huber(pred: f64, target: f64, tau: f64) -> f64 {
    let e = (pred - target).abs();
    if e <= tau {
        0.5 * e * e
    } else {
        tau * (e - 0.5 * tau)
    }
}

pub fn huber_grad(pred: f64, target: f64, tau: f64) -> f64 {
    (pred - target).clamp(-tau, tau)
}

/// Backcast loss summed over every step and feature.
pub fn backcast_loss(backcast: &Tensor2, rssi: &Tensor2, tau: f64) -> Result<f64> {
    if backcast.shape() != rssi.shape() {
        return Err(Error::dim(
            "backcast",
            format!("{:?}", rssi.shape()),
            format!("{:?}", backcast.shape()),
        ));
    }
    Ok(backcast.data().iter().zip(rssi.data()).map(|(&p, &x)| huber(p, x, tau)).sum())
}

/// Loss of one window: CRF NLL plus the summed Huber backcast error.
pub fn total_loss(
    emissions: &Tensor2,
    labels: &[usize],
    backcast: &Tensor2,
    rssi_window: &Tensor2,
    tm: &TransitionMatrix,
    tau: f64,
) -> Result<f64> {
    Ok(crf::nll(emissions, labels, tm)? + backcast_loss(backcast, rssi_window, tau)?)
}

/// Summed per-step softmax cross-entropy and its gradient.
pub fn cross_entropy_with_grad(emissions: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    if labels.len() != emissions.rows() {
        return Err(Error::dim("labels", emissions.rows(), labels.len()));
    }
    let mut grad = emissions.clone();
    let mut loss = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        let row = emissions.row(t);
        if y >= row.len() {
            return Err(Error::dim("label id", format!("< {}", row.len()), y));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(t);
        softmax_in_place(g);
        g[y] -= 1.0;
    }
    Ok((loss, grad))
}

/// CRF parameters with the decoder mask applied, if the variant has a CRF.
pub fn effective_transitions(params: &ModelParams, forbidden: &[bool]) -> Option<TransitionMatrix> {
    params.crf.as_ref().map(|tm| {
        let mut tm = tm.clone();
        tm.forbidden = forbidden.to_vec();
        tm
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// Sequence term (CRF NLL or cross-entropy), batch mean.
    pub sequence: f64,
    /// Backcast term, batch mean.
    pub backcast: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.sequence + self.backcast
    }
}

/// Batch-mean loss and gradient accumulated into `grad`.
pub fn loss_and_grad<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    labels: &[usize],
    forbidden: &[bool],
    rng: Option<&mut R>,
    grad: &mut ModelParams,
) -> Result<LossParts> {
    let t = cfg.window;
    if labels.len() != batch.size * t {
        return Err(Error::dim("batch labels", batch.size * t, labels.len()));
    }
    let (out, cache) = forward_batch(params, cfg, batch, rng)?;
    let inv = 1.0 / batch.size as f64;
    let tm = effective_transitions(params, forbidden);
    let mut d_emit = Tensor2::zeros(out.emissions.rows(), out.emissions.cols());
    let mut parts = LossParts::default();
    for b in 0..batch.size {
        let rows: Vec<&[f64]> = (0..t).map(|i| out.emissions.row(b * t + i)).collect();
        let e = Tensor2::from_rows(&rows)?;
        let y = &labels[b * t..(b + 1) * t];
        let (loss, de) = match &tm {
            Some(tm) => {
                let (loss, g) = crf::nll_with_grad(&e, y, tm)?;
                let gc = grad.crf.as_mut().expect("gradient has CRF");
                for (a, s) in gc.scores.data_mut().iter_mut().zip(g.scores.data()) {
                    *a += inv * s;
                }
                for (a, s) in gc.start.data_mut().iter_mut().zip(&g.start) {
                    *a += inv * s;
                }
                (loss, g.emissions)
            }
            None => cross_entropy_with_grad(&e, y)?,
        };
        parts.sequence += inv * loss;
        for i in 0..t {
            for (a, s) in d_emit.row_mut(b * t + i).iter_mut().zip(de.row(i)) {
                *a = inv * s;
            }
        }
    }
    let tau = cfg.huber_tau;
    parts.backcast = inv * backcast_loss(&out.backcast, &batch.rssi, tau)?;
    let mut d_back = out.backcast.clone();
    for (g, &x) in d_back.data_mut().iter_mut().zip(batch.rssi.data()) {
        *g = inv * huber_grad(*g, x, tau);
    }
    backward_batch(params, cfg, &cache, &d_emit, &d_back, grad);
    Ok(parts)
}

/// Batch-mean loss without gradients.
pub fn batch_loss<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    labels: &[usize],
    forbidden: &[bool],
    rng: Option<&mut R>,
) -> Result<LossParts> {
    let t = cfg.window;
    let (out, _) = forward_batch(params, cfg, batch, rng)?;
    let tm = effective_transitions(params, forbidden);
    let inv = 1.0 / batch.size as f64;
    let mut parts = LossParts::default();
    for b in 0..batch.size {
        let (e, _) = out.window(b, t);
        let y = &labels[b * t..(b + 1) * t];
        parts.sequence += inv
            * match &tm {
                Some(tm) => crf::nll(&e, y, tm)?,
                None => cross_entropy_with_grad(&e, y)?.0,
            };
    }
    parts.backcast = inv * backcast_loss(&out.backcast, &batch.rssi, cfg.huber_tau)?;
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        assert_eq!(huber(2.0, 2.0, 1.0), 0.0);
        assert_eq!(huber(3.0, 0.0, 1.0), 2.5);
        for tau in [0.5f64, 1.0, 2.0] {
            let quadratic = 0.5 * tau * tau;
            let linear = tau * (tau - 0.5 * tau);
            assert!((quadratic - linear).abs() <= 1e-12);
            assert!((huber(tau, 0.0, tau) - quadratic).abs() <= 1e-12);
        }
    }

    #[test]
    fn huber_slope_is_continuous_at_threshold() {
        let tau = 1.0;
        let h = 1e-7;
        let left = (huber(tau, 0.0, tau) - huber(tau - h, 0.0, tau)) / h;
        let right = (huber(tau + h, 0.0, tau) - huber(tau, 0.0, tau)) / h;
        assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        assert_eq!(huber_grad(5.0, 0.0, tau), 1.0);
        assert_eq!(huber_grad(-0.25, 0.0, tau), -0.25);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let e = Tensor2::from_rows(&[[1.0, 2.0, 0.5], [0.0, 0.0, 0.0]]).unwrap();
        let (loss, g) = cross_entropy_with_grad(&e, &[1, 2]).unwrap();
        let z0: f64 = [1.0f64, 2.0, 0.5].iter().map(|v| v.exp()).sum();
        let expected = (z0.ln() - 2.0) + 3f64.ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((g.row(1).iter().sum::<f64>()).abs() < 1e-12);
    }
}
