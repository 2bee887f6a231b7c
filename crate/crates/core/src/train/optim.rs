//! Rectified Adam wrapped in Lookahead slow/fast weight averaging.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fast steps between slow-weight syncs.
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
    /// Global gradient-norm ceiling applied before each update; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lookahead_k: 5,
            lookahead_alpha: 0.5,
            max_grad_norm: Some(1.0),
        }
    }
}

/// RAdam state over a flat view of the parameters.
#[derive(Debug, Clone)]
pub struct RAdam {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl RAdam {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Length of the approximated simple moving average, `ρ_t`.
    pub fn sma_length(&self, t: u64) -> f64 {
        let b2 = self.cfg.beta2;
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let b2t = b2.powi(t as i32);
        rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// One update of `params` against `grad` with learning rate `lr`.
    pub fn update(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        let scale = match self.cfg.max_grad_norm {
            Some(max) => {
                let norm = grad_norm(grad);
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let t = self.step;
        let OptimizerConfig { beta1, beta2, eps, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let rho = self.sma_length(t);
        let rect = (rho > 4.0)
            .then(|| ((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)).sqrt());
        let grads = grad.named();
        let mut off = 0;
        for ((_, p), (_, g)) in params.named_mut().into_iter().zip(grads) {
            let (pd, gd) = (p.data_mut(), g.data());
            let m = &mut self.m[off..off + pd.len()];
            let v = &mut self.v[off..off + pd.len()];
            for i in 0..pd.len() {
                let gi = scale * gd[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                pd[i] -= match rect {
                    Some(r) => lr * r * m_hat / ((v[i] / bc2).sqrt() + eps),
                    None => lr * m_hat,
                };
            }
            off += pd.len();
        }
    }
}

pub fn grad_norm(grad: &ModelParams) -> f64 {
    grad.named().iter().flat_map(|(_, t)| t.data()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Lookahead around an inner optimiser: every `k` fast steps the slow
/// weights move `alpha` of the way toward the fast ones and the fast weights
/// restart from there.
#[derive(Debug, Clone)]
pub struct Lookahead {
    pub inner: RAdam,
    slow: ModelParams,
    k: usize,
    alpha: f64,
    since_sync: usize,
}

impl Lookahead {
    pub fn new(cfg: OptimizerConfig, params: &ModelParams) -> Self {
        Self {
            inner: RAdam::new(cfg, params.num_parameters()),
            slow: params.clone(),
            k: cfg.lookahead_k.max(1),
            alpha: cfg.lookahead_alpha,
            since_sync: 0,
        }
    }

    pub fn step(&mut self, fast: &mut ModelParams, grad: &ModelParams, lr: f64) {
        self.inner.update(fast, grad, lr);
        self.since_sync += 1;
        if self.since_sync == self.k {
            self.since_sync = 0;
            for ((_, s), (_, f)) in self.slow.named_mut().into_iter().zip(fast.named_mut()) {
                for (sv, fv) in s.data_mut().iter_mut().zip(f.data_mut()) {
                    *sv += self.alpha * (*fv - *sv);
                    *fv = *sv;
                }
            }
        }
    }

    /// Weights used for evaluation and checkpoints.
    pub fn slow(&self) -> &ModelParams {
        &self.slow
    }
}
