//! Linear-chain CRF over per-timestep room scores.
//!
//! All quantities live in log space: a label path `y` scores
//! `start[y₀] + Σₜ e[t][yₜ] + Σₜ trans[yₜ₋₁][yₜ]`, the loss is
//! `log Z − score(y)` and decoding is Viterbi. There are no end scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Per-timestep unnormalised room scores, `T x n`.
pub type Emissions = Tensor2;

/// Score that stands in for `−∞` on forbidden transitions.
pub const FORBIDDEN_SCORE: f64 = -1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// `scores[from][to]`.
    pub scores: Tensor2,
    /// `1 x n` scores for the first timestep.
    pub start: Tensor2,
    /// Row-major `n x n`; empty means nothing is forbidden.
    #[serde(default)]
    pub forbidden: Vec<bool>,
}

impl TransitionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            scores: Tensor2::zeros(n, n),
            start: Tensor2::zeros(1, n),
            forbidden: Vec::new(),
        }
    }

    pub fn new(scores: Tensor2, start: Vec<f64>) -> Result<Self> {
        if scores.rows() != scores.cols() || start.len() != scores.rows() {
            return Err(Error::dim(
                "TransitionMatrix",
                format!("{0}x{0} and {0}", start.len()),
                format!("{}x{}", scores.rows(), scores.cols()),
            ));
        }
        Ok(Self {
            scores,
            start: Tensor2::row_vector(start),
            forbidden: Vec::new(),
        })
    }

    pub fn num_labels(&self) -> usize {
        self.scores.rows()
    }

    /// Marks `from -> to` as impossible.
    pub fn forbid(&mut self, from: usize, to: usize) {
        let n = self.num_labels();
        if self.forbidden.is_empty() {
            self.forbidden = vec![false; n * n];
        }
        self.forbidden[from * n + to] = true;
    }

    /// Copy whose mask forbids every pair for which `allowed` is false.
    pub fn with_mask(&self, allowed: impl Fn(usize, usize) -> bool) -> Self {
        let n = self.num_labels();
        let mut out = self.clone();
        out.forbidden = (0..n * n).map(|k| !allowed(k / n, k % n)).collect();
        out
    }

    pub fn unmasked(&self) -> Self {
        let mut out = self.clone();
        out.forbidden.clear();
        out
    }

    #[inline]
    pub fn is_forbidden(&self, from: usize, to: usize) -> bool {
        !self.forbidden.is_empty() && self.forbidden[from * self.num_labels() + to]
    }

    #[inline]
    pub fn score(&self, from: usize, to: usize) -> f64 {
        if self.is_forbidden(from, to) {
            FORBIDDEN_SCORE
        } else {
            self.scores.get(from, to)
        }
    }

    #[inline]
    pub fn start_score(&self, label: usize) -> f64 {
        self.start.data()[label]
    }
}

fn check_shapes(e: &Emissions, tm: &TransitionMatrix) -> Result<()> {
    if e.cols() != tm.num_labels() {
        return Err(Error::dim("CRF emissions columns", tm.num_labels(), e.cols()));
    }
    Ok(())
}

fn check_labels(e: &Emissions, y: &[usize]) -> Result<()> {
    if y.len() != e.rows() {
        return Err(Error::dim("CRF label sequence", e.rows(), y.len()));
    }
    if let Some(bad) = y.iter().find(|&&l| l >= e.cols()) {
        return Err(Error::Domain(format!("label {bad} out of range for {} rooms", e.cols())));
    }
    Ok(())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Score of one label path.
pub fn path_score(e: &Emissions, y: &[usize], tm: &TransitionMatrix) -> Result<f64> {
    check_shapes(e, tm)?;
    check_labels(e, y)?;
    let mut s = 0.0;
    for (t, &l) in y.iter().enumerate() {
        s += if t == 0 {
            tm.start_score(l)
        } else {
            tm.score(y[t - 1], l)
        };
        s += e.get(t, l);
    }
    Ok(s)
}

/// Forward log-messages `α[t][j]`, including emission `t`.
fn forward_messages(e: &Emissions, tm: &TransitionMatrix) -> Tensor2 {
    let (t_len, n) = e.shape();
    let mut alpha = Tensor2::zeros(t_len, n);
    if t_len == 0 {
        return alpha;
    }
    for j in 0..n {
        alpha.set(0, j, tm.start_score(j) + e.get(0, j));
    }
    let mut buf = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alpha.get(t - 1, i) + tm.score(i, j);
            }
            alpha.set(t, j, log_sum_exp(&buf) + e.get(t, j));
        }
    }
    alpha
}

/// Backward log-messages `β[t][i]`, excluding emission `t`.
fn backward_messages(e: &Emissions, tm: &TransitionMatrix) -> Tensor2 {
    let (t_len, n) = e.shape();
    let mut beta = Tensor2::zeros(t_len, n);
    let mut buf = vec![0.0; n];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..n {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = tm.score(i, j) + e.get(t + 1, j) + beta.get(t + 1, j);
            }
            beta.set(t, i, log_sum_exp(&buf));
        }
    }
    beta
}

/// `log Σ_y exp(path_score(y))` by the forward algorithm.
pub fn log_partition(e: &Emissions, tm: &TransitionMatrix) -> Result<f64> {
    check_shapes(e, tm)?;
    if e.rows() == 0 {
        return Ok(0.0);
    }
    let alpha = forward_messages(e, tm);
    Ok(log_sum_exp(alpha.row(e.rows() - 1)))
}

/// `log Z − score(y)`, clamped at zero against rounding.
pub fn nll(e: &Emissions, y: &[usize], tm: &TransitionMatrix) -> Result<f64> {
    let gold = path_score(e, y, tm)?;
    Ok((log_partition(e, tm)? - gold).max(0.0))
}

/// Per-timestep posterior marginals `P(yₜ = i)`.
pub fn marginals(e: &Emissions, tm: &TransitionMatrix) -> Result<Tensor2> {
    check_shapes(e, tm)?;
    let alpha = forward_messages(e, tm);
    let beta = backward_messages(e, tm);
    let (t_len, n) = e.shape();
    let mut m = Tensor2::zeros(t_len, n);
    if t_len == 0 {
        return Ok(m);
    }
    let log_z = log_sum_exp(alpha.row(t_len - 1));
    for t in 0..t_len {
        for i in 0..n {
            m.set(t, i, (alpha.get(t, i) + beta.get(t, i) - log_z).exp());
        }
    }
    Ok(m)
}

/// Gradients of the NLL with respect to every CRF input.
#[derive(Debug, Clone)]
pub struct CrfGradient {
    pub emissions: Tensor2,
    pub scores: Tensor2,
    pub start: Vec<f64>,
}

/// NLL with gradients `marginals − gold indicators`. Forbidden entries get
/// zero transition gradient because their score is a constant.
pub fn nll_with_grad(e: &Emissions, y: &[usize], tm: &TransitionMatrix) -> Result<(f64, CrfGradient)> {
    check_shapes(e, tm)?;
    check_labels(e, y)?;
    let (t_len, n) = e.shape();
    let alpha = forward_messages(e, tm);
    let beta = backward_messages(e, tm);
    let log_z = if t_len == 0 { 0.0 } else { log_sum_exp(alpha.row(t_len - 1)) };
    let gold = path_score(e, y, tm)?;

    let mut de = Tensor2::zeros(t_len, n);
    let mut ds = Tensor2::zeros(n, n);
    let mut dstart = vec![0.0; n];
    for t in 0..t_len {
        for i in 0..n {
            de.set(t, i, (alpha.get(t, i) + beta.get(t, i) - log_z).exp());
        }
    }
    if t_len > 0 {
        dstart.copy_from_slice(de.row(0));
        dstart[y[0]] -= 1.0;
    }
    for t in 1..t_len {
        for i in 0..n {
            for j in 0..n {
                if tm.is_forbidden(i, j) {
                    continue;
                }
                let p = (alpha.get(t - 1, i) + tm.score(i, j) + e.get(t, j) + beta.get(t, j) - log_z).exp();
                ds.set(i, j, ds.get(i, j) + p);
            }
        }
        if !tm.is_forbidden(y[t - 1], y[t]) {
            ds.set(y[t - 1], y[t], ds.get(y[t - 1], y[t]) - 1.0);
        }
    }
    for (t, &l) in y.iter().enumerate() {
        de.set(t, l, de.get(t, l) - 1.0);
    }
    Ok((
        (log_z - gold).max(0.0),
        CrfGradient {
            emissions: de,
            scores: ds,
            start: dstart,
        },
    ))
}

/// Highest-scoring path and its score.
///
/// Ties are broken toward the lower label id, deciding from the last
/// timestep backwards. The returned score is `path_score` of the returned
/// labels.
pub fn viterbi(e: &Emissions, tm: &TransitionMatrix) -> Result<(Vec<usize>, f64)> {
    check_shapes(e, tm)?;
    let (t_len, n) = e.shape();
    if t_len == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut delta = vec![0.0; n];
    for (j, d) in delta.iter_mut().enumerate() {
        *d = tm.start_score(j) + e.get(0, j);
    }
    let mut back = vec![0usize; t_len * n];
    let mut next = vec![0.0; n];
    for t in 1..t_len {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let s = d + tm.score(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + e.get(t, j);
            back[t * n + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for j in 1..n {
        if delta[j] > delta[last] {
            last = j;
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * n + path[t]];
    }
    let score = path_score(e, &path, tm)?;
    Ok((path, score))
}

/// Row-wise argmax, lowest id on ties.
pub fn argmax_rows(e: &Emissions) -> Vec<usize> {
    (0..e.rows())
        .map(|t| {
            let row = e.row(t);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, t: usize, n: usize) -> (Emissions, TransitionMatrix) {
        let e = Tensor2::from_vec(t, n, (0..t * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let tm = TransitionMatrix::new(
            Tensor2::from_vec(n, n, (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        (e, tm)
    }

    fn all_paths(t: usize, n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..t {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..n).map(move |l| {
                        let mut q = p.clone();
                        q.push(l);
                        q
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn path_score_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (e, tm) = random_instance(&mut rng, 1, 3);
        assert_eq!(path_score(&e, &[2], &tm).unwrap(), tm.start_score(2) + e.get(0, 2));
        let z = TransitionMatrix::zeros(4);
        assert_eq!(path_score(&Tensor2::zeros(5, 4), &[0, 1, 2, 3, 0], &z).unwrap(), 0.0);

        let (e, tm) = random_instance(&mut rng, 4, 3);
        let y = [2, 0, 0, 1];
        let hand = tm.start.data()[2]
            + e.get(0, 2)
            + tm.scores.get(2, 0)
            + e.get(1, 0)
            + tm.scores.get(0, 0)
            + e.get(2, 0)
            + tm.scores.get(0, 1)
            + e.get(3, 1);
        assert!((path_score(&e, &y, &tm).unwrap() - hand).abs() < 1e-12);
        assert!(matches!(path_score(&e, &[0, 0, 0, 3], &tm), Err(Error::Domain(_))));
    }

    #[test]
    fn log_partition_examples() {
        let z = TransitionMatrix::zeros(3);
        assert!((log_partition(&Tensor2::zeros(1, 3), &z).unwrap() - 3.0f64.ln()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (e, tm) = random_instance(&mut rng, 3, 3);
        let brute: Vec<f64> = all_paths(3, 3).iter().map(|p| path_score(&e, p, &tm).unwrap()).collect();
        assert!((log_partition(&e, &tm).unwrap() - log_sum_exp(&brute)).abs() < 1e-9);

        let c = 1.7;
        let shifted = e.map(|v| v + c);
        let diff = log_partition(&shifted, &tm).unwrap() - log_partition(&e, &tm).unwrap();
        assert!((diff - 3.0 * c).abs() < 1e-12);
    }

    #[test]
    fn nll_examples() {
        let n = 4;
        let y = [0, 2, 2, 1, 3];
        let mut e = Tensor2::filled(5, n, -50.0);
        for (t, &l) in y.iter().enumerate() {
            e.set(t, l, 50.0);
        }
        assert!(nll(&e, &y, &TransitionMatrix::zeros(n)).unwrap() < 1e-6);

        let v = nll(&Tensor2::zeros(10, 6), &[0; 10], &TransitionMatrix::zeros(6)).unwrap();
        assert!((v - 10.0 * 6.0f64.ln()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e, tm) = random_instance(&mut rng, 3, 3);
        let y = [1, 1, 0];
        let z: f64 = all_paths(3, 3).iter().map(|p| path_score(&e, p, &tm).unwrap().exp()).sum();
        let p_gold = path_score(&e, &y, &tm).unwrap().exp() / z;
        assert!((nll(&e, &y, &tm).unwrap() + p_gold.ln()).abs() < 1e-10);
    }

    #[test]
    fn viterbi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e, tm) = random_instance(&mut rng, 1, 4);
        let (p, s) = viterbi(&e, &tm).unwrap();
        let scores: Vec<f64> = (0..4).map(|j| tm.start_score(j) + e.get(0, j)).collect();
        let best = (0..4).fold(0, |b, j| if scores[j] > scores[b] { j } else { b });
        assert_eq!(p, vec![best]);
        assert_eq!(s, scores[best]);

        let (e, tm) = random_instance(&mut rng, 4, 3);
        let paths = all_paths(4, 3);
        let best = paths
            .iter()
            .max_by(|a, b| path_score(&e, a, &tm).unwrap().total_cmp(&path_score(&e, b, &tm).unwrap()))
            .unwrap();
        assert_eq!(&viterbi(&e, &tm).unwrap().0, best);
    }

    #[test]
    fn forbidden_transition_is_never_decoded() {
        // kitchen=0, hallway=1, porch=2
        let mut tm = TransitionMatrix::zeros(3);
        tm.forbid(0, 2);
        let e = Tensor2::from_rows(&[[5.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.0, 9.0], [0.0, 0.0, 9.0]]).unwrap();
        let (p, s) = viterbi(&e, &tm).unwrap();
        assert!(p.windows(2).all(|w| !(w[0] == 0 && w[1] == 2)), "{p:?}");
        assert_eq!(s, path_score(&e, &p, &tm).unwrap());
        assert_eq!(viterbi(&e, &tm.unmasked()).unwrap().0, vec![0, 0, 2, 2]);
    }

    #[test]
    fn nll_gradient_is_marginals_minus_gold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (e, mut tm) = random_instance(&mut rng, 5, 4);
        tm.forbid(1, 3);
        let y = [0, 1, 2, 2, 3];
        let (_, g) = nll_with_grad(&e, &y, &tm).unwrap();
        let m = marginals(&e, &tm).unwrap();
        for t in 0..5 {
            for i in 0..4 {
                let gold = if y[t] == i { 1.0 } else { 0.0 };
                assert!((g.emissions.get(t, i) - (m.get(t, i) - gold)).abs() < 1e-12);
            }
        }
        let eps = 1e-5;
        let fd = crate::nn::finite_diff_grad(
            |v| {
                let e2 = Tensor2::from_vec(5, 4, v.to_vec()).unwrap();
                log_partition(&e2, &tm).unwrap() - path_score(&e2, &y, &tm).unwrap()
            },
            e.data(),
            eps,
        )
        .unwrap();
        for (a, b) in g.emissions.data().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
        let fd = crate::nn::finite_diff_grad(
            |v| {
                let mut tm2 = tm.clone();
                tm2.scores = Tensor2::from_vec(4, 4, v.to_vec()).unwrap();
                log_partition(&e, &tm2).unwrap() - path_score(&e, &y, &tm2).unwrap()
            },
            tm.scores.data(),
            eps,
        )
        .unwrap();
        for (a, b) in g.scores.data().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(g.scores.get(1, 3), 0.0);
    }
}
