//! Classification metrics in percent.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// `n x n` counts, `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    n: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_labels(pred: &[usize], truth: &[usize], n: usize) -> Result<Self> {
        let mut c = Self::new(n);
        c.add(pred, truth)?;
        Ok(c)
    }

    pub fn add(&mut self, pred: &[usize], truth: &[usize]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::dim("predictions", truth.len(), pred.len()));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= self.n || t >= self.n {
                return Err(Error::dim("label id", format!("< {}", self.n), p.max(t)));
            }
            self.counts[t * self.n + p] += 1;
        }
        Ok(())
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Macro precision and F1 over the classes that occur in the truth or
    /// the predictions; a class never predicted has precision 0.
    pub fn scores(&self) -> Result<Scores> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Empty("test set"));
        }
        let n = self.n;
        let correct: u64 = (0..n).map(|i| self.count(i, i)).sum();
        let row = |i: usize| (0..n).map(|j| self.count(i, j)).sum::<u64>();
        let col = |j: usize| (0..n).map(|i| self.count(i, j)).sum::<u64>();
        let present: BTreeSet<usize> = (0..n).filter(|&i| row(i) + col(i) > 0).collect();
        let (mut p_sum, mut f_sum) = (0.0, 0.0);
        for &c in &present {
            let tp = self.count(c, c) as f64;
            let (predicted, actual) = (col(c) as f64, row(c) as f64);
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            p_sum += precision;
            f_sum += f1;
        }
        let k = present.len() as f64;
        Ok(Scores {
            precision: 100.0 * p_sum / k,
            accuracy: 100.0 * correct as f64 / total as f64,
            f1: 100.0 * f_sum / k,
        })
    }
}

pub fn scores(pred: &[usize], truth: &[usize], n: usize) -> Result<Scores> {
    Confusion::from_labels(pred, truth, n)?.scores()
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(folds: &[Scores]) -> (Scores, Scores) {
    let pick = |f: fn(&Scores) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
    let (p, a, f) = (pick(|s| s.precision), pick(|s| s.accuracy), pick(|s| s.f1));
    (
        Scores {
            precision: p.0,
            accuracy: a.0,
            f1: f.0,
        },
        Scores {
            precision: p.1,
            accuracy: a.1,
            f1: f.1,
        },
    )
}

/// Most frequent label, lowest id on ties.
pub fn majority_label(labels: &[usize], n: usize) -> Option<usize> {
    let mut counts = vec![0usize; n];
    for &l in labels {
        counts[l] += 1;
    }
    let best = (0..n).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))?;
    (counts[best] > 0).then_some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let s = scores(&y, &y, 3).unwrap();
        assert_eq!((s.precision, s.accuracy, s.f1), (100.0, 100.0, 100.0));
    }

    #[test]
    fn binary_confusion_by_hand() {
        // truth 0: 3 right, 1 wrong; truth 1: 2 right, 4 wrong
        let truth = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let pred = [0, 0, 0, 1, 1, 1, 0, 0, 0, 0];
        let s = scores(&pred, &truth, 2).unwrap();
        // class 0: p = 3/7, r = 3/4; class 1: p = 2/3, r = 2/6
        let (p0, r0, p1, r1) = (3.0 / 7.0, 0.75, 2.0 / 3.0, 1.0 / 3.0);
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        assert!((s.accuracy - 50.0).abs() < 1e-12);
        assert!((s.precision - 50.0 * (p0 + p1)).abs() < 1e-12);
        assert!((s.f1 - 50.0 * (f(p0, r0) + f(p1, r1))).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(scores(&[], &[], 2).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority_label(&[2, 1, 2, 1], 3), Some(1));
        assert_eq!(majority_label(&[], 3), None);
    }
}
