//! Cohort cross-validation plans and the ablation matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::make_samples;
use super::metrics::{aggregate, majority_label, scores, Scores};
use super::predict::{predict, score_predictions};
use super::trainer::{train_model, GridResult};
use crate::dataio::{Recording, RoomVocabulary};
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CvMode {
    #[serde(rename = "all-hc")]
    AllHc,
    #[serde(rename = "loo-hc")]
    LooHc,
    #[serde(rename = "loo-pd")]
    LooPd,
}

impl CvMode {
    pub fn name(self) -> &'static str {
        match self {
            CvMode::AllHc => "all-hc",
            CvMode::LooHc => "loo-hc",
            CvMode::LooPd => "loo-pd",
        }
    }
}

impl fmt::Display for CvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all-hc" => Ok(CvMode::AllHc),
            "loo-hc" => Ok(CvMode::LooHc),
            "loo-pd" => Ok(CvMode::LooPd),
            _ => Err(Error::Config(format!("unknown cv mode `{s}`; expected all-hc, loo-hc or loo-pd"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cohort {
    Healthy,
    Parkinsons,
}

/// Cohort from the subject id prefix (`HC…` / `PD…`, any case).
pub fn cohort(subject: &str) -> Result<Cohort> {
    let prefix = subject.get(..2).map(str::to_ascii_uppercase);
    match prefix.as_deref() {
        Some("HC") => Ok(Cohort::Healthy),
        Some("PD") => Ok(Cohort::Parkinsons),
        _ => Err(Error::Plan(format!("subject `{subject}` has no HC/PD prefix"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Training subject for leave-one-out modes, `all-hc` otherwise.
    pub name: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub mode: CvMode,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn build(mode: CvMode, subjects: &[String]) -> Result<Self> {
        let unique: BTreeSet<&String> = subjects.iter().collect();
        let (mut hc, mut pd) = (Vec::new(), Vec::new());
        for s in unique {
            match cohort(s)? {
                Cohort::Healthy => hc.push(s.clone()),
                Cohort::Parkinsons => pd.push(s.clone()),
            }
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Plan(format!("{mode} needs {what}")))
            }
        };
        let folds = match mode {
            CvMode::AllHc => {
                need(!hc.is_empty() && !pd.is_empty(), "at least one HC and one PD subject")?;
                vec![Fold {
                    name: "all-hc".into(),
                    train: hc,
                    test: pd,
                }]
            }
            CvMode::LooHc => {
                need(!hc.is_empty() && !pd.is_empty(), "at least one HC and one PD subject")?;
                hc.iter()
                    .map(|h| Fold {
                        name: h.clone(),
                        train: vec![h.clone()],
                        test: pd.clone(),
                    })
                    .collect()
            }
            CvMode::LooPd => {
                need(pd.len() >= 2, "at least two PD subjects")?;
                pd.iter()
                    .map(|p| Fold {
                        name: p.clone(),
                        train: vec![p.clone()],
                        test: pd.iter().filter(|q| *q != p).cloned().collect(),
                    })
                    .collect()
            }
        };
        Ok(Self { mode, folds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub subject: String,
    pub precision: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Accuracy of always predicting the training split's most common room.
    pub majority_accuracy: f64,
    pub selected: GridResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: CvMode,
    pub variant: Variant,
    pub folds: Vec<FoldScores>,
    pub mean: Scores,
    pub std: Scores,
}

impl MetricsReport {
    pub fn from_folds(mode: CvMode, variant: Variant, folds: Vec<FoldScores>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Empty("fold results"));
        }
        let s: Vec<Scores> = folds
            .iter()
            .map(|f| Scores {
                precision: f.precision,
                accuracy: f.accuracy,
                f1: f.f1,
            })
            .collect();
        let (mean, std) = aggregate(&s);
        Ok(Self {
            mode,
            variant,
            folds,
            mean,
            std,
        })
    }
}

fn select<'a>(recordings: &'a [Recording], subjects: &[String]) -> Vec<&'a Recording> {
    recordings.iter().filter(|r| subjects.contains(&r.subject_id)).collect()
}

/// Trains on the fold's training subjects and scores the non-overlapping
/// windows of its test subjects.
pub fn run_fold(
    recordings: &[Recording],
    vocab: &RoomVocabulary,
    fold: &Fold,
    cfg: &TrainConfig,
    non_adjacent: &[[String; 2]],
    seed: u64,
) -> Result<FoldScores> {
    let train = select(recordings, &fold.train);
    let test = select(recordings, &fold.test);
    let trained = train_model(&train, vocab, cfg, non_adjacent, seed)?;
    let model = &trained.fitted.model;
    let samples = make_samples(&test, &trained.norm, model.window, model.window)?;
    if samples.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mask = super::data::forbidden_mask(vocab, &trained.checkpoint.forbidden_transitions)?;
    let pred = predict(&trained.params, model, &samples, &mask)?;
    let s = score_predictions(&pred, &samples, vocab.len())?;
    let train_labels: Vec<usize> = train
        .iter()
        .flat_map(|r| r.frames.iter().filter(|f| !f.missing).filter_map(|f| f.room))
        .collect();
    let majority = majority_label(&train_labels, vocab.len()).ok_or(Error::Empty("training labels"))?;
    let truth: Vec<usize> = samples.iter().flat_map(|w| w.labels.iter().copied()).collect();
    let baseline = scores(&vec![majority; truth.len()], &truth, vocab.len())?;
    Ok(FoldScores {
        subject: fold.name.clone(),
        precision: s.precision,
        accuracy: s.accuracy,
        f1: s.f1,
        majority_accuracy: baseline.accuracy,
        selected: trained.fitted.selected,
    })
}

fn subjects(recordings: &[Recording]) -> Vec<String> {
    let set: BTreeSet<&String> = recordings.iter().map(|r| &r.subject_id).collect();
    set.into_iter().cloned().collect()
}

/// Every fold of `mode`, in parallel; fold `i` trains with seed path `[i]`.
pub fn cross_validate(
    recordings: &[Recording],
    vocab: &RoomVocabulary,
    mode: CvMode,
    cfg: &TrainConfig,
    non_adjacent: &[[String; 2]],
) -> Result<MetricsReport> {
    let plan = FoldPlan::build(mode, &subjects(recordings))?;
    let folds = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(recordings, vocab, f, cfg, non_adjacent, seed::derive_seed(cfg.seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_folds(mode, cfg.variant, folds)
}

/// All six variants over the same folds and seeds.
pub fn ablate(
    recordings: &[Recording],
    vocab: &RoomVocabulary,
    mode: CvMode,
    cfg: &TrainConfig,
    non_adjacent: &[[String; 2]],
) -> Result<Vec<MetricsReport>> {
    Variant::ALL
        .par_iter()
        .map(|&variant| {
            let cfg = TrainConfig { variant, ..cfg.clone() };
            cross_validate(recordings, vocab, mode, &cfg, non_adjacent)
        })
        .collect()
}
