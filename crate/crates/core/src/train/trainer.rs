//! Mini-batch training with early stopping on validation accuracy.

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{GridPoint, TrainConfig};
use super::data::{fit_training_norm, forbidden_mask, make_samples, split_validation};
use super::loss::loss_and_grad;
use super::optim::Lookahead;
use super::predict::evaluate;
use crate::dataio::{NormStats, Recording, RoomVocabulary, Sample};
use crate::error::{Error, Result};
use crate::model::{Batch, Checkpoint, ModelConfig, ModelParams};
use crate::seed;

/// A batch loss this many times the run's first batch loss (or 1, if larger) counts as divergence.
pub const DIVERGENCE_RATIO: f64 = 100.0;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Best slow weights seen within the first `epoch_cap` epochs of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub epoch_cap: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub log: Vec<EpochLog>,
    /// One per requested cap, in the order given.
    pub snapshots: Vec<Snapshot>,
}

/// Where a run starts: fresh weights from the seed, or resumed weights
/// after `epoch` completed epochs.
pub enum Start {
    Fresh,
    Resume { params: ModelParams, epoch: usize },
}

pub struct RunSpec<'a> {
    pub cfg: &'a TrainConfig,
    pub model: ModelConfig,
    pub learning_rate: f64,
    /// Decoder mask used for validation accuracy.
    pub forbidden: &'a [bool],
    pub seed: u64,
}

/// Trains for `max(caps)` epochs (or until early stopping) and keeps the
/// best-validation weights at or before each cap. Without validation
/// windows the training windows are scored instead.
pub fn train_run(spec: &RunSpec<'_>, train: &[Sample], val: &[Sample], start: Start, caps: &[usize]) -> Result<TrainRun> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let cfg = spec.cfg;
    let model = &spec.model;
    model.validate()?;
    let val = if val.is_empty() { train } else { val };
    let max_cap = caps.iter().copied().max().ok_or(Error::Empty("epoch grid"))?;
    let (mut fast, offset) = match start {
        Start::Fresh => (ModelParams::init(model, &mut seed::rng(spec.seed, &[INIT_STREAM])), 0),
        Start::Resume { params, epoch } => (params, epoch),
    };
    let mut opt = Lookahead::new(cfg.optimizer, &fast);
    let mut grad = fast.zeros_like();
    let mut best: Option<(usize, f64, ModelParams)> = match offset {
        0 => None,
        e => Some((e, evaluate(&fast, model, val, spec.forbidden)?.accuracy, fast.clone())),
    };
    let mut snapshots: Vec<Option<Snapshot>> = vec![None; caps.len()];
    let mut log = Vec::new();
    let mut reference: Option<f64> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut completed = 0;
    for local in 1..=max_cap {
        let epoch = offset + local;
        order.sort_unstable();
        order.shuffle(&mut seed::rng(spec.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut dropout_rng = seed::rng(spec.seed, &[DROPOUT_STREAM, epoch as u64]);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_samples(&refs, model)?;
            let labels: Vec<usize> = refs.iter().flat_map(|s| s.labels.iter().copied()).collect();
            grad.fill(0.0);
            let loss = loss_and_grad(&fast, model, &batch, &labels, &[], Some(&mut dropout_rng), &mut grad)?.total();
            let limit = DIVERGENCE_RATIO * reference.get_or_insert(loss).max(1.0);
            if !loss.is_finite() || loss > limit {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("batch loss {loss:e} (limit {limit:e})"),
                });
            }
            opt.step(&mut fast, &grad, spec.learning_rate);
            if !fast.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: "non-finite parameters after update".into(),
                });
            }
            loss_sum += loss * refs.len() as f64;
        }
        let val_accuracy = evaluate(opt.slow(), model, val, spec.forbidden)?.accuracy;
        let train_loss = loss_sum / train.len() as f64;
        debug!("epoch {epoch}: loss {train_loss:.5}, validation accuracy {val_accuracy:.2}");
        log.push(EpochLog {
            epoch,
            train_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, opt.slow().clone()));
        }
        completed = local;
        record_caps(caps, local, &best, &mut snapshots);
        let best_epoch = best.as_ref().map_or(offset, |b| b.0);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            info!("early stop at epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    // caps beyond an early stop see the final best
    for (i, &cap) in caps.iter().enumerate() {
        if snapshots[i].is_none() && cap > completed {
            snapshots[i] = snapshot(cap, &best);
        }
    }
    Ok(TrainRun {
        log,
        snapshots: snapshots.into_iter().map(|s| s.expect("every cap recorded")).collect(),
    })
}

fn snapshot(cap: usize, best: &Option<(usize, f64, ModelParams)>) -> Option<Snapshot> {
    best.as_ref().map(|(e, a, p)| Snapshot {
        epoch_cap: cap,
        best_epoch: *e,
        val_accuracy: *a,
        params: p.clone(),
    })
}

fn record_caps(caps: &[usize], local: usize, best: &Option<(usize, f64, ModelParams)>, out: &mut [Option<Snapshot>]) {
    for (i, &cap) in caps.iter().enumerate() {
        if cap == local {
            out[i] = snapshot(cap, best);
        }
    }
}

/// Validation outcome of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub d_model: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: ModelConfig,
    pub params: ModelParams,
    pub selected: GridResult,
    pub grid: Vec<GridResult>,
    /// Epoch log of the selected run, up to its epoch budget.
    pub log: Vec<EpochLog>,
}

/// Grid search over (d_model, learning_rate, epochs); the highest
/// validation accuracy wins, earlier grid cells on ties.
pub fn fit(cfg: &TrainConfig, rooms: usize, train: &[Sample], val: &[Sample], forbidden: &[bool], seed: u64) -> Result<Fitted> {
    cfg.validate()?;
    let mut best: Option<Fitted> = None;
    let mut grid = Vec::new();
    for (gi, point) in cfg.grid().into_iter().enumerate() {
        let GridPoint { d_model, learning_rate } = point;
        let spec = RunSpec {
            cfg,
            model: cfg.model_config(d_model, rooms),
            learning_rate,
            forbidden,
            seed: seed::derive_seed(seed, &[gi as u64]),
        };
        info!("training d_model={d_model} lr={learning_rate} variant={}", cfg.variant);
        let run = train_run(&spec, train, val, Start::Fresh, &cfg.epochs)?;
        for snap in run.snapshots {
            let result = GridResult {
                d_model,
                learning_rate,
                epochs: snap.epoch_cap,
                best_epoch: snap.best_epoch,
                val_accuracy: snap.val_accuracy,
            };
            grid.push(result);
            if best.as_ref().is_none_or(|b| result.val_accuracy > b.selected.val_accuracy) {
                best = Some(Fitted {
                    model: spec.model.clone(),
                    params: snap.params,
                    selected: result,
                    grid: Vec::new(),
                    log: run.log.iter().filter(|l| l.epoch <= snap.epoch_cap).copied().collect(),
                });
            }
        }
    }
    let mut best = best.ok_or(Error::Empty("hyperparameter grid"))?;
    best.grid = grid;
    Ok(best)
}

/// A trained model with everything needed to write its artifacts.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub params: ModelParams,
    pub norm: NormStats,
    pub fitted: Fitted,
}

fn forbidden_for(vocab: &RoomVocabulary, cfg: &TrainConfig, pairs: &[[String; 2]]) -> Result<(Vec<[String; 2]>, Vec<bool>)> {
    let pairs = if cfg.mask_transitions { pairs.to_vec() } else { Vec::new() };
    let mask = forbidden_mask(vocab, &pairs)?;
    Ok((pairs, mask))
}

/// Normalises on `recordings`, holds out validation windows and runs the grid.
/// `non_adjacent` lists the room pairs masked when `cfg.mask_transitions` is set.
pub fn train_model(
    recordings: &[&Recording],
    vocab: &RoomVocabulary,
    cfg: &TrainConfig,
    non_adjacent: &[[String; 2]],
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let norm = fit_training_norm(recordings)?;
    let samples = make_samples(recordings, &norm, cfg.window, cfg.train_stride)?;
    if samples.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let (train, val) = split_validation(samples, cfg.validation_fraction, seed::derive_seed(seed, &[SPLIT_STREAM]));
    let (pairs, mask) = forbidden_for(vocab, cfg, non_adjacent)?;
    let fitted = fit(cfg, vocab.len(), &train, &val, &mask, seed)?;
    let checkpoint = Checkpoint::new(&fitted.model, vocab, &norm, fitted.selected.best_epoch, pairs, &fitted.params);
    Ok(TrainedModel {
        checkpoint,
        params: fitted.params.clone(),
        norm,
        fitted,
    })
}

/// Continues training from a checkpoint with a fresh optimiser at the first
/// grid learning rate for `max(cfg.epochs)` more epochs. The checkpoint's
/// architecture and normalisation are kept.
pub fn resume_model(
    checkpoint: &Checkpoint,
    recordings: &[&Recording],
    vocab: &RoomVocabulary,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    checkpoint.check_vocabulary(vocab)?;
    let model = checkpoint.config.clone();
    let norm = checkpoint.norm_stats.clone();
    let samples = make_samples(recordings, &norm, model.window, cfg.train_stride)?;
    if samples.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let (train, val) = split_validation(samples, cfg.validation_fraction, seed::derive_seed(seed, &[SPLIT_STREAM]));
    let mask = forbidden_mask(vocab, &checkpoint.forbidden_transitions)?;
    let learning_rate = cfg.learning_rate[0];
    let spec = RunSpec {
        cfg,
        model: model.clone(),
        learning_rate,
        forbidden: &mask,
        seed: seed::derive_seed(seed, &[checkpoint.epoch as u64]),
    };
    let start = Start::Resume {
        params: checkpoint.model_params()?,
        epoch: checkpoint.epoch,
    };
    let max = cfg.max_epochs();
    let run = train_run(&spec, &train, &val, start, &[max])?;
    let snap = run.snapshots.into_iter().next().expect("one cap");
    let selected = GridResult {
        d_model: model.d_model,
        learning_rate,
        epochs: checkpoint.epoch + max,
        best_epoch: snap.best_epoch,
        val_accuracy: snap.val_accuracy,
    };
    let new_checkpoint = Checkpoint::new(
        &model,
        vocab,
        &norm,
        snap.best_epoch,
        checkpoint.forbidden_transitions.clone(),
        &snap.params,
    );
    Ok(TrainedModel {
        checkpoint: new_checkpoint,
        params: snap.params.clone(),
        norm,
        fitted: Fitted {
            model,
            params: snap.params,
            selected,
            grid: vec![selected],
            log: run.log,
        },
    })
}
