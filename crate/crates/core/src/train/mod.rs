//! Objective, optimiser, training loop, metrics and the cross-validation
//! and ablation harnesses.

mod config;
mod cv;
mod data;
mod gradcheck;
mod loss;
mod metrics;
mod optim;
mod predict;
mod report;
mod trainer;

pub use config::{GridPoint, TrainConfig};
pub use cv::{ablate, cohort, cross_validate, run_fold, Cohort, CvMode, Fold, FoldPlan, FoldScores, MetricsReport};
pub use data::{fit_training_norm, forbidden_mask, imputed_frames, make_samples, split_validation};
pub use gradcheck::check_model_gradients;
pub use loss::{
    backcast_loss, batch_loss, cross_entropy_with_grad, effective_transitions, huber, huber_grad, loss_and_grad,
    total_loss, LossParts,
};
pub use metrics::{aggregate, majority_label, mean_std, scores, Confusion, Scores};
pub use optim::{Lookahead, OptimizerConfig, RAdam};
pub use predict::{evaluate, predict, score_predictions};
pub use report::{metrics_csv, training_log_csv};
pub use trainer::{
    fit, resume_model, train_model, train_run, EpochLog, Fitted, GridResult, RunSpec, Snapshot, Start, TrainRun,
    TrainedModel, DIVERGENCE_RATIO,
};
