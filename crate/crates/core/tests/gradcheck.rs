mod common;

use common::{random_batch, random_params, tiny_config};
use dcmn::model::Variant;
use dcmn::train::check_model_gradients;

const TOLERANCE: f64 = 1e-4;

fn check(variant: Variant, dropout_seed: Option<u64>, forbidden: &[bool]) {
    check_with_labels(variant, dropout_seed, forbidden, None)
}

fn check_with_labels(variant: Variant, dropout_seed: Option<u64>, forbidden: &[bool], gold: Option<Vec<usize>>) {
    let cfg = tiny_config(variant);
    let params = random_params(&cfg, 17);
    let (batch, random_labels, _) = random_batch(&cfg, 2, 23);
    let labels = gold.unwrap_or(random_labels);
    let reports = check_model_gradients(&cfg, &params, &batch, &labels, forbidden, dropout_seed, 1e-5).unwrap();
    let worst = reports
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .unwrap();
    for r in &reports {
        assert!(
            r.max_relative_error <= TOLERANCE,
            "{variant}: {} relative error {:.3e}",
            r.op,
            r.max_relative_error
        );
    }
    println!("{variant}: {} groups, worst {} at {:.3e}", reports.len(), worst.op, worst.max_relative_error);
}

#[test]
fn full_model_inference_mode() {
    check(Variant::Full, None, &[]);
}

#[test]
fn full_model_with_fixed_dropout_masks() {
    check(Variant::Full, Some(99), &[]);
}

#[test]
fn every_ablation_variant() {
    for v in Variant::ALL {
        check(v, Some(5), &[]);
    }
}

#[test]
fn masked_transitions() {
    let mut forbidden = vec![false; 9];
    forbidden[2] = true;
    forbidden[6] = true;
    // gold paths never use the forbidden 0<->2 moves
    check_with_labels(Variant::Full, None, &forbidden, Some(vec![0, 1, 1, 2, 2, 2, 1, 0]));
}
