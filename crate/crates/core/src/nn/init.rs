use rand::Rng;

use super::ops::LinearParams;
use super::tensor::Tensor2;

/// Uniform in `±sqrt(1 / fan_in)`.
pub fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor2 {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor2::from_vec(rows, cols, data).expect("init shape")
}

/// Affine layer with fan-in uniform weights and zero bias.
pub fn linear_params<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> LinearParams {
    LinearParams {
        weight: uniform_fan_in(output, input, input, rng),
        bias: Tensor2::zeros(1, output),
    }
}
