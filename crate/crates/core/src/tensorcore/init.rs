use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, fans taken from a `rows x cols` shape.
pub fn xavier_uniform(rows: usize, cols: usize, seed: u64) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt() as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("length matches shape")
}

/// Fixed absolute encodings: `P[t][2i] = sin(t / 10000^(2i/d))`, `P[t][2i+1] = cos(...)`.
pub fn sinusoidal_positions(len: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0f32; len * d_model];
    for t in 0..len {
        for j in 0..d_model {
            let pair = (j / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            data[t * d_model + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
        }
    }
    Tensor::matrix(len, d_model, data).expect("length matches shape")
}
