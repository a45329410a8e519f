use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Matrix;

// Distinct streams per parameter so adding one never reshuffles the others.
pub(crate) const STREAM_QUERY: u64 = 1;
pub(crate) const STREAM_SELF_ATTN: u64 = 2;
pub(crate) const STREAM_CROSS_ATTN: u64 = 3;
pub(crate) const STREAM_ENCODER: u64 = 4;
pub(crate) const STREAM_HEAD: u64 = 5;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform init in `[-scale, scale]`.
pub(crate) fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale))
}
