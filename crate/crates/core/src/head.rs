//! Linear classifier stub standing in for the language model.
//!
//! `logits = projection * flatten(Z_v)` with row-major flattening, and the loss
//! is the cross entropy of `softmax(logits)` against a single target class.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHead {
    pub projection: Matrix,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadLoss {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// Same shape as the projection.
    pub d_projection: Matrix,
    /// Same shape as the input token matrix.
    pub d_input: Matrix,
}

impl ToyHead {
    pub fn new(projection: Matrix, target: usize) -> Result<Self> {
        let classes = projection.rows();
        if classes < 2 {
            return Err(Error::Config(alloc::format!(
                "classifier needs at least 2 classes, got {classes}"
            )));
        }
        if target >= classes {
            return Err(Error::InvalidTarget { target, classes });
        }
        Ok(Self { projection, target })
    }

    /// Seeded projection for `input_len` flattened inputs.
    pub fn seeded(classes: usize, input_len: usize, target: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, rng::STREAM_HEAD);
        let scale = libm::sqrt(3.0 / input_len.max(1) as f64);
        Self::new(rng::uniform_matrix(&mut rng, classes, input_len, scale), target)
    }

    pub fn classes(&self) -> usize {
        self.projection.rows()
    }
}

pub fn head_loss(z_v: &Matrix, head: &ToyHead) -> Result<HeadLoss> {
    let n = z_v.rows() * z_v.cols();
    if head.projection.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "head projection",
            left_rows: head.projection.rows(),
            left_cols: head.projection.cols(),
            right_rows: n,
            right_cols: 1,
        });
    }
    let input = z_v.as_slice();
    let logits: Vec<f64> = (0..head.classes())
        .map(|c| crate::tensor::dot(head.projection.row(c), input))
        .collect();
    let mut probs = logits.clone();
    crate::tensor::softmax_in_place(&mut probs);

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
    let loss = (lse - logits[head.target]).max(0.0);

    // dL/dlogits = softmax - onehot
    let mut d_logits = probs;
    d_logits[head.target] -= 1.0;

    let d_projection = Matrix::from_fn(head.classes(), n, |c, j| d_logits[c] * input[j]);
    let mut d_flat = alloc::vec![0.0; n];
    for (c, g) in d_logits.iter().enumerate() {
        for (d, w) in d_flat.iter_mut().zip(head.projection.row(c)) {
            *d += g * w;
        }
    }
    Ok(HeadLoss {
        loss,
        logits,
        d_projection,
        d_input: Matrix::new(z_v.rows(), z_v.cols(), d_flat)?,
    })
}
