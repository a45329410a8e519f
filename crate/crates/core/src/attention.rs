//! Multi-head scaled dot-product attention over column token matrices.
//!
//! Queries `Xq` (`d x nq`) attend over keys/values `Xkv` (`d x nk`):
//!
//! ```text
//! Q = Wq Xq,  K = Wk Xkv,  V = Wv Xkv
//! per head h (rows split evenly):
//!   A_h   = softmax_rows(Q_h^T K_h / sqrt(d / heads))     nq x nk
//!   Out_h = V_h A_h^T                                      d/heads x nq
//! ```
//!
//! The backward pass returns gradients for both inputs; the projections are
//! treated as frozen.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    heads: usize,
}

impl AttentionParams {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix, heads: usize) -> Result<Self> {
        let d = w_q.rows();
        for w in [&w_q, &w_k, &w_v] {
            if w.shape() != (d, d) {
                return Err(Error::ShapeMismatch {
                    op: "attention projection",
                    left_rows: d,
                    left_cols: d,
                    right_rows: w.rows(),
                    right_cols: w.cols(),
                });
            }
        }
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(alloc::format!(
                "dimension {d} not divisible into {heads} heads"
            )));
        }
        Ok(Self { w_q, w_k, w_v, heads })
    }

    /// Identity projections.
    pub fn identity(dim: usize, heads: usize) -> Result<Self> {
        let i = Matrix::identity(dim);
        Self::new(i.clone(), i.clone(), i, heads)
    }

    pub(crate) fn seeded(dim: usize, heads: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, stream);
        let scale = libm::sqrt(3.0 / dim as f64);
        let w_q = rng::uniform_matrix(&mut rng, dim, dim, scale);
        let w_k = rng::uniform_matrix(&mut rng, dim, dim, scale);
        let w_v = rng::uniform_matrix(&mut rng, dim, dim, scale);
        Self::new(w_q, w_k, w_v, heads)
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    queries: Matrix,
    keys: Matrix,
    values: Matrix,
    /// Row-stochastic weights, one `nq x nk` matrix per head.
    pub weights: Vec<Matrix>,
}

pub fn forward(params: &AttentionParams, xq: &Matrix, xkv: &Matrix) -> Result<(Matrix, AttentionCache)> {
    if xkv.cols() == 0 {
        return Err(Error::Empty("attention keys"));
    }
    let queries = params.w_q.matmul(xq)?;
    let keys = params.w_k.matmul(xkv)?;
    let values = params.w_v.matmul(xkv)?;
    let dh = params.head_dim();
    let scale = 1.0 / libm::sqrt(dh as f64);

    let mut out = Matrix::zeros(params.dim(), xq.cols());
    let mut weights = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let rows = h * dh..(h + 1) * dh;
        let qh = queries.row_block(rows.start, rows.end);
        let kh = keys.row_block(rows.start, rows.end);
        let vh = values.row_block(rows.start, rows.end);
        let a = qh.t_matmul(&kh)?.scale(scale).softmax_rows();
        let oh = vh.matmul_t(&a)?;
        write_rows(&mut out, rows.start, &oh);
        weights.push(a);
    }
    Ok((
        out,
        AttentionCache {
            queries,
            keys,
            values,
            weights,
        },
    ))
}

/// Gradients of the inputs `(d_xq, d_xkv)` given the output gradient.
pub fn backward(params: &AttentionParams, cache: &AttentionCache, d_out: &Matrix) -> Result<(Matrix, Matrix)> {
    let dh = params.head_dim();
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut d_queries = Matrix::zeros(cache.queries.rows(), cache.queries.cols());
    let mut d_keys = Matrix::zeros(cache.keys.rows(), cache.keys.cols());
    let mut d_values = Matrix::zeros(cache.values.rows(), cache.values.cols());
    for (h, a) in cache.weights.iter().enumerate() {
        let start = h * dh;
        let end = start + dh;
        let d_oh = d_out.row_block(start, end);
        let qh = cache.queries.row_block(start, end);
        let kh = cache.keys.row_block(start, end);
        let vh = cache.values.row_block(start, end);

        let d_vh = d_oh.matmul(a)?;
        let d_a = d_oh.t_matmul(&vh)?;
        let d_s = softmax_backward(a, &d_a).scale(scale);
        let d_qh = kh.matmul_t(&d_s)?;
        let d_kh = qh.matmul(&d_s)?;

        write_rows(&mut d_queries, start, &d_qh);
        write_rows(&mut d_keys, start, &d_kh);
        write_rows(&mut d_values, start, &d_vh);
    }
    let d_xq = params.w_q.t_matmul(&d_queries)?;
    let d_xkv = params.w_k.t_matmul(&d_keys)?.add(&params.w_v.t_matmul(&d_values)?)?;
    Ok((d_xq, d_xkv))
}

/// `dS = A * (dA - rowsum(dA * A))` for a row softmax `A`.
fn softmax_backward(a: &Matrix, d_a: &Matrix) -> Matrix {
    let mut d_s = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let inner: f64 = a.row(r).iter().zip(d_a.row(r)).map(|(x, y)| x * y).sum();
        for c in 0..a.cols() {
            d_s.set(r, c, a.get(r, c) * (d_a.get(r, c) - inner));
        }
    }
    d_s
}

fn write_rows(dst: &mut Matrix, start: usize, src: &Matrix) {
    let cols = dst.cols();
    dst.as_mut_slice()[start * cols..(start + src.rows()) * cols].copy_from_slice(src.as_slice());
}
