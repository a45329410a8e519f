//! Local memory, query bank and global memory.
//!
//! * [`LocalMemory`] concatenates the encoded tokens of every frame seen so far in
//!   the current event (`d x n*p`). It is the key/value source for cross-attention.
//! * [`QueryBank`] collects one `d x q` query block per timestep of the event.
//! * [`GlobalMemory`] concatenates query banks across events. When it grows past
//!   its capacity, the most similar adjacent pair of blocks is replaced by its
//!   element-wise mean until the bound holds again.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{cosine, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMemory {
    dim: usize,
    tokens_per_frame: Option<usize>,
    frames: usize,
    tokens: Matrix,
}

impl LocalMemory {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tokens_per_frame: None,
            frames: 0,
            tokens: Matrix::zeros(dim, 0),
        }
    }

    /// Appends one frame's `d x p` tokens. Earlier columns are untouched.
    pub fn append(&mut self, frame: &Matrix) -> Result<()> {
        let p = *self.tokens_per_frame.get_or_insert(frame.cols());
        if frame.rows() != self.dim || frame.cols() != p {
            return Err(Error::ShapeMismatch {
                op: "local memory append",
                left_rows: self.dim,
                left_cols: p,
                right_rows: frame.rows(),
                right_cols: frame.cols(),
            });
        }
        self.tokens = Matrix::hcat(&[&self.tokens, frame])?;
        self.frames += 1;
        Ok(())
    }

    pub fn clear(&mut self) {
        *self = Self::new(self.dim);
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryBank {
    blocks: Vec<Matrix>,
}

impl QueryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn collect(&mut self, block: Matrix) -> Result<()> {
        if let Some(first) = self.blocks.first() {
            if first.shape() != block.shape() {
                return Err(Error::ShapeMismatch {
                    op: "query bank collect",
                    left_rows: first.rows(),
                    left_cols: first.cols(),
                    right_rows: block.rows(),
                    right_cols: block.cols(),
                });
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total token count, `q * n`.
    pub fn width(&self) -> usize {
        self.blocks.iter().map(Matrix::cols).sum()
    }

    /// Blocks concatenated along the token axis.
    pub fn concat(&self) -> Option<Matrix> {
        if self.blocks.is_empty() {
            return None;
        }
        let refs: Vec<&Matrix> = self.blocks.iter().collect();
        Matrix::hcat(&refs).ok()
    }
}

/// Maximum number of blocks kept in global memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Capacity {
    #[default]
    Unbounded,
    /// `Blocks(0)` disables the global memory entirely.
    Blocks(usize),
}

impl Capacity {
    pub const DEFAULT_BLOCKS: usize = 20;

    fn exceeded_by(self, len: usize) -> bool {
        match self {
            Capacity::Unbounded => false,
            Capacity::Blocks(cap) => len > cap,
        }
    }
}

/// A global-memory block and the appended blocks it averages.
///
/// `sources` holds `(append index, weight)` pairs; the block equals the
/// weighted sum of those originals. Weights of a block always sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBlock {
    pub tokens: Matrix,
    pub sources: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalMemory {
    capacity: Capacity,
    blocks: Vec<MemoryBlock>,
    appended: usize,
}

impl GlobalMemory {
    pub fn new(capacity: Capacity) -> Self {
        Self {
            capacity,
            blocks: Vec::new(),
            appended: 0,
        }
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[MemoryBlock] {
        &self.blocks
    }

    /// Number of blocks ever appended, merged or not.
    pub fn appended(&self) -> usize {
        self.appended
    }

    /// All blocks concatenated along the token axis, `None` when empty.
    pub fn tokens(&self) -> Option<Matrix> {
        if self.blocks.is_empty() {
            return None;
        }
        let refs: Vec<&Matrix> = self.blocks.iter().map(|b| &b.tokens).collect();
        Matrix::hcat(&refs).ok()
    }

    /// Appends a finished event's query bank, then compresses down to capacity.
    pub fn append_event(&mut self, bank: &QueryBank) -> Result<()> {
        if bank.is_empty() {
            return Err(Error::Empty("query bank"));
        }
        if let (Some(first), Some(incoming)) = (self.blocks.first(), bank.blocks().first()) {
            if first.tokens.shape() != incoming.shape() {
                return Err(Error::ShapeMismatch {
                    op: "global memory append",
                    left_rows: first.tokens.rows(),
                    left_cols: first.tokens.cols(),
                    right_rows: incoming.rows(),
                    right_cols: incoming.cols(),
                });
            }
        }
        for block in bank.blocks() {
            self.blocks.push(MemoryBlock {
                tokens: block.clone(),
                sources: alloc::vec![(self.appended, 1.0)],
            });
            self.appended += 1;
        }
        self.compress();
        Ok(())
    }

    /// Merges adjacent blocks until the capacity bound holds.
    ///
    /// Each step averages the adjacent pair with the highest flattened cosine
    /// similarity, preferring the earlier pair on ties.
    pub fn compress(&mut self) {
        if self.capacity == Capacity::Blocks(0) {
            self.blocks.clear();
            return;
        }
        while self.capacity.exceeded_by(self.blocks.len()) {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for i in 0..self.blocks.len() - 1 {
                let sim = block_similarity(&self.blocks[i].tokens, &self.blocks[i + 1].tokens);
                if sim > best_sim {
                    best_sim = sim;
                    best = i;
                }
            }
            let right = self.blocks.remove(best + 1);
            let left = &mut self.blocks[best];
            left.tokens = left
                .tokens
                .add(&right.tokens)
                .expect("global memory blocks share a shape")
                .scale(0.5);
            let mut sources: Vec<(usize, f64)> = left
                .sources
                .iter()
                .chain(&right.sources)
                .map(|&(i, w)| (i, 0.5 * w))
                .collect();
            sources.sort_by_key(|&(i, _)| i);
            left.sources = sources;
        }
    }
}

/// Flattened cosine; two zero blocks count as identical, one zero block as orthogonal.
fn block_similarity(a: &Matrix, b: &Matrix) -> f64 {
    match cosine(a.as_slice(), b.as_slice()) {
        Ok(sim) => sim,
        Err(_) if a.frobenius_norm() == 0.0 && b.frobenius_norm() == 0.0 => 1.0,
        Err(_) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn filled(v: f64, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| v + (r * cols + c) as f64 * 0.01)
    }

    fn bank(blocks: &[Matrix]) -> QueryBank {
        let mut b = QueryBank::new();
        for m in blocks {
            b.collect(m.clone()).unwrap();
        }
        b
    }

    #[test]
    fn local_memory_appends_columns() {
        let mut lm = LocalMemory::new(2);
        let f = filled(1.0, 2, 16);
        lm.append(&f).unwrap();
        assert_eq!(lm.tokens().shape(), (2, 16));
        lm.append(&filled(2.0, 2, 16)).unwrap();
        lm.append(&filled(3.0, 2, 16)).unwrap();
        assert_eq!(lm.tokens().cols(), 48);
        assert_eq!(lm.tokens().columns(0, 16), f);
        assert!(lm.append(&filled(0.0, 3, 16)).is_err());
        lm.clear();
        assert!(lm.is_empty());
    }

    #[test]
    fn query_bank_order_and_width() {
        let mut b = QueryBank::new();
        assert_eq!(b.width(), 0);
        let blocks: Vec<Matrix> = (0..3).map(|i| filled(i as f64, 2, 4)).collect();
        for m in &blocks {
            b.collect(m.clone()).unwrap();
        }
        assert_eq!(b.width(), 12);
        assert_eq!(b.blocks(), &blocks[..]);
        assert!(b.collect(Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn unbounded_is_concatenation() {
        let mut gm = GlobalMemory::new(Capacity::Unbounded);
        let e1: Vec<Matrix> = (0..3).map(|i| filled(i as f64, 2, 2)).collect();
        let e2: Vec<Matrix> = (3..6).map(|i| filled(i as f64, 2, 2)).collect();
        gm.append_event(&bank(&e1)).unwrap();
        gm.append_event(&bank(&e2)).unwrap();
        assert_eq!(gm.len(), 6);
        for (b, m) in gm.blocks().iter().zip(e1.iter().chain(&e2)) {
            assert_eq!(&b.tokens, m);
        }
    }

    #[test]
    fn capacity_bound_after_append() {
        let mut gm = GlobalMemory::new(Capacity::Blocks(4));
        let blocks: Vec<Matrix> = (0..3).map(|i| filled(i as f64 + 1.0, 2, 2)).collect();
        gm.append_event(&bank(&blocks)).unwrap();
        gm.append_event(&bank(&blocks)).unwrap();
        assert_eq!(gm.len(), 4);
        assert_eq!(gm.appended(), 6);
    }

    #[test]
    fn identical_pair_merge_is_lossless() {
        let a = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[&[0.0, 1.0]]).unwrap();
        let mut gm = GlobalMemory::new(Capacity::Blocks(2));
        gm.append_event(&bank(&[a.clone(), a.clone(), b.clone()])).unwrap();
        assert_eq!(gm.len(), 2);
        assert_eq!(gm.blocks()[0].tokens, a);
        assert_eq!(gm.blocks()[1].tokens, b);
        assert_eq!(gm.blocks()[0].sources, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn compress_at_cap_is_noop() {
        let mut gm = GlobalMemory::new(Capacity::Blocks(3));
        let blocks: Vec<Matrix> = (0..3).map(|i| filled(i as f64, 2, 2)).collect();
        gm.append_event(&bank(&blocks)).unwrap();
        let before = gm.clone();
        gm.compress();
        assert_eq!(gm, before);
    }

    #[test]
    fn zero_capacity_disables_memory() {
        let mut gm = GlobalMemory::new(Capacity::Blocks(0));
        gm.append_event(&bank(&[filled(1.0, 2, 2)])).unwrap();
        assert!(gm.is_empty());
        assert_eq!(gm.tokens(), None);
    }

    #[test]
    fn empty_bank_rejected() {
        let mut gm = GlobalMemory::new(Capacity::Unbounded);
        assert_eq!(gm.append_event(&QueryBank::new()), Err(Error::Empty("query bank")));
    }

    #[test]
    fn zero_blocks_merge_first() {
        let z = Matrix::zeros(1, 2);
        let a = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let mut gm = GlobalMemory::new(Capacity::Blocks(2));
        gm.append_event(&bank(&[a.clone(), z.clone(), z.clone()])).unwrap();
        assert_eq!(gm.blocks()[0].tokens, a);
        assert_eq!(gm.blocks()[1].tokens, z);
    }
}
