//! Stand-in frame encoder and frame-level positional encoding.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

/// Deterministic toy visual encoder.
///
/// A frame is tiled into `p` equal patches, each patch is reduced to its RGB
/// channel means, and the means go through a fixed seeded `d x 3` map.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    map: Matrix,
    tokens_per_frame: usize,
}

impl ToyEncoder {
    pub fn new(dim: usize, tokens_per_frame: usize, seed: u64) -> Result<Self> {
        if dim == 0 || tokens_per_frame == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        let mut rng = rng::stream(seed, rng::STREAM_ENCODER);
        let map = rng::uniform_matrix(&mut rng, dim, 3, 1.0);
        Ok(Self { map, tokens_per_frame })
    }

    pub fn dim(&self) -> usize {
        self.map.rows()
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    /// Encodes one `3 x H x W` channel-major frame into `d x p` tokens.
    pub fn encode(&self, frame: &[f64], height: usize, width: usize) -> Result<Matrix> {
        let plane = height * width;
        if frame.len() != 3 * plane {
            return Err(Error::LengthMismatch {
                left: 3 * plane,
                right: frame.len(),
            });
        }
        let (grid_h, grid_w) = patch_grid(self.tokens_per_frame, height, width)?;
        let (ph, pw) = (height / grid_h, width / grid_w);
        let mut means = Matrix::zeros(3, self.tokens_per_frame);
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                let patch = gy * grid_w + gx;
                for c in 0..3 {
                    let channel = &frame[c * plane..(c + 1) * plane];
                    let mut sum = 0.0;
                    for y in gy * ph..(gy + 1) * ph {
                        sum += channel[y * width + gx * pw..y * width + (gx + 1) * pw]
                            .iter()
                            .sum::<f64>();
                    }
                    means.set(c, patch, sum / (ph * pw) as f64);
                }
            }
        }
        self.map.matmul(&means)
    }
}

/// The most square `rows x cols` patch grid with `rows * cols == p` that tiles `H x W`.
pub fn patch_grid(p: usize, height: usize, width: usize) -> Result<(usize, usize)> {
    (1..=p)
        .filter(|gh| p.is_multiple_of(*gh))
        .map(|gh| (gh, p / gh))
        .filter(|&(gh, gw)| height.is_multiple_of(gh) && width.is_multiple_of(gw))
        .min_by_key(|&(gh, gw)| gh.abs_diff(gw))
        .ok_or(Error::InvalidPatchCount {
            tokens: p,
            height,
            width,
        })
}

/// Sinusoidal encoding of timestamp `t`: entry `2j` is `sin(t / 10000^(2j/d))`,
/// entry `2j + 1` is `cos` of the same angle.
pub fn positional_encoding(t: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let pair = (i / 2 * 2) as f64;
            let angle = t as f64 / libm::pow(10_000.0, pair / dim as f64);
            if i % 2 == 0 {
                libm::sin(angle)
            } else {
                libm::cos(angle)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_frame_gives_identical_columns() {
        let enc = ToyEncoder::new(6, 4, 1).unwrap();
        let tokens = enc.encode(&vec![0.25; 3 * 16], 4, 4).unwrap();
        assert_eq!(tokens.shape(), (6, 4));
        for c in 1..4 {
            assert_eq!(tokens.column(c), tokens.column(0));
        }
    }

    #[test]
    fn patch_means_land_in_grid_order() {
        let enc = ToyEncoder {
            map: Matrix::from_rows(&[&[1.0, 0.0, 0.0]]).unwrap(),
            tokens_per_frame: 4,
        };
        // Red plane with quadrants 0.1, 0.2 / 0.3, 0.4.
        let mut frame = vec![0.0; 48];
        for y in 0..4 {
            for x in 0..4 {
                frame[y * 4 + x] = 0.1 * (1 + (y / 2) * 2 + x / 2) as f64;
            }
        }
        let tokens = enc.encode(&frame, 4, 4).unwrap();
        for (a, b) in tokens.as_slice().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn seeds_differ() {
        let frame: Vec<f64> = (0..48).map(|i| i as f64 / 48.0).collect();
        let a = ToyEncoder::new(4, 4, 1).unwrap().encode(&frame, 4, 4).unwrap();
        let b = ToyEncoder::new(4, 4, 2).unwrap().encode(&frame, 4, 4).unwrap();
        let again = ToyEncoder::new(4, 4, 1).unwrap().encode(&frame, 4, 4).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, again);
    }

    #[test]
    fn invalid_patch_count() {
        assert_eq!(patch_grid(16, 8, 8), Ok((4, 4)));
        assert_eq!(patch_grid(2, 3, 4), Ok((1, 2)));
        assert!(matches!(patch_grid(5, 4, 4), Err(Error::InvalidPatchCount { .. })));
        let enc = ToyEncoder::new(2, 9, 0).unwrap();
        assert!(enc.encode(&vec![0.0; 48], 4, 4).is_err());
    }

    #[test]
    fn positional_encoding_values() {
        let pe0 = positional_encoding(0, 6);
        assert_eq!(pe0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let pe1 = positional_encoding(1, 4);
        let expected = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (a, b) in pe1.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        for t in [3, 57, 1000] {
            assert!(positional_encoding(t, 7).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
