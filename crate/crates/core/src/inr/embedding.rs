use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};

use crate::error::{dims_mismatch, Error, Result};

pub const DEFAULT_SIGMA2: f64 = 16.0;
/// Coordinate dimensions.
pub const COORD_DIMS: usize = 2;

/// Frozen random Fourier features `r(z) = [sin(Ez); cos(Ez)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEmbedding {
    matrix: Array2<f64>,
    sigma2: f64,
}

impl FourierEmbedding {
    /// Draws `E` (m×2) with i.i.d. Normal(0, σ²) entries.
    pub fn sample(num_features: usize, sigma2: f64, rng: &mut impl Rng) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::InvalidArgument(
                "embedding needs at least one frequency".into(),
            ));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "embedding variance must be positive, got {sigma2}"
            )));
        }
        let normal = Normal::new(0.0, sigma2.sqrt()).expect("positive std");
        let matrix =
            Array2::from_shape_simple_fn((num_features, COORD_DIMS), || normal.sample(rng));
        Ok(Self { matrix, sigma2 })
    }

    pub fn from_matrix(matrix: Array2<f64>, sigma2: f64) -> Result<Self> {
        if matrix.ncols() != COORD_DIMS || matrix.nrows() == 0 {
            return Err(dims_mismatch(
                format!("m×{COORD_DIMS}"),
                format!("{:?}", matrix.dim()),
            ));
        }
        if let Some(index) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { matrix, sigma2 })
    }

    /// m, the number of frequencies; the embedding has 2m entries.
    pub fn num_features(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn output_width(&self) -> usize {
        2 * self.num_features()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn embed(&self, z: [f64; 2]) -> Vec<f64> {
        let m = self.num_features();
        let mut r = vec![0.0; 2 * m];
        for f in 0..m {
            let phase = self.matrix[[f, 0]] * z[0] + self.matrix[[f, 1]] * z[1];
            let (s, c) = phase.sin_cos();
            r[f] = s;
            r[m + f] = c;
        }
        r
    }

    /// Embeddings of every pixel coordinate `(i/H, j/W)`, one row per pixel in
    /// row-major order.
    pub fn embed_grid(&self, height: usize, width: usize) -> Array2<f64> {
        let m = self.num_features();
        let mut out = Array2::zeros((height * width, 2 * m));
        for (p, mut row) in out.outer_iter_mut().enumerate() {
            let r = self.embed(pixel_coordinate(p / width, p % width, height, width));
            row.as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(&r);
        }
        out
    }
}

pub fn pixel_coordinate(row: usize, col: usize, height: usize, width: usize) -> [f64; 2] {
    [row as f64 / height as f64, col as f64 / width as f64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{seeded_rng, RngStream};
    use proptest::prelude::*;

    fn emb(seed: u64) -> FourierEmbedding {
        FourierEmbedding::sample(
            16,
            DEFAULT_SIGMA2,
            &mut seeded_rng(seed, RngStream::Fourier),
        )
        .unwrap()
    }

    #[test]
    fn origin_embeds_to_sin_zero_cos_one() {
        let r = emb(1).embed([0.0, 0.0]);
        assert!(r[..16].iter().all(|&v| v == 0.0));
        assert!(r[16..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn seeded_embedding_is_bitwise_reproducible() {
        let a = emb(7).embed([0.3, 0.9]);
        let b = emb(7).embed([0.3, 0.9]);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(emb(7).matrix(), emb(8).matrix());
    }

    #[test]
    fn entries_have_requested_variance() {
        let e =
            FourierEmbedding::sample(20_000, 16.0, &mut seeded_rng(3, RngStream::Fourier)).unwrap();
        let n = e.matrix().len() as f64;
        let mean = e.matrix().sum() / n;
        let var = e.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var - 16.0).abs() < 0.4, "{var}");
    }

    #[test]
    fn grid_rows_match_pointwise() {
        let e = emb(2);
        let g = e.embed_grid(3, 5);
        for p in 0..15 {
            let r = e.embed(pixel_coordinate(p / 5, p % 5, 3, 5));
            assert_eq!(g.row(p).to_vec(), r);
        }
    }

    proptest! {
        #[test]
        fn squared_norm_is_m(z0 in 0.0f64..1.0, z1 in 0.0f64..1.0, seed in 0u64..100) {
            let r = emb(seed).embed([z0, z1]);
            let norm2: f64 = r.iter().map(|v| v * v).sum();
            prop_assert!((norm2 - 16.0).abs() < 1e-12);
        }
    }
}
