//! Value containers shared by every stage: attenuation images, sinograms,
//! material label maps and the seeded random source.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dims_mismatch, Error, Result};

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// H×W field of attenuation values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(dims_mismatch(height * width, data.len()));
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        let mut g = Self::zeros(height, width);
        g.data.fill(value);
        g
    }

    /// Builds a grid from `f(row, col)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// `(min, max)` over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn ensure_same_dims(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(dims_mismatch(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

/// U×V projection data: one row of V detector readings per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn new(num_angles: usize, num_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if num_angles == 0 || num_detectors == 0 {
            return Err(Error::InvalidArgument(format!(
                "sinogram dimensions must be positive, got {num_angles}x{num_detectors}"
            )));
        }
        if data.len() != num_angles * num_detectors {
            return Err(dims_mismatch(num_angles * num_detectors, data.len()));
        }
        check_finite(&data)?;
        Ok(Self {
            num_angles,
            num_detectors,
            data,
        })
    }

    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        assert!(
            num_angles > 0 && num_detectors > 0,
            "sinogram dimensions must be positive"
        );
        Self {
            num_angles,
            num_detectors,
            data: vec![0.0; num_angles * num_detectors],
        }
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Detector row for angle `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.num_detectors..(k + 1) * self.num_detectors]
    }

    pub fn get(&self, angle: usize, detector: usize) -> f64 {
        self.data[angle * self.num_detectors + detector]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_angles,
            self.num_detectors,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Per-pixel material labels in `1..=num_materials`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_materials: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(
        height: usize,
        width: usize,
        num_materials: usize,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(dims_mismatch(height * width, labels.len()));
        }
        if num_materials == 0 {
            return Err(Error::InvalidArgument(
                "label map needs at least one material".into(),
            ));
        }
        if let Some(bad) = labels
            .iter()
            .find(|&&l| l == 0 || l as usize > num_materials)
        {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 1..={num_materials}"
            )));
        }
        Ok(Self {
            height,
            width,
            num_materials,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_materials(&self) -> usize {
        self.num_materials
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Number of pixels carrying each label; index 0 holds label 1.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_materials];
        for &l in &self.labels {
            counts[l as usize - 1] += 1;
        }
        counts
    }

    /// True for pixels with an 8-neighbour of a different label.
    pub fn boundary_band(&self) -> Vec<bool> {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut band = vec![false; self.labels.len()];
        for i in 0..h {
            for j in 0..w {
                let here = self.labels[(i * w + j) as usize];
                'scan: for di in -1..=1 {
                    for dj in -1..=1 {
                        let (ni, nj) = (i + di, j + dj);
                        if ni < 0 || nj < 0 || ni >= h || nj >= w {
                            continue;
                        }
                        if self.labels[(ni * w + nj) as usize] != here {
                            band[(i * w + j) as usize] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        band
    }

    /// Fraction of pixels whose label agrees with `truth`, skipping pixels in
    /// the truth's one-pixel boundary band when `exclude_boundary` is set.
    pub fn accuracy_against(&self, truth: &LabelMap, exclude_boundary: bool) -> Result<f64> {
        if (self.height, self.width) != (truth.height, truth.width) {
            return Err(dims_mismatch(
                format!("{}x{}", truth.height, truth.width),
                format!("{}x{}", self.height, self.width),
            ));
        }
        let band = if exclude_boundary {
            truth.boundary_band()
        } else {
            vec![false; truth.labels.len()]
        };
        let (mut hits, mut total) = (0usize, 0usize);
        for ((a, b), skip) in self.labels.iter().zip(&truth.labels).zip(band) {
            if skip {
                continue;
            }
            total += 1;
            if a == b {
                hits += 1;
            }
        }
        Ok(if total == 0 {
            1.0
        } else {
            hits as f64 / total as f64
        })
    }
}

/// The deterministic generator used throughout: ChaCha with 8 rounds
/// (`rand_chacha::ChaCha8Rng`). Its output stream depends only on the seed and
/// stream id, on every platform.
pub type DetRng = ChaCha8Rng;

/// Independent streams drawn from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngStream {
    Fourier = 1,
    Weights = 2,
    Phantom = 3,
    Noise = 4,
    Test = 99,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
