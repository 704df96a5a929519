//! Synthetic ground truth: multi-material ellipse phantoms, a three-material
//! blob phantom, the modified Shepp-Logan head and scan simulation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{seeded_rng, ImageGrid, LabelMap, RngStream, Sinogram};
use crate::inr::AcVector;
use crate::projector::Projector;

/// Attenuation per material label. Label 1 is air with value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    values: Vec<f64>,
}

impl MaterialSpec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "material spec needs at least one material".into(),
            ));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "material 1 (air) must have value 0".into(),
            ));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        for (i, a) in values.iter().enumerate() {
            if values[..i].contains(a) {
                return Err(Error::InvalidArgument(format!(
                    "material values must be distinct ({a} repeats)"
                )));
            }
        }
        Ok(Self { values })
    }

    /// Air plus up to five materials: 0, 0.5, 1.0, 1.3, 1.8, 2.5.
    pub fn standard(num_materials: usize) -> Result<Self> {
        const TABLE: [f64; 6] = [0.0, 0.5, 1.0, 1.3, 1.8, 2.5];
        if num_materials == 0 || num_materials > TABLE.len() {
            return Err(Error::InvalidArgument(format!(
                "standard material table covers 1..={} materials, got {num_materials}",
                TABLE.len()
            )));
        }
        Self::new(TABLE[..num_materials].to_vec())
    }

    pub fn num_materials(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, label: u32) -> f64 {
        self.values[label as usize - 1]
    }
}

/// Ground-truth image with its exact label map and attenuation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPair {
    pub image: ImageGrid,
    pub labels: LabelMap,
    pub acv: AcVector,
}

impl PhantomPair {
    fn from_labels(h: usize, w: usize, spec: &MaterialSpec, labels: Vec<u32>) -> Result<Self> {
        let image = ImageGrid::new(h, w, labels.iter().map(|&l| spec.value(l)).collect())?;
        Ok(Self {
            image,
            labels: LabelMap::new(h, w, spec.num_materials(), labels)?,
            acv: AcVector::new(spec.values.clone())?,
        })
    }

    /// Whether every pixel carries exactly its label's attenuation.
    pub fn is_consistent(&self) -> bool {
        let acv = self.acv.values();
        self.image
            .data()
            .iter()
            .zip(self.labels.labels())
            .all(|(&v, &l)| v == acv[l as usize - 1])
    }
}

/// Ellipse in pixel-index coordinates: pixel `(i, j)` is inside when
/// `(u/semi_row)² + (w/semi_col)² ≤ 1`, where `(u, w)` is `(i − center_row,
/// j − center_col)` rotated by `-angle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_row: f64,
    pub center_col: f64,
    pub semi_row: f64,
    pub semi_col: f64,
    pub angle: f64,
    pub label: u32,
}

impl Ellipse {
    pub fn contains(&self, row: f64, col: f64) -> bool {
        let (di, dj) = (row - self.center_row, col - self.center_col);
        let (s, c) = self.angle.sin_cos();
        let u = di * c + dj * s;
        let w = -di * s + dj * c;
        (u / self.semi_row).powi(2) + (w / self.semi_col).powi(2) <= 1.0
    }
}

/// Paints ellipses in order onto an all-air grid; later ellipses win.
pub fn paint_ellipses(
    h: usize,
    w: usize,
    spec: &MaterialSpec,
    ellipses: &[Ellipse],
) -> Result<PhantomPair> {
    for e in ellipses {
        if e.label == 0 || e.label as usize > spec.num_materials() {
            return Err(Error::InvalidArgument(format!(
                "ellipse label {} out of range",
                e.label
            )));
        }
        if !(e.semi_row > 0.0 && e.semi_col > 0.0) {
            return Err(Error::InvalidArgument(
                "ellipse semi-axes must be positive".into(),
            ));
        }
    }
    let mut labels = vec![1u32; h * w];
    for e in ellipses {
        for i in 0..h {
            for j in 0..w {
                if e.contains(i as f64, j as f64) {
                    labels[i * w + j] = e.label;
                }
            }
        }
    }
    PhantomPair::from_labels(h, w, spec, labels)
}

/// Partial-volume variant of [`paint_ellipses`]: each pixel averages the
/// attenuation over `samples × samples` sub-pixel points. Labels are not
/// produced since boundary pixels mix materials.
pub fn paint_ellipses_area_weighted(
    h: usize,
    w: usize,
    spec: &MaterialSpec,
    ellipses: &[Ellipse],
    samples: usize,
) -> Result<ImageGrid> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least one sample per pixel".into(),
        ));
    }
    paint_ellipses(h, w, spec, ellipses)?;
    let n = samples as f64;
    ImageGrid::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for a in 0..samples {
            for b in 0..samples {
                let row = i as f64 - 0.5 + (a as f64 + 0.5) / n;
                let col = j as f64 - 0.5 + (b as f64 + 0.5) / n;
                let label = ellipses
                    .iter()
                    .rev()
                    .find(|e| e.contains(row, col))
                    .map_or(1, |e| e.label);
                acc += spec.value(label);
            }
        }
        acc / (n * n)
    })
}

/// Default ellipse count for `k` materials.
pub fn default_num_ellipses(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        2 * (k - 1)
    }
}

/// Seeded random ellipse phantom. The first ellipse is a large body; the rest
/// are smaller inclusions centred inside it. Materials are assigned
/// cyclically over labels `2..=K` so every material is drawn when
/// `num_ellipses ≥ K − 1`.
pub fn ellipse_material_phantom(
    seed: u64,
    h: usize,
    w: usize,
    spec: &MaterialSpec,
    num_ellipses: usize,
) -> Result<PhantomPair> {
    let k = spec.num_materials();
    if num_ellipses == 0 && k > 1 {
        return Err(Error::InvalidArgument(format!(
            "{k} materials need at least one ellipse"
        )));
    }
    if num_ellipses > 0 && k == 1 {
        return Err(Error::InvalidArgument(
            "air-only spec cannot paint ellipses".into(),
        ));
    }
    let ellipses = random_ellipses(seed, h, w, k, num_ellipses);
    paint_ellipses(h, w, spec, &ellipses)
}

pub fn random_ellipses(
    seed: u64,
    h: usize,
    w: usize,
    k: usize,
    num_ellipses: usize,
) -> Vec<Ellipse> {
    let mut rng = seeded_rng(seed, RngStream::Phantom);
    let (hf, wf) = (h as f64, w as f64);
    let (ci, cj) = ((hf - 1.0) / 2.0, (wf - 1.0) / 2.0);
    let mut out = Vec::with_capacity(num_ellipses);
    if num_ellipses == 0 {
        return out;
    }
    let body = Ellipse {
        center_row: ci + rng.random_range(-0.04..0.04) * hf,
        center_col: cj + rng.random_range(-0.04..0.04) * wf,
        semi_row: rng.random_range(0.32..0.42) * hf,
        semi_col: rng.random_range(0.32..0.42) * wf,
        angle: rng.random_range(0.0..std::f64::consts::PI),
        label: 2,
    };
    out.push(body);
    for n in 1..num_ellipses {
        // Centre drawn inside the inner 55% of the body.
        let rho = 0.55 * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let (u, v) = (
            rho * phi.cos() * body.semi_row,
            rho * phi.sin() * body.semi_col,
        );
        let (s, c) = body.angle.sin_cos();
        out.push(Ellipse {
            center_row: body.center_row + u * c - v * s,
            center_col: body.center_col + u * s + v * c,
            semi_row: rng.random_range(0.06..0.14) * hf,
            semi_col: rng.random_range(0.06..0.14) * wf,
            angle: rng.random_range(0.0..std::f64::consts::PI),
            label: 2 + (n % (k - 1)) as u32,
        });
    }
    out
}

/// Disc in normalized coordinates (`x`, `y` in [-1, 1], `y` up).
#[derive(Debug, Clone, Copy)]
struct Disc {
    x: f64,
    y: f64,
    r: f64,
}

const BLOB_BODY: [Disc; 6] = [
    Disc {
        x: 0.0,
        y: -0.10,
        r: 0.52,
    },
    Disc {
        x: 0.0,
        y: 0.38,
        r: 0.36,
    },
    Disc {
        x: -0.40,
        y: -0.42,
        r: 0.28,
    },
    Disc {
        x: 0.40,
        y: -0.42,
        r: 0.28,
    },
    Disc {
        x: -0.46,
        y: 0.05,
        r: 0.22,
    },
    Disc {
        x: 0.46,
        y: 0.05,
        r: 0.22,
    },
];

const BLOB_INCLUSIONS: [Disc; 4] = [
    Disc {
        x: -0.18,
        y: 0.42,
        r: 0.10,
    },
    Disc {
        x: 0.18,
        y: 0.42,
        r: 0.10,
    },
    Disc {
        x: 0.0,
        y: -0.12,
        r: 0.20,
    },
    Disc {
        x: -0.38,
        y: -0.45,
        r: 0.12,
    },
];

/// Rounded three-material blob. Material 2 is the union of six discs
/// (centres/radii in normalized `[-1, 1]` coordinates, `y` up):
/// `(0, −0.10, 0.52)`, `(0, 0.38, 0.36)`, `(±0.40, −0.42, 0.28)`,
/// `(±0.46, 0.05, 0.22)`. Material 3 fills four inclusions:
/// `(±0.18, 0.42, 0.10)`, `(0, −0.12, 0.20)`, `(−0.38, −0.45, 0.12)`.
pub fn barbapapa_like_phantom(h: usize, w: usize, ac_values: [f64; 3]) -> Result<PhantomPair> {
    let spec = MaterialSpec::new(ac_values.to_vec())?;
    let inside = |discs: &[Disc], x: f64, y: f64| {
        discs
            .iter()
            .any(|d| (x - d.x).powi(2) + (y - d.y).powi(2) <= d.r * d.r)
    };
    let mut labels = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let x = (j as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let y = 1.0 - (i as f64 + 0.5) / h as f64 * 2.0;
            labels.push(if inside(&BLOB_INCLUSIONS, x, y) {
                3
            } else if inside(&BLOB_BODY, x, y) {
                2
            } else {
                1
            });
        }
    }
    PhantomPair::from_labels(h, w, &spec, labels)
}

/// Modified (Toft) Shepp-Logan head phantom with values in [0, 1]. Each
/// pixel averages `samples × samples` sub-pixel points (1 = point sampling at
/// pixel centres).
pub fn shepp_logan(h: usize, w: usize, samples: usize) -> ImageGrid {
    // (intensity, semi-x, semi-y, centre-x, centre-y, angle in degrees)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    let value_at = |x: f64, y: f64| {
        let mut v = 0.0;
        for &(a, sx, sy, cx, cy, deg) in &ELLIPSES {
            let (s, c) = deg.to_radians().sin_cos();
            let (dx, dy) = (x - cx, y - cy);
            let u = dx * c + dy * s;
            let t = -dx * s + dy * c;
            if (u / sx).powi(2) + (t / sy).powi(2) <= 1.0 {
                v += a;
            }
        }
        v
    };
    let n = samples.max(1);
    ImageGrid::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = (j as f64 + (b as f64 + 0.5) / n as f64) / w as f64 * 2.0 - 1.0;
                let y = 1.0 - (i as f64 + (a as f64 + 0.5) / n as f64) / h as f64 * 2.0;
                acc += value_at(x, y);
            }
        }
        acc / (n * n) as f64
    })
    .expect("finite phantom")
}

/// Forward projection of the phantom, plus seeded Gaussian detector noise
/// when `noise_sigma > 0`.
pub fn simulate_scan(
    pair: &PhantomPair,
    projector: &Projector,
    noise_sigma: f64,
    seed: u64,
) -> Result<Sinogram> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be ≥ 0, got {noise_sigma}"
        )));
    }
    let sino = projector.forward(&pair.image)?;
    if noise_sigma == 0.0 {
        return Ok(sino);
    }
    let mut rng = seeded_rng(seed, RngStream::Noise);
    let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let (u, v) = (sino.num_angles(), sino.num_detectors());
    let data = sino
        .into_data()
        .into_iter()
        .map(|x| x + normal.sample(&mut rng))
        .collect();
    Sinogram::new(u, v, data)
}
