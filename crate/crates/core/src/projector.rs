//! Parallel-beam discrete Radon transform with exact ray/pixel intersection
//! lengths, its transpose, and the ramp filter used by FBP.
//!
//! Geometry: the image occupies `[-W/2, W/2] × [-H/2, H/2]` in pixel units,
//! row 0 at the top (`y = H/2`), column 0 at the left (`x = -W/2`). For angle
//! θ and detector offset `s`, the ray is `s·(cos θ, sin θ) + t·(−sin θ, cos θ)`.
//! Detector `v` sits at `s = (v − (V−1)/2)·spacing`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{dims_mismatch, Error, Result};
use crate::grid::{ImageGrid, Sinogram};

/// Rays closer than this to axis-parallel are treated as exactly parallel.
const PARALLEL_EPS: f64 = 1e-12;
/// A coordinate within this distance of a pixel edge lies on that edge.
const EDGE_EPS: f64 = 1e-9;
/// Segments shorter than this are dropped.
const MIN_SEGMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    height: usize,
    width: usize,
    num_angles: usize,
    num_detectors: usize,
    detector_spacing: f64,
    angles: Vec<f64>,
}

impl ScanGeometry {
    /// Equiangular scan over `[0, π)` with unit detector spacing and
    /// `ceil(√2·max(H, W))` detectors.
    pub fn new(height: usize, width: usize, num_angles: usize) -> Result<Self> {
        let v = Self::default_detectors(height, width);
        Self::with_detectors(height, width, num_angles, v, 1.0)
    }

    pub fn default_detectors(height: usize, width: usize) -> usize {
        (std::f64::consts::SQRT_2 * height.max(width) as f64).ceil() as usize
    }

    pub fn with_detectors(
        height: usize,
        width: usize,
        num_angles: usize,
        num_detectors: usize,
        detector_spacing: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 || num_angles == 0 || num_detectors == 0 {
            return Err(Error::InvalidArgument(format!(
                "geometry sizes must be positive (H={height}, W={width}, U={num_angles}, V={num_detectors})"
            )));
        }
        if !(detector_spacing > 0.0 && detector_spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "detector spacing must be positive, got {detector_spacing}"
            )));
        }
        let angles = (0..num_angles)
            .map(|k| k as f64 * PI / num_angles as f64)
            .collect();
        Ok(Self {
            height,
            width,
            num_angles,
            num_detectors,
            detector_spacing,
            angles,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn num_rays(&self) -> usize {
        self.num_angles * self.num_detectors
    }

    /// Signed detector offset of detector `v` from the rotation centre.
    pub fn detector_offset(&self, v: usize) -> f64 {
        (v as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn check_image(&self, image: &ImageGrid) -> Result<()> {
        if image.dims() != (self.height, self.width) {
            return Err(dims_mismatch(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{} image", image.height(), image.width()),
            ));
        }
        Ok(())
    }

    pub fn check_sinogram(&self, sino: &Sinogram) -> Result<()> {
        if (sino.num_angles(), sino.num_detectors()) != (self.num_angles, self.num_detectors) {
            return Err(dims_mismatch(
                format!("{}x{} sinogram", self.num_angles, self.num_detectors),
                format!("{}x{} sinogram", sino.num_angles(), sino.num_detectors()),
            ));
        }
        Ok(())
    }

    /// Chord length of ray `(angle, detector)` through the image bounding box.
    pub fn chord_length(&self, angle: usize, detector: usize) -> f64 {
        let ray = Ray::new(self, angle, detector);
        match ray.box_interval(self) {
            Some((t0, t1)) => t1 - t0,
            None => 0.0,
        }
    }
}

/// Pixels crossed by one ray with their intersection lengths (pixel units).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayPath {
    pub entries: Vec<(usize, f64)>,
}

impl RayPath {
    pub fn total_length(&self) -> f64 {
        self.entries.iter().map(|(_, l)| l).sum()
    }
}

struct Ray {
    origin: (f64, f64),
    dir: (f64, f64),
}

impl Ray {
    fn new(geom: &ScanGeometry, angle: usize, detector: usize) -> Self {
        let theta = geom.angles[angle];
        let (sin, cos) = theta.sin_cos();
        let s = geom.detector_offset(detector);
        Ray {
            origin: (s * cos, s * sin),
            dir: (-sin, cos),
        }
    }

    /// Parameter interval for one axis; `None` when the ray misses the slab.
    fn slab(origin: f64, dir: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if dir.abs() < PARALLEL_EPS {
            if origin >= lo - EDGE_EPS && origin <= hi + EDGE_EPS {
                Some((f64::NEG_INFINITY, f64::INFINITY))
            } else {
                None
            }
        } else {
            let a = (lo - origin) / dir;
            let b = (hi - origin) / dir;
            Some((a.min(b), a.max(b)))
        }
    }

    fn box_interval(&self, geom: &ScanGeometry) -> Option<(f64, f64)> {
        let (hw, hh) = (geom.width as f64 / 2.0, geom.height as f64 / 2.0);
        let (x0, x1) = Self::slab(self.origin.0, self.dir.0, -hw, hw)?;
        let (y0, y1) = Self::slab(self.origin.1, self.dir.1, -hh, hh)?;
        let (t0, t1) = (x0.max(y0), x1.min(y1));
        if t1 - t0 > MIN_SEGMENT {
            Some((t0, t1))
        } else {
            None
        }
    }
}

/// Cells covering coordinate `f` (measured in pixels from the low edge): one
/// cell normally, two half-weighted cells when `f` sits on an edge.
fn cells(f: f64, n: usize, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let nearest = f.round();
    if (f - nearest).abs() < EDGE_EPS {
        let k = nearest as isize;
        for c in [k - 1, k] {
            if c >= 0 && (c as usize) < n {
                out.push((c as usize, 0.5));
            }
        }
    } else {
        let c = f.floor();
        if c >= 0.0 && (c as usize) < n {
            out.push((c as usize, 1.0));
        }
    }
}

/// Siddon-style exact traversal of one ray.
pub fn trace_ray(geom: &ScanGeometry, angle: usize, detector: usize) -> RayPath {
    let ray = Ray::new(geom, angle, detector);
    let Some((t_enter, t_exit)) = ray.box_interval(geom) else {
        return RayPath::default();
    };
    let (hw, hh) = (geom.width as f64 / 2.0, geom.height as f64 / 2.0);

    let mut ts = vec![t_enter, t_exit];
    if ray.dir.0.abs() >= PARALLEL_EPS {
        for k in 1..geom.width {
            let t = (k as f64 - hw - ray.origin.0) / ray.dir.0;
            if t > t_enter && t < t_exit {
                ts.push(t);
            }
        }
    }
    if ray.dir.1.abs() >= PARALLEL_EPS {
        for k in 1..geom.height {
            let t = (k as f64 - hh - ray.origin.1) / ray.dir.1;
            if t > t_enter && t < t_exit {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.total_cmp(b));

    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
    let (mut cols, mut rows) = (Vec::with_capacity(2), Vec::with_capacity(2));
    for pair in ts.windows(2) {
        let len = pair[1] - pair[0];
        if len <= MIN_SEGMENT {
            continue;
        }
        let tm = 0.5 * (pair[0] + pair[1]);
        let mx = ray.origin.0 + tm * ray.dir.0;
        let my = ray.origin.1 + tm * ray.dir.1;
        cells(mx + hw, geom.width, &mut cols);
        cells(hh - my, geom.height, &mut rows);
        for &(r, wr) in &rows {
            for &(c, wc) in &cols {
                let idx = r * geom.width + c;
                let w = len * wr * wc;
                match entries.last_mut() {
                    Some(last) if last.0 == idx => last.1 += w,
                    _ => entries.push((idx, w)),
                }
            }
        }
    }
    RayPath { entries }
}

/// Sparse system matrix of a [`ScanGeometry`], stored row-wise (one row per
/// ray, angle-major) and column-wise for the transpose.
#[derive(Debug, Clone)]
pub struct Projector {
    geom: ScanGeometry,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    col_ptr: Vec<usize>,
    t_rows: Vec<u32>,
    t_vals: Vec<f64>,
}

impl Projector {
    pub fn new(geom: &ScanGeometry) -> Self {
        let rays: Vec<RayPath> = (0..geom.num_rays())
            .into_par_iter()
            .map(|r| trace_ray(geom, r / geom.num_detectors, r % geom.num_detectors))
            .collect();

        let mut row_ptr = Vec::with_capacity(rays.len() + 1);
        row_ptr.push(0);
        let nnz: usize = rays.iter().map(|p| p.entries.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for path in &rays {
            for &(c, v) in &path.entries {
                cols.push(c as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }

        // Counting-sort transpose; entries within a column keep ray order.
        let n_pix = geom.height * geom.width;
        let mut col_ptr = vec![0usize; n_pix + 1];
        for &c in &cols {
            col_ptr[c as usize + 1] += 1;
        }
        for k in 0..n_pix {
            col_ptr[k + 1] += col_ptr[k];
        }
        let mut fill = col_ptr.clone();
        let mut t_rows = vec![0u32; nnz];
        let mut t_vals = vec![0.0; nnz];
        for r in 0..rays.len() {
            for e in row_ptr[r]..row_ptr[r + 1] {
                let c = cols[e] as usize;
                t_rows[fill[c]] = r as u32;
                t_vals[fill[c]] = vals[e];
                fill[c] += 1;
            }
        }

        Self {
            geom: geom.clone(),
            row_ptr,
            cols,
            vals,
            col_ptr,
            t_rows,
            t_vals,
        }
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geom
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// The stored path of ray `(angle, detector)`.
    pub fn ray(&self, angle: usize, detector: usize) -> RayPath {
        let r = angle * self.geom.num_detectors + detector;
        RayPath {
            entries: (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|e| (self.cols[e] as usize, self.vals[e]))
                .collect(),
        }
    }

    /// `A x` on raw row-major pixel data.
    pub fn forward_raw(&self, image: &[f64]) -> Vec<f64> {
        assert_eq!(image.len(), self.geom.height * self.geom.width);
        (0..self.geom.num_rays())
            .into_par_iter()
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|e| self.vals[e] * image[self.cols[e] as usize])
                    .sum()
            })
            .collect()
    }

    /// `Aᵀ y` on raw angle-major sinogram data.
    pub fn back_raw(&self, sino: &[f64]) -> Vec<f64> {
        assert_eq!(sino.len(), self.geom.num_rays());
        (0..self.geom.height * self.geom.width)
            .into_par_iter()
            .map(|p| {
                (self.col_ptr[p]..self.col_ptr[p + 1])
                    .map(|e| self.t_vals[e] * sino[self.t_rows[e] as usize])
                    .sum()
            })
            .collect()
    }

    pub fn forward(&self, image: &ImageGrid) -> Result<Sinogram> {
        self.geom.check_image(image)?;
        Sinogram::new(
            self.geom.num_angles,
            self.geom.num_detectors,
            self.forward_raw(image.data()),
        )
    }

    pub fn back(&self, sino: &Sinogram) -> Result<ImageGrid> {
        self.geom.check_sinogram(sino)?;
        ImageGrid::new(
            self.geom.height,
            self.geom.width,
            self.back_raw(sino.data()),
        )
    }

    /// Total intersection length of each ray (`A·1`).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.geom.num_rays())
            .map(|r| self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    /// Total ray length through each pixel (`Aᵀ·1`).
    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.geom.height * self.geom.width)
            .map(|p| {
                self.t_vals[self.col_ptr[p]..self.col_ptr[p + 1]]
                    .iter()
                    .sum()
            })
            .collect()
    }
}

pub fn forward_project(image: &ImageGrid, geom: &ScanGeometry) -> Result<Sinogram> {
    geom.check_image(image)?;
    Projector::new(geom).forward(image)
}

pub fn back_project(sino: &Sinogram, geom: &ScanGeometry) -> Result<ImageGrid> {
    geom.check_sinogram(sino)?;
    Projector::new(geom).back(sino)
}

/// Length of the zero-padded FFT used for a detector row of `v` samples.
pub fn ramp_padded_len(v: usize) -> usize {
    2 * v.next_power_of_two()
}

/// Ram-Lak response |f| (cycles per sample) on a length-`n` DFT grid.
fn ramp_response(n: usize) -> Vec<f64> {
    (0..n).map(|k| k.min(n - k) as f64 / n as f64).collect()
}

/// Circularly filters a full-length buffer in place with the ramp response.
pub fn ramp_filter_circular(buffer: &mut [f64]) {
    let n = buffer.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let resp = ramp_response(n);
    let mut spec: Vec<Complex<f64>> = buffer.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut spec);
    for (c, r) in spec.iter_mut().zip(&resp) {
        *c *= r;
    }
    ifft.process(&mut spec);
    for (b, c) in buffer.iter_mut().zip(&spec) {
        *b = c.re / n as f64;
    }
}

/// Per-angle ramp filtering of detector rows, zero-padded to
/// `2·next_pow2(V)` samples. Output is scaled by `1/spacing`.
pub fn ramp_filter(sino: &Sinogram, geom: &ScanGeometry) -> Result<Sinogram> {
    geom.check_sinogram(sino)?;
    let v = geom.num_detectors;
    if v < 2 {
        return Err(Error::InvalidArgument(
            "ramp filter needs at least 2 detectors".into(),
        ));
    }
    let n = ramp_padded_len(v);
    let mut planner = FftPlanner::new();
    let fft: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(n);
    let ifft: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_inverse(n);
    let resp = ramp_response(n);
    let scale = 1.0 / (n as f64 * geom.detector_spacing);

    let mut out = Vec::with_capacity(sino.data().len());
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for k in 0..geom.num_angles {
        buf.fill(Complex::new(0.0, 0.0));
        for (b, &x) in buf.iter_mut().zip(sino.row(k)) {
            b.re = x;
        }
        fft.process(&mut buf);
        for (c, r) in buf.iter_mut().zip(&resp) {
            *c *= r;
        }
        ifft.process(&mut buf);
        out.extend(buf[..v].iter().map(|c| c.re * scale));
    }
    Sinogram::new(geom.num_angles, v, out)
}
