//! File formats: F32Grid arrays, binary checkpoints, CSV tables and 16-bit
//! PGM exports. All binary layouts are little-endian except PGM samples,
//! which the PGM format fixes as big-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{dims_mismatch, Error, Result};
use crate::grid::{ImageGrid, LabelMap, Sinogram};
use crate::inr::{AcVector, AdamState, FourierEmbedding, Gradients, Head, Layer, MlpParams};
use crate::pipeline::{DynamicsRow, Model, TraceRecord};
use crate::projector::ScanGeometry;

pub const F32GRID_MAGIC: &[u8; 4] = b"F32G";
pub const F32GRID_VERSION: u16 = 1;
/// Magic, version, height and width.
pub const F32GRID_HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ACIN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Row-major single-precision array with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct F32Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl F32Grid {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(dims_mismatch(height * width, data.len()));
        }
        if height > u32::MAX as usize || width > u32::MAX as usize {
            return Err(Error::InvalidArgument("grid dimension exceeds u32".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    fn from_f64(height: usize, width: usize, values: &[f64]) -> Self {
        Self {
            height,
            width,
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_image(image: &ImageGrid) -> Self {
        Self::from_f64(image.height(), image.width(), image.data())
    }

    /// Sinograms are stored with `H = U` (angles) and `W = V` (detectors).
    pub fn from_sinogram(sino: &Sinogram) -> Self {
        Self::from_f64(sino.num_angles(), sino.num_detectors(), sino.data())
    }

    /// Labels as exact small floats.
    pub fn from_labels(labels: &LabelMap) -> Self {
        Self {
            height: labels.height(),
            width: labels.width(),
            data: labels.labels().iter().map(|&l| l as f32).collect(),
        }
    }

    fn widened(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn to_image(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.height, self.width, self.widened())
    }

    pub fn to_sinogram(&self) -> Result<Sinogram> {
        Sinogram::new(self.height, self.width, self.widened())
    }

    /// Reads labels back; every value must be an integer in `1..=K`. When
    /// `num_materials` is `None`, K is the largest label present.
    pub fn to_labels(&self, num_materials: Option<usize>) -> Result<LabelMap> {
        let mut labels = Vec::with_capacity(self.data.len());
        for &v in &self.data {
            if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f32) {
                return Err(Error::Format(format!(
                    "label value {v} is not a positive integer"
                )));
            }
            labels.push(v as u32);
        }
        let k = num_materials.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(1) as usize);
        LabelMap::new(self.height, self.width, k, labels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(F32GRID_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(F32GRID_MAGIC);
        out.extend_from_slice(&F32GRID_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != F32GRID_MAGIC {
            return Err(Error::Format("not an F32G file".into()));
        }
        let version = r.u16()?;
        if version != F32GRID_VERSION {
            return Err(Error::Format(format!("unsupported F32G version {version}")));
        }
        let (h, w) = (r.u32()? as usize, r.u32()? as usize);
        let expected = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("F32G dimensions overflow".into()))?;
        if r.remaining() != expected {
            return Err(Error::Format(format!(
                "F32G payload is {} bytes, header declares {h}×{w} ({expected} bytes)",
                r.remaining()
            )));
        }
        let data = (0..h * w).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        Self::new(h, w, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Bounds-checked little-endian cursor.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated file at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.remaining() / 8 < n {
            return Err(Error::Format(format!(
                "truncated file at byte {}",
                self.pos
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[derive(Default)]
struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.out.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: usize) {
        self.bytes(&(v as u32).to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.f64(*v);
        }
    }
}

const HEAD_SCALAR: u8 = 0;
const HEAD_DISTRIBUTION: u8 = 1;

fn write_layer_values(w: &mut Writer, layers: &[Layer]) {
    for l in layers {
        w.f64s(l.weights.iter());
        w.f64s(l.bias.iter());
    }
}

fn read_layer_values(r: &mut Reader, shapes: &[(usize, usize)]) -> Result<Vec<Layer>> {
    shapes
        .iter()
        .map(|&(out, inp)| {
            let weights = Array2::from_shape_vec((out, inp), r.f64s(out * inp)?).expect("shape");
            let bias = Array1::from_vec(r.f64s(out)?);
            Ok(Layer { weights, bias })
        })
        .collect()
}

/// Serializes a model. Layout (little-endian): magic "ACIN", u16 version,
/// u64 seed, u8 head kind (0 scalar, 1 distribution), f64 temperature, f64 σ²,
/// u32 m, E (m×2 f64, row-major), u32 layer count, per layer u32 out, u32 in,
/// W (out×in f64), b (out f64), u32 K, φ (K f64), u64 Adam step, f64 β1, β2,
/// ε, lr_mlp, lr_phi, first moments (all W, b in layer order, then φ), second
/// moments (same order), u32 byte length and UTF-8 config echo.
pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    w.u64(model.seed);
    match model.params.head() {
        Head::Scalar => {
            w.u8(HEAD_SCALAR);
            w.f64(0.0);
        }
        Head::Distribution { temperature } => {
            w.u8(HEAD_DISTRIBUTION);
            w.f64(temperature);
        }
    }
    w.f64(model.embedding.sigma2());
    w.u32(model.embedding.num_features());
    w.f64s(model.embedding.matrix().iter());
    let layers = model.params.layers();
    w.u32(layers.len());
    for l in layers {
        w.u32(l.outputs());
        w.u32(l.inputs());
        w.f64s(l.weights.iter());
        w.f64s(l.bias.iter());
    }
    w.u32(model.phi.len());
    w.f64s(&model.phi);
    let a = &model.adam;
    w.u64(a.step);
    for v in [a.beta1, a.beta2, a.eps, a.lr_mlp, a.lr_phi] {
        w.f64(v);
    }
    for moments in [&a.first, &a.second] {
        write_layer_values(&mut w, &moments.layers);
        w.f64s(&moments.phi);
    }
    w.u32(model.config_echo.len());
    w.bytes(model.config_echo.as_bytes());
    w.out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let seed = r.u64()?;
    let head_kind = r.u8()?;
    let temperature = r.f64()?;
    let head = match head_kind {
        HEAD_SCALAR => Head::Scalar,
        HEAD_DISTRIBUTION => Head::Distribution { temperature },
        other => return Err(Error::Format(format!("unknown head kind {other}"))),
    };
    let sigma2 = r.f64()?;
    let m = r.u32()? as usize;
    let matrix = Array2::from_shape_vec((m, 2), r.f64s(2 * m)?).expect("shape");
    let embedding = FourierEmbedding::from_matrix(matrix, sigma2)?;
    let num_layers = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(num_layers.min(1024));
    let mut layers = Vec::with_capacity(num_layers.min(1024));
    for _ in 0..num_layers {
        let (out, inp) = (r.u32()? as usize, r.u32()? as usize);
        shapes.push((out, inp));
        layers.extend(read_layer_values(&mut r, &[(out, inp)])?);
    }
    let params =
        MlpParams::new(layers, head).map_err(|e| Error::Format(format!("bad network: {e}")))?;
    if params.input_width() != embedding.output_width() {
        return Err(Error::Format(
            "network input width does not match the embedding".into(),
        ));
    }
    let k = r.u32()? as usize;
    let phi = r.f64s(k)?;
    let step = r.u64()?;
    let (beta1, beta2, eps, lr_mlp, lr_phi) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let mut moments = Vec::with_capacity(2);
    for _ in 0..2 {
        let layers = read_layer_values(&mut r, &shapes)?;
        moments.push(Gradients {
            layers,
            phi: r.f64s(k)?,
        });
    }
    let second = moments.pop().expect("two moment sets");
    let first = moments.pop().expect("two moment sets");
    let len = r.u32()? as usize;
    let config_echo = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| Error::Format("config echo is not UTF-8".into()))?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes in checkpoint",
            r.remaining()
        )));
    }
    Ok(Model {
        seed,
        embedding,
        params,
        phi,
        adam: AdamState {
            step,
            beta1,
            beta2,
            eps,
            lr_mlp,
            lr_phi,
            first,
            second,
        },
        config_echo,
    })
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    checkpoint_from_bytes(&fs::read(path)?)
}

/// CSV number: 9 significant digits, `inf`/`-inf`/`nan` literals.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.8e}")
    }
}

fn format_optional(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// Parses a field written by [`format_number`]; empty means absent.
pub fn parse_optional(field: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("bad number {field:?}")))
}

fn parse_number(field: &str) -> Result<f64> {
    parse_optional(field)?.ok_or_else(|| Error::Format("missing number".into()))
}

fn parse_usize(field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad integer {field:?}")))
}

/// Non-empty lines split on commas, header checked against `expected_prefix`.
fn csv_rows<'a>(text: &'a str, expected_prefix: &[&str]) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() < expected_prefix.len() || header[..expected_prefix.len()] != *expected_prefix {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(Error::Format(format!(
            "CSV row {} has the wrong number of fields",
            bad + 1
        )));
    }
    Ok(rows)
}

/// `material,value` rows; values use Rust's shortest round-trip form.
pub fn acv_csv(acv: &AcVector) -> String {
    let mut s = String::from("material,value\n");
    for (k, v) in acv.values().iter().enumerate() {
        s.push_str(&format!("{},{v}\n", k + 1));
    }
    s
}

pub fn parse_acv_csv(text: &str) -> Result<AcVector> {
    let rows = csv_rows(text, &["material", "value"])?;
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if parse_usize(row[0])? != i + 1 {
            return Err(Error::Format(
                "materials must be listed 1..K in order".into(),
            ));
        }
        values.push(parse_number(row[1])?);
    }
    AcVector::new(values)
}

/// Both initial vectors of an AC-IND⁺ run: `material,fbp,ac_ind`.
pub fn init_acv_csv(fbp: &AcVector, inner: Option<&AcVector>) -> String {
    let mut s = String::from("material,fbp,ac_ind\n");
    for (k, v) in fbp.values().iter().enumerate() {
        let second = inner.map(|a| a.values()[k].to_string()).unwrap_or_default();
        s.push_str(&format!("{},{v},{second}\n", k + 1));
    }
    s
}

/// Geometry sidecar as `key,value` rows.
pub fn geometry_csv(geom: &ScanGeometry) -> String {
    format!(
        "key,value\nnum_angles,{}\nnum_detectors,{}\ndetector_spacing,{}\nheight,{}\nwidth,{}\nangle_rule,k*pi/U\n",
        geom.num_angles(),
        geom.num_detectors(),
        geom.detector_spacing(),
        geom.height(),
        geom.width()
    )
}

pub fn parse_geometry_csv(text: &str) -> Result<ScanGeometry> {
    let rows = csv_rows(text, &["key", "value"])?;
    let get = |key: &str| {
        rows.iter()
            .find(|r| r[0].trim() == key)
            .map(|r| r[1].trim())
            .ok_or_else(|| Error::Format(format!("geometry sidecar lacks {key}")))
    };
    if get("angle_rule")? != "k*pi/U" {
        return Err(Error::Format("unsupported angle rule".into()));
    }
    ScanGeometry::with_detectors(
        parse_usize(get("height")?)?,
        parse_usize(get("width")?)?,
        parse_usize(get("num_angles")?)?,
        parse_usize(get("num_detectors")?)?,
        parse_number(get("detector_spacing")?)?,
    )
}

/// `epoch,loss,psnr,ssim,acv_distance,seg_accuracy,phi_1..phi_K`.
pub fn trace_csv(records: &[TraceRecord]) -> String {
    let k = records.first().map_or(0, |r| r.phi.len());
    let mut s = String::from("epoch,loss,psnr,ssim,acv_distance,seg_accuracy");
    for c in 1..=k {
        s.push_str(&format!(",phi_{c}"));
    }
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}",
            r.epoch,
            format_number(r.loss),
            format_optional(r.psnr),
            format_optional(r.ssim),
            format_optional(r.acv_distance),
            format_optional(r.seg_accuracy)
        ));
        for v in &r.phi {
            s.push(',');
            s.push_str(&format_number(*v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let rows = csv_rows(
        text,
        &[
            "epoch",
            "loss",
            "psnr",
            "ssim",
            "acv_distance",
            "seg_accuracy",
        ],
    )?;
    rows.iter()
        .map(|r| {
            Ok(TraceRecord {
                epoch: parse_usize(r[0])?,
                loss: parse_number(r[1])?,
                psnr: parse_optional(r[2])?,
                ssim: parse_optional(r[3])?,
                acv_distance: parse_optional(r[4])?,
                seg_accuracy: parse_optional(r[5])?,
                phi: r[6..]
                    .iter()
                    .map(|f| parse_number(f))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// `epoch,psnr,acv_distance,seg_accuracy,phi_1..phi_K`.
pub fn dynamics_csv(rows: &[DynamicsRow]) -> String {
    let k = rows.first().map_or(0, |r| r.phi.len());
    let mut s = String::from("epoch,psnr,acv_distance,seg_accuracy");
    for c in 1..=k {
        s.push_str(&format!(",phi_{c}"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}",
            r.epoch,
            format_optional(r.psnr),
            format_optional(r.acv_distance),
            format_optional(r.seg_accuracy)
        ));
        for v in &r.phi {
            s.push(',');
            s.push_str(&format_number(*v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_dynamics_csv(text: &str) -> Result<Vec<DynamicsRow>> {
    let rows = csv_rows(text, &["epoch", "psnr", "acv_distance", "seg_accuracy"])?;
    rows.iter()
        .map(|r| {
            Ok(DynamicsRow {
                epoch: parse_usize(r[0])?,
                psnr: parse_optional(r[1])?,
                acv_distance: parse_optional(r[2])?,
                seg_accuracy: parse_optional(r[3])?,
                phi: r[4..]
                    .iter()
                    .map(|f| parse_number(f))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub views: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

pub const METRICS_HEADER: &str = "method,views,psnr,ssim,data_range";

pub fn metrics_csv_row(row: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{}\n",
        row.method,
        row.views,
        format_number(row.psnr),
        format_number(row.ssim),
        format_number(row.data_range)
    )
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let rows = csv_rows(text, &["method", "views", "psnr", "ssim", "data_range"])?;
    rows.iter()
        .map(|r| {
            Ok(MetricsRow {
                method: r[0].trim().to_string(),
                views: parse_usize(r[1])?,
                psnr: parse_number(r[2])?,
                ssim: parse_number(r[3])?,
                data_range: parse_number(r[4])?,
            })
        })
        .collect()
}

/// 16-bit binary PGM (P5, maxval 65535), min-max normalized. Returns the file
/// bytes and the `(min, max)` used; a constant image maps to 0.
pub fn pgm_bytes(image: &ImageGrid) -> (Vec<u8>, (f64, f64)) {
    let (lo, hi) = image.min_max();
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for &v in image.data() {
        let level = if span > 0.0 {
            ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, (lo, hi))
}

/// Sidecar recording the normalization range of a PGM export.
pub fn pgm_range_csv(range: (f64, f64)) -> String {
    format!("min,max\n{},{}\n", range.0, range.1)
}

/// Writes `<path>` and `<path>.range.csv`.
pub fn export_pgm(image: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (bytes, range) = pgm_bytes(image);
    fs::write(path, bytes)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".range.csv");
    fs::write(sidecar, pgm_range_csv(range))?;
    Ok(())
}

/// Decodes a 16-bit P5 file written by [`pgm_bytes`] into raw levels.
pub fn parse_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| Error::Format("bad PGM header".into()))?,
        );
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(Error::Format("expected a 16-bit P5 PGM".into()));
    }
    let (w, h) = (parse_usize(fields[1])?, parse_usize(fields[2])?);
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() != 2 * w * h {
        return Err(Error::Format("PGM payload size mismatch".into()));
    }
    let levels = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((h, w, levels))
}
