//! Training orchestration for the classic INR, AC-IND and AC-IND⁺, plus
//! initialization, segmentation extraction and dynamics tables.

use crate::classical::fbp;
use crate::error::{dims_mismatch, Error, Result};
use crate::grid::{seeded_rng, ImageGrid, LabelMap, RngStream, Sinogram};
use crate::inr::{
    adam_step, backward, render, AcVector, AdamState, FourierEmbedding, Gradients, Head, MlpParams,
    PixelBatch, RenderCache, DEFAULT_SIGMA2,
};
use crate::metrics::{l2_distance, psnr, ssim};
use crate::projector::Projector;
use crate::segmentation::{
    masks_from_thresholds, multi_otsu, region_means, relabel_by_mean, MaskSet, DEFAULT_BINS,
};

/// Residual norms below this produce a zero update in `L2Norm` mode.
pub const RESIDUAL_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Scalar-head coordinate network.
    Inr,
    /// Distribution head with φ seeded from an FBP segmentation.
    AcInd,
    /// Distribution head with φ seeded from an inner AC-IND run.
    AcIndPlus,
}

impl Method {
    /// The scalar network tolerates, and needs, a larger step at desk scale.
    pub fn default_lr_mlp(self) -> f64 {
        match self {
            Method::Inr => 3e-3,
            Method::AcInd | Method::AcIndPlus => 1e-3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Inr => "inr",
            Method::AcInd => "ac-ind",
            Method::AcIndPlus => "ac-ind-plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Gradient of `‖A X − y‖₂`.
    L2Norm,
    /// Gradient of `‖A X − y‖₂² / (U·V)`.
    Mse,
}

/// Reconstructor whose segmentation seeds φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Fbp,
    AcInd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of Fourier frequencies m (input width 2m).
    pub fourier_features: usize,
    pub sigma2: f64,
    /// Sine-layer widths of the distribution network. The scalar baseline
    /// appends one more layer of the last width.
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    /// Desk-scale network for 64×64 grids.
    fn default() -> Self {
        Self {
            fourier_features: 32,
            sigma2: DEFAULT_SIGMA2,
            hidden: vec![64; 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub materials: usize,
    pub temperature: f64,
    pub lr_mlp: f64,
    pub lr_phi: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub eval_every: usize,
    pub network: NetworkConfig,
    /// Epochs of the inner AC-IND run of AC-IND⁺; `None` reuses `epochs`.
    pub inner_epochs: Option<usize>,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            materials: 6,
            temperature: 0.2,
            lr_mlp: method.default_lr_mlp(),
            lr_phi: 1e-3,
            epochs: 5000,
            seed: 0,
            loss_mode: LossMode::L2Norm,
            eval_every: 100,
            network: NetworkConfig::default(),
            inner_epochs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument("eval_every must be ≥ 1".into()));
        }
        if !(self.lr_mlp >= 0.0 && self.lr_mlp.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bad MLP learning rate {}",
                self.lr_mlp
            )));
        }
        if self.network.fourier_features == 0 || self.network.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "network widths must be positive".into(),
            ));
        }
        if self.method != Method::Inr {
            if self.materials == 0 {
                return Err(Error::InvalidArgument(format!(
                    "distribution methods need K ≥ 1 materials, got {}",
                    self.materials
                )));
            }
            if !(self.temperature > 0.0 && self.temperature < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "temperature must lie in (0, 1), got {}",
                    self.temperature
                )));
            }
            if !(self.lr_phi >= 0.0 && self.lr_phi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "bad φ learning rate {}",
                    self.lr_phi
                )));
            }
        }
        Ok(())
    }

    /// `key=value` summary stored in checkpoints.
    pub fn echo(&self) -> String {
        let hidden: Vec<String> = self.network.hidden.iter().map(usize::to_string).collect();
        let mut s = format!(
            "method={} lr_mlp={} epochs={} seed={} loss={} eval_every={} features={} sigma2={} hidden={}",
            self.method.name(),
            self.lr_mlp,
            self.epochs,
            self.seed,
            match self.loss_mode {
                LossMode::L2Norm => "l2norm",
                LossMode::Mse => "mse",
            },
            self.eval_every,
            self.network.fourier_features,
            self.network.sigma2,
            hidden.join("-"),
        );
        if self.method != Method::Inr {
            s.push_str(&format!(
                " materials={} temperature={} lr_phi={}",
                self.materials, self.temperature, self.lr_phi
            ));
        }
        s
    }
}

/// Optional references used only for evaluation.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub image: Option<ImageGrid>,
    pub acv: Option<AcVector>,
    pub labels: Option<LabelMap>,
}

impl GroundTruth {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn data_range(&self) -> Option<f64> {
        self.image.as_ref().map(|img| {
            let (lo, hi) = img.min_max();
            hi - lo
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    /// `‖A X − y‖₂`, whichever gradient mode trains.
    pub loss: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// φ at this epoch (empty for the scalar baseline).
    pub phi: Vec<f64>,
    pub acv_distance: Option<f64>,
    pub seg_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    /// Record with the highest PSNR (earliest on ties).
    pub fn best_psnr(&self) -> Option<&TraceRecord> {
        let mut best: Option<&TraceRecord> = None;
        for r in &self.records {
            if let Some(p) = r.psnr {
                if best.and_then(|b| b.psnr).is_none_or(|bp| p > bp) {
                    best = Some(r);
                }
            }
        }
        best
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Everything needed to re-render a trained network or resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub seed: u64,
    pub embedding: FourierEmbedding,
    pub params: MlpParams,
    /// Empty for the scalar head.
    pub phi: Vec<f64>,
    pub adam: AdamState,
    pub config_echo: String,
}

impl Model {
    /// Fresh network: Fourier matrix and weights drawn from `config.seed`.
    fn init(config: &TrainConfig, phi: Option<&AcVector>) -> Result<Self> {
        let net = &config.network;
        let embedding = FourierEmbedding::sample(
            net.fourier_features,
            net.sigma2,
            &mut seeded_rng(config.seed, RngStream::Fourier),
        )?;
        let mut rng = seeded_rng(config.seed, RngStream::Weights);
        let input = embedding.output_width();
        let (params, phi) = match phi {
            None => {
                let mut hidden = net.hidden.clone();
                hidden.push(*hidden.last().unwrap_or(&input));
                (
                    MlpParams::siren(input, &hidden, 1, Head::Scalar, &mut rng)?,
                    Vec::new(),
                )
            }
            Some(acv) => (
                MlpParams::siren(
                    input,
                    &net.hidden,
                    acv.len(),
                    Head::Distribution {
                        temperature: config.temperature,
                    },
                    &mut rng,
                )?,
                acv.values().to_vec(),
            ),
        };
        let lr_phi = if phi.is_empty() { 0.0 } else { config.lr_phi };
        let adam = AdamState::new(&params, phi.len(), config.lr_mlp, lr_phi);
        Ok(Self {
            seed: config.seed,
            embedding,
            params,
            phi,
            adam,
            config_echo: config.echo(),
        })
    }

    pub fn render(&self, height: usize, width: usize) -> Result<ImageGrid> {
        crate::inr::render_image(&self.embedding, &self.params, &self.phi, height, width)
    }

    pub fn acv(&self) -> Option<AcVector> {
        if self.phi.is_empty() {
            None
        } else {
            AcVector::new(self.phi.clone()).ok()
        }
    }
}

/// How φ was seeded.
#[derive(Debug, Clone, PartialEq)]
pub struct InitRecord {
    /// Region means of the FBP segmentation.
    pub fbp_acv: AcVector,
    /// Region means of the inner AC-IND segmentation (AC-IND⁺ only).
    pub inner_acv: Option<AcVector>,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: ImageGrid,
    /// Argmax segmentation (distribution methods only).
    pub labels: Option<LabelMap>,
    pub acv: Option<AcVector>,
    pub trace: TrainTrace,
    pub model: Model,
    pub init: Option<InitRecord>,
    /// Highest-PSNR image seen at a logged epoch, when ground truth is known.
    pub best_image: Option<(usize, ImageGrid)>,
}

/// Initial φ with the segmentation that produced it.
#[derive(Debug, Clone)]
pub struct AcInit {
    pub acv: AcVector,
    pub masks: MaskSet,
    pub empty_regions: Vec<usize>,
    pub reconstruction: ImageGrid,
}

/// Reconstruct, segment with multi-Otsu into K regions and take region
/// means, sorted ascending with the masks relabeled to match.
pub fn init_ac_vector(
    sino: &Sinogram,
    projector: &Projector,
    materials: usize,
    method: InitMethod,
    inner: Option<&TrainConfig>,
) -> Result<AcInit> {
    if materials < 2 {
        return Err(Error::InvalidArgument(format!(
            "initialization needs K ≥ 2 materials, got {materials}"
        )));
    }
    segment_means(
        &initial_reconstruction(sino, projector, materials, method, inner)?,
        materials,
    )
}

fn initial_reconstruction(
    sino: &Sinogram,
    projector: &Projector,
    materials: usize,
    method: InitMethod,
    inner: Option<&TrainConfig>,
) -> Result<ImageGrid> {
    match method {
        InitMethod::Fbp => fbp(sino, projector.geometry()),
        InitMethod::AcInd => {
            let inner = inner.ok_or_else(|| {
                Error::InvalidArgument("AC-IND initialization needs a config".into())
            })?;
            let config = TrainConfig {
                method: Method::AcInd,
                materials,
                ..inner.clone()
            };
            Ok(train(&config, projector, sino, &GroundTruth::none())?.image)
        }
    }
}

/// φ for training: segmentation means, or for a single material the mean of
/// the non-zero pixels of the initial reconstruction.
fn seed_phi(
    sino: &Sinogram,
    projector: &Projector,
    materials: usize,
    method: InitMethod,
    inner: Option<&TrainConfig>,
) -> Result<AcVector> {
    if materials != 1 {
        return Ok(init_ac_vector(sino, projector, materials, method, inner)?.acv);
    }
    let recon = initial_reconstruction(sino, projector, materials, method, inner)?;
    let (h, w) = recon.dims();
    let one_region = MaskSet::from_regions(h, w, 1, vec![0; h * w])?;
    Ok(region_means(&recon, &one_region)?.acv)
}

fn segment_means(reconstruction: &ImageGrid, materials: usize) -> Result<AcInit> {
    let thresholds = multi_otsu(reconstruction, materials, DEFAULT_BINS)?;
    let masks = masks_from_thresholds(reconstruction, &thresholds)?;
    let (masks, means) = relabel_by_mean(reconstruction, &masks)?;
    Ok(AcInit {
        acv: means.acv,
        masks,
        empty_regions: means.empty_regions,
        reconstruction: reconstruction.clone(),
    })
}

/// Argmax of the head logits per pixel (equal to the argmax of the
/// distribution); labels are 1-based and ties go to the lowest index.
pub fn extract_segmentation(
    params: &MlpParams,
    emb: &FourierEmbedding,
    height: usize,
    width: usize,
) -> Result<LabelMap> {
    let Head::Distribution { .. } = params.head() else {
        return Err(Error::InvalidArgument(
            "segmentation needs a distribution head".into(),
        ));
    };
    let phi = vec![0.0; params.output_width()];
    let (_, cache) = render(&PixelBatch::new(emb, height, width), params, &phi)?;
    labels_from_cache(&cache, height, width, params.output_width())
}

fn labels_from_cache(
    cache: &RenderCache,
    height: usize,
    width: usize,
    k: usize,
) -> Result<LabelMap> {
    let labels = cache
        .logits()
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u32 + 1
        })
        .collect();
    LabelMap::new(height, width, k, labels)
}

/// Joint training of the network (and φ) against `‖A X − y‖₂`.
/// `∂L/∂X = s·Aᵀr` with `s = 1/‖r‖` (zero below the guard) or `2/(UV)`.
fn image_gradient(
    projector: &Projector,
    residual: &[f64],
    norm: f64,
    mode: LossMode,
) -> Result<ImageGrid> {
    let scale = match mode {
        LossMode::L2Norm if norm < RESIDUAL_GUARD => 0.0,
        LossMode::L2Norm => 1.0 / norm,
        LossMode::Mse => 2.0 / residual.len() as f64,
    };
    let weighted: Vec<f64> = residual.iter().map(|r| r * scale).collect();
    let geom = projector.geometry();
    ImageGrid::new(geom.height(), geom.width(), projector.back_raw(&weighted))
}

/// Measurement loss `‖A g − y‖` or `‖A g − y‖²/(UV)` and its gradient with
/// respect to every network parameter and φ.
pub fn loss_and_gradient(
    batch: &PixelBatch,
    params: &MlpParams,
    phi: &[f64],
    projector: &Projector,
    sino: &Sinogram,
    mode: LossMode,
) -> Result<(f64, Gradients)> {
    projector.geometry().check_sinogram(sino)?;
    let (image, cache) = render(batch, params, phi)?;
    projector.geometry().check_image(&image)?;
    let residual: Vec<f64> = projector
        .forward_raw(image.data())
        .iter()
        .zip(sino.data())
        .map(|(a, b)| a - b)
        .collect();
    let sq = residual.iter().map(|r| r * r).sum::<f64>();
    let loss = match mode {
        LossMode::L2Norm => sq.sqrt(),
        LossMode::Mse => sq / residual.len() as f64,
    };
    let image_grad = image_gradient(projector, &residual, sq.sqrt(), mode)?;
    let grads = backward(batch, params, phi, &cache, &image_grad)?;
    Ok((loss, grads))
}

pub fn train(
    config: &TrainConfig,
    projector: &Projector,
    sino: &Sinogram,
    truth: &GroundTruth,
) -> Result<ReconResult> {
    config.validate()?;
    let geom = projector.geometry();
    geom.check_sinogram(sino)?;
    let (h, w) = (geom.height(), geom.width());
    for img in truth.image.iter() {
        if img.dims() != (h, w) {
            return Err(dims_mismatch(
                format!("{h}×{w}"),
                format!("{:?}", img.dims()),
            ));
        }
    }

    let init = match config.method {
        Method::Inr => None,
        Method::AcInd => Some(InitRecord {
            fbp_acv: seed_phi(sino, projector, config.materials, InitMethod::Fbp, None)?,
            inner_acv: None,
        }),
        Method::AcIndPlus => {
            let inner = TrainConfig {
                epochs: config.inner_epochs.unwrap_or(config.epochs),
                ..config.clone()
            };
            Some(InitRecord {
                fbp_acv: seed_phi(sino, projector, config.materials, InitMethod::Fbp, None)?,
                inner_acv: Some(seed_phi(
                    sino,
                    projector,
                    config.materials,
                    InitMethod::AcInd,
                    Some(&inner),
                )?),
            })
        }
    };
    let start_phi = init
        .as_ref()
        .map(|i| i.inner_acv.as_ref().unwrap_or(&i.fbp_acv));
    let mut model = Model::init(config, start_phi)?;

    let batch = PixelBatch::new(&model.embedding, h, w);
    let y = sino.data();
    let data_range = truth.data_range();
    let mut trace = TrainTrace::default();
    let mut best_image: Option<(usize, ImageGrid, f64)> = None;
    let mut last_finite: Option<f64> = None;
    let distribution = config.method != Method::Inr;

    let mut epoch = 0;
    let (image, cache) = loop {
        let (image, cache) = match render(&batch, &model.params, &model.phi) {
            Ok(out) => out,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last_finite,
                })
            }
            Err(e) => return Err(e),
        };
        let residual: Vec<f64> = projector
            .forward_raw(image.data())
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .collect();
        let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        last_finite = Some(norm);

        if epoch > 0 && epoch % config.eval_every == 0 {
            let mut record = TraceRecord {
                epoch,
                loss: norm,
                psnr: None,
                ssim: None,
                phi: model.phi.clone(),
                acv_distance: None,
                seg_accuracy: None,
            };
            if let (Some(gt), Some(range)) = (&truth.image, data_range) {
                let p = psnr(gt, &image, range)?;
                record.psnr = Some(p);
                record.ssim = Some(ssim(gt, &image, range)?);
                if best_image.as_ref().is_none_or(|b| p > b.2) {
                    best_image = Some((epoch, image.clone(), p));
                }
            }
            if distribution {
                if let Some(acv) = &truth.acv {
                    if acv.len() == model.phi.len() {
                        record.acv_distance = Some(l2_distance(acv.values(), &model.phi)?);
                    }
                }
                if let Some(labels) = &truth.labels {
                    let seg = labels_from_cache(&cache, h, w, model.phi.len())?;
                    if labels.num_materials() == seg.num_materials() {
                        record.seg_accuracy = Some(seg.accuracy_against(labels, true)?);
                    }
                }
            }
            trace.records.push(record);
        }
        if epoch == config.epochs {
            break (image, cache);
        }

        let image_grad = image_gradient(projector, &residual, norm, config.loss_mode)?;
        let grads = backward(&batch, &model.params, &model.phi, &cache, &image_grad)?;
        if !grads.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        adam_step(&mut model.params, &mut model.phi, &grads, &mut model.adam)?;
        epoch += 1;
    };

    let labels = if distribution {
        Some(labels_from_cache(&cache, h, w, model.phi.len())?)
    } else {
        None
    };
    Ok(ReconResult {
        image,
        labels,
        acv: model.acv(),
        trace,
        model,
        init,
        best_image: best_image.map(|(e, img, _)| (e, img)),
    })
}

/// One row of the training-dynamics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRow {
    pub epoch: usize,
    pub psnr: Option<f64>,
    pub acv_distance: Option<f64>,
    pub seg_accuracy: Option<f64>,
    pub phi: Vec<f64>,
}

pub fn dynamics_report(trace: &TrainTrace) -> Result<Vec<DynamicsRow>> {
    if trace.records.is_empty() {
        return Err(Error::InvalidArgument("empty training trace".into()));
    }
    Ok(trace
        .records
        .iter()
        .map(|r| DynamicsRow {
            epoch: r.epoch,
            psnr: r.psnr,
            acv_distance: r.acv_distance,
            seg_accuracy: r.seg_accuracy,
            phi: r.phi.clone(),
        })
        .collect())
}
