use ndarray::{Array2, Axis};

use super::embedding::{pixel_coordinate, FourierEmbedding};
use super::mlp::{mlp_forward, Head, Layer, MlpParams};
use super::softmax::{modulated_softmax, softmax_into};
use crate::error::{dims_mismatch, Error, Result};
use crate::grid::ImageGrid;

/// `g(z) = Σ_k D_z(k)·φ_k` at one coordinate.
pub fn g_value(
    z: [f64; 2],
    emb: &FourierEmbedding,
    params: &MlpParams,
    phi: &[f64],
) -> Result<f64> {
    let Head::Distribution { temperature } = params.head() else {
        return Err(Error::InvalidArgument(
            "g_value needs a distribution head".into(),
        ));
    };
    check_phi(params, phi)?;
    let (logits, _) = mlp_forward(&emb.embed(z), params)?;
    Ok(modulated_softmax(&logits, temperature).expectation(phi))
}

fn check_phi(params: &MlpParams, phi: &[f64]) -> Result<()> {
    match params.head() {
        Head::Distribution { .. } if phi.len() != params.output_width() => {
            Err(dims_mismatch(params.output_width(), phi.len()))
        }
        _ => Ok(()),
    }
}

/// Embedded coordinates of every pixel of an H×W grid, computed once and
/// reused by every render.
#[derive(Debug, Clone)]
pub struct PixelBatch {
    height: usize,
    width: usize,
    inputs: Array2<f64>,
}

impl PixelBatch {
    pub fn new(emb: &FourierEmbedding, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            inputs: emb.embed_grid(height, width),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }
}

/// Everything a render leaves behind for the backward pass.
#[derive(Debug, Clone)]
pub struct RenderCache {
    /// Outputs of each sine layer (inputs of the following layer).
    hidden: Vec<Array2<f64>>,
    /// cos of each sine layer's pre-activation.
    hidden_deriv: Vec<Array2<f64>>,
    /// Head outputs, pixels × width.
    logits: Array2<f64>,
    /// Distributions, pixels × K (empty for the scalar head).
    probs: Array2<f64>,
}

impl RenderCache {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Per-pixel material distributions (distribution head only).
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }
}

/// Batched forward pass over all pixels.
pub fn render(
    batch: &PixelBatch,
    params: &MlpParams,
    phi: &[f64],
) -> Result<(ImageGrid, RenderCache)> {
    if batch.inputs.ncols() != params.input_width() {
        return Err(dims_mismatch(params.input_width(), batch.inputs.ncols()));
    }
    check_phi(params, phi)?;
    let layers = params.layers();
    let last = layers.len() - 1;
    let mut hidden = Vec::with_capacity(last);
    let mut hidden_deriv = Vec::with_capacity(last);
    for (i, layer) in layers[..last].iter().enumerate() {
        let u = if i == 0 {
            &batch.inputs
        } else {
            &hidden[i - 1]
        };
        let mut act = affine(u, layer);
        let mut deriv = Array2::zeros(act.raw_dim());
        for (a, d) in act.iter_mut().zip(deriv.iter_mut()) {
            let (s, c) = a.sin_cos();
            *a = s;
            *d = c;
        }
        hidden.push(act);
        hidden_deriv.push(deriv);
    }
    let u = if last == 0 {
        &batch.inputs
    } else {
        &hidden[last - 1]
    };
    let logits = affine(u, &layers[last]);

    let (values, probs) = match params.head() {
        Head::Scalar => (logits.column(0).to_vec(), Array2::zeros((0, 0))),
        Head::Distribution { temperature } => {
            let mut probs = Array2::zeros(logits.raw_dim());
            let mut values = Vec::with_capacity(logits.nrows());
            for (z, mut d) in logits.outer_iter().zip(probs.outer_iter_mut()) {
                let d = d.as_slice_mut().expect("standard layout");
                softmax_into(z.as_slice().expect("standard layout"), temperature, d);
                values.push(d.iter().zip(phi).map(|(p, c)| p * c).sum());
            }
            (values, probs)
        }
    };
    if let Some(index) = values.iter().position(|v: &f64| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let image = ImageGrid::new(batch.height, batch.width, values)?;
    Ok((
        image,
        RenderCache {
            hidden,
            hidden_deriv,
            logits,
            probs,
        },
    ))
}

fn affine(u: &Array2<f64>, layer: &Layer) -> Array2<f64> {
    let mut out = u.dot(&layer.weights.t());
    out += &layer.bias;
    out
}

/// Image of `g` (or of the scalar head) at `(i/H, j/W)`.
pub fn render_image(
    emb: &FourierEmbedding,
    params: &MlpParams,
    phi: &[f64],
    height: usize,
    width: usize,
) -> Result<ImageGrid> {
    Ok(render(&PixelBatch::new(emb, height, width), params, phi)?.0)
}

/// Pixelwise single-coordinate evaluation; the slow reference for [`render`].
pub fn render_pointwise(
    emb: &FourierEmbedding,
    params: &MlpParams,
    phi: &[f64],
    height: usize,
    width: usize,
) -> Result<ImageGrid> {
    let mut values = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            let z = pixel_coordinate(i, j, height, width);
            values.push(match params.head() {
                Head::Scalar => mlp_forward(&emb.embed(z), params)?.0[0],
                Head::Distribution { .. } => g_value(z, emb, params, phi)?,
            });
        }
    }
    ImageGrid::new(height, width, values)
}

/// Loss gradients with respect to every layer and to φ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    /// Empty for the scalar head.
    pub phi: Vec<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.phi.iter().all(|v| v.is_finite())
            && self
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Reverse-mode pass: given `∂L/∂X` for the rendered image, returns `∂L/∂θ`
/// and `∂L/∂φ`.
pub fn backward(
    batch: &PixelBatch,
    params: &MlpParams,
    phi: &[f64],
    cache: &RenderCache,
    image_grad: &ImageGrid,
) -> Result<Gradients> {
    let pixels = batch.height * batch.width;
    if image_grad.dims() != batch.dims() {
        return Err(dims_mismatch(
            format!("{:?}", batch.dims()),
            format!("{:?}", image_grad.dims()),
        ));
    }
    let layers = params.layers();
    if cache.logits.nrows() != pixels
        || cache.logits.ncols() != params.output_width()
        || cache.hidden.len() != layers.len() - 1
    {
        return Err(Error::InvalidArgument(
            "render cache does not match network".into(),
        ));
    }
    check_phi(params, phi)?;
    let dx = image_grad.data();

    let (mut delta, phi_grad) = match params.head() {
        Head::Scalar => (
            Array2::from_shape_vec((pixels, 1), dx.to_vec()).expect("shape"),
            Vec::new(),
        ),
        Head::Distribution { temperature } => {
            let k = phi.len();
            let mut phi_grad = vec![0.0; k];
            let mut delta = Array2::zeros((pixels, k));
            for ((d, mut out), &g) in cache.probs.outer_iter().zip(delta.outer_iter_mut()).zip(dx) {
                // ∂L/∂D_k = g·φ_k; softmax Jacobian (diag(D) − D Dᵀ)/T.
                let mut mean = 0.0;
                for c in 0..k {
                    phi_grad[c] += d[c] * g;
                    mean += d[c] * g * phi[c];
                }
                for c in 0..k {
                    out[c] = d[c] * (g * phi[c] - mean) / temperature;
                }
            }
            (delta, phi_grad)
        }
    };

    let mut grads: Vec<Layer> = layers.iter().map(Layer::zeros_like).collect();
    for i in (0..layers.len()).rev() {
        let u = if i == 0 {
            &batch.inputs
        } else {
            &cache.hidden[i - 1]
        };
        grads[i].weights = delta.t().dot(u);
        grads[i].bias = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut du = delta.dot(&layers[i].weights);
            du *= &cache.hidden_deriv[i - 1];
            delta = du;
        }
    }
    Ok(Gradients {
        layers: grads,
        phi: phi_grad,
    })
}

/// Zero-filled gradients shaped like `params` and φ.
pub fn zero_gradients(params: &MlpParams, phi_len: usize) -> Gradients {
    Gradients {
        layers: params.layers().iter().map(Layer::zeros_like).collect(),
        phi: vec![0.0; phi_len],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{seeded_rng, RngStream};
    use crate::projector::Projector;
    use crate::projector::ScanGeometry;
    use rand::Rng;

    fn setup(head: Head, k: usize, seed: u64) -> (FourierEmbedding, MlpParams, Vec<f64>) {
        let emb =
            FourierEmbedding::sample(4, 16.0, &mut seeded_rng(seed, RngStream::Fourier)).unwrap();
        let mut rng = seeded_rng(seed, RngStream::Weights);
        let out = if head == Head::Scalar { 1 } else { k };
        let mut params = MlpParams::siren(8, &[6, 5], out, head, &mut rng).unwrap();
        for layer in params.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let phi = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
        (emb, params, phi)
    }

    #[test]
    fn batched_render_matches_pointwise() {
        for head in [Head::Scalar, Head::Distribution { temperature: 0.2 }] {
            let (emb, params, phi) = setup(head, 3, 1);
            let fast = render_image(&emb, &params, &phi, 4, 4).unwrap();
            let slow = render_pointwise(&emb, &params, &phi, 4, 4).unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_phi_gives_constant_image() {
        let (emb, params, _) = setup(Head::Distribution { temperature: 0.035 }, 4, 2);
        let img = render_image(&emb, &params, &[1.7; 4], 5, 6).unwrap();
        assert!(img.data().iter().all(|&v| (v - 1.7).abs() < 1e-12));

        let (emb, params, _) = setup(Head::Distribution { temperature: 0.5 }, 1, 3);
        let img = render_image(&emb, &params, &[0.4], 3, 3).unwrap();
        assert!(img.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn g_value_extremes() {
        let emb =
            FourierEmbedding::sample(2, 16.0, &mut seeded_rng(0, RngStream::Fourier)).unwrap();
        let mut head = Layer::zeros(3, 4);
        head.bias[1] = 100.0;
        let params = MlpParams::new(vec![head], Head::Distribution { temperature: 0.1 }).unwrap();
        let phi = [0.2, 0.9, 1.5];
        assert!((g_value([0.4, 0.1], &emb, &params, &phi).unwrap() - 0.9).abs() < 1e-9);
        let flat = MlpParams::new(
            vec![Layer::zeros(3, 4)],
            Head::Distribution { temperature: 0.1 },
        )
        .unwrap();
        assert!(
            (g_value([0.4, 0.1], &emb, &flat, &phi).unwrap() - phi.iter().sum::<f64>() / 3.0).abs()
                < 1e-15
        );
    }

    #[test]
    fn scalar_head_with_zero_output_layer_is_zero() {
        let (emb, mut params, _) = setup(Head::Scalar, 0, 4);
        let last = params.layers_mut().last_mut().unwrap();
        *last = last.zeros_like();
        assert!(render_image(&emb, &params, &[], 4, 3)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn zero_image_grad_gives_zero_gradients() {
        let (emb, params, phi) = setup(Head::Distribution { temperature: 0.2 }, 3, 5);
        let batch = PixelBatch::new(&emb, 4, 4);
        let (_, cache) = render(&batch, &params, &phi).unwrap();
        let g = backward(&batch, &params, &phi, &cache, &ImageGrid::zeros(4, 4)).unwrap();
        assert_eq!(g, zero_gradients(&params, 3));
    }

    #[test]
    fn phi_gradient_for_constant_image_grad() {
        let (emb, params, phi) = setup(Head::Distribution { temperature: 0.2 }, 3, 6);
        let batch = PixelBatch::new(&emb, 4, 5);
        let (_, cache) = render(&batch, &params, &phi).unwrap();
        let g = backward(&batch, &params, &phi, &cache, &ImageGrid::filled(4, 5, 2.5)).unwrap();
        for k in 0..3 {
            let expect = 2.5 * cache.probs().column(k).sum();
            assert!((g.phi[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let (emb, params, phi) = setup(Head::Distribution { temperature: 0.2 }, 3, 7);
        let batch = PixelBatch::new(&emb, 4, 4);
        let other = PixelBatch::new(&emb, 3, 3);
        let (_, cache) = render(&other, &params, &phi).unwrap();
        assert!(backward(&batch, &params, &phi, &cache, &ImageGrid::zeros(4, 4)).is_err());
        assert!(backward(&batch, &params, &phi, &cache, &ImageGrid::zeros(3, 3)).is_err());
    }

    /// `‖A·render − y‖₂` evaluated with a fresh render.
    fn loss(
        batch: &PixelBatch,
        params: &MlpParams,
        phi: &[f64],
        proj: &Projector,
        y: &[f64],
    ) -> f64 {
        let (img, _) = render(batch, params, phi).unwrap();
        let ax = proj.forward_raw(img.data());
        ax.iter()
            .zip(y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check_close(analytic: f64, numeric: f64, what: &str) {
        if analytic.abs() < 1e-8 && numeric.abs() < 1e-8 {
            return;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(
            rel < 1e-4 || (analytic - numeric).abs() < 1e-8,
            "{what}: analytic {analytic} numeric {numeric}"
        );
    }

    fn full_chain_gradient_check(head: Head, k: usize, seed: u64) {
        let (emb, params, phi) = setup(head, k, seed);
        let geom = ScanGeometry::new(8, 8, 4).unwrap();
        let proj = Projector::new(&geom);
        let mut rng = seeded_rng(seed, RngStream::Test);
        let y: Vec<f64> = (0..geom.num_rays())
            .map(|_| rng.random_range(0.0..3.0))
            .collect();
        let batch = PixelBatch::new(&emb, 8, 8);

        let (img, cache) = render(&batch, &params, &phi).unwrap();
        let residual: Vec<f64> = proj
            .forward_raw(img.data())
            .iter()
            .zip(&y)
            .map(|(a, b)| a - b)
            .collect();
        let norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        let scaled: Vec<f64> = residual.iter().map(|r| r / norm).collect();
        let dx = ImageGrid::new(8, 8, proj.back_raw(&scaled)).unwrap();
        let grads = backward(&batch, &params, &phi, &cache, &dx).unwrap();

        let h = 1e-5;
        for (li, layer) in params.layers().iter().enumerate() {
            for idx in 0..layer.weights.len() {
                let (o, i) = (idx / layer.inputs(), idx % layer.inputs());
                let mut plus = params.clone();
                plus.layers_mut()[li].weights[[o, i]] += h;
                let mut minus = params.clone();
                minus.layers_mut()[li].weights[[o, i]] -= h;
                let numeric = (loss(&batch, &plus, &phi, &proj, &y)
                    - loss(&batch, &minus, &phi, &proj, &y))
                    / (2.0 * h);
                check_close(
                    grads.layers[li].weights[[o, i]],
                    numeric,
                    &format!("W{li}[{o},{i}]"),
                );
            }
            for o in 0..layer.outputs() {
                let mut plus = params.clone();
                plus.layers_mut()[li].bias[o] += h;
                let mut minus = params.clone();
                minus.layers_mut()[li].bias[o] -= h;
                let numeric = (loss(&batch, &plus, &phi, &proj, &y)
                    - loss(&batch, &minus, &phi, &proj, &y))
                    / (2.0 * h);
                check_close(grads.layers[li].bias[o], numeric, &format!("b{li}[{o}]"));
            }
        }
        for c in 0..phi.len() {
            let mut plus = phi.clone();
            plus[c] += h;
            let mut minus = phi.clone();
            minus[c] -= h;
            let numeric = (loss(&batch, &params, &plus, &proj, &y)
                - loss(&batch, &params, &minus, &proj, &y))
                / (2.0 * h);
            check_close(grads.phi[c], numeric, &format!("phi[{c}]"));
        }
    }

    #[test]
    fn distribution_head_gradients_match_finite_differences() {
        full_chain_gradient_check(Head::Distribution { temperature: 0.2 }, 3, 21);
        full_chain_gradient_check(Head::Distribution { temperature: 0.5 }, 4, 22);
    }

    #[test]
    fn scalar_head_gradients_match_finite_differences() {
        full_chain_gradient_check(Head::Scalar, 0, 23);
    }
}
