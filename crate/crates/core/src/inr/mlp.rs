use ndarray::{Array1, Array2};
use rand::Rng;

use super::softmax::check_temperature;
use crate::error::{dims_mismatch, Error, Result};

/// What the final affine layer feeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    /// One output neuron read directly as the pixel value.
    Scalar,
    /// K logits turned into a material distribution by the modulated softmax.
    Distribution { temperature: f64 },
}

/// Affine map `W u + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self::zeros(self.outputs(), self.inputs())
    }
}

/// Sine-activated hidden layers followed by one affine head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    head: Head,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(dims_mismatch(
                    format!("layer {} input width {}", i + 1, pair[0].outputs()),
                    pair[1].inputs(),
                ));
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.outputs() {
                return Err(dims_mismatch(layer.outputs(), layer.bias.len()));
            }
        }
        let out = layers.last().map(Layer::outputs).unwrap_or(0);
        match head {
            Head::Scalar if out != 1 => return Err(dims_mismatch("scalar head width 1", out)),
            Head::Distribution { temperature } => check_temperature(temperature)?,
            Head::Scalar => {}
        }
        if out == 0 {
            return Err(Error::InvalidArgument(
                "head must have at least one output".into(),
            ));
        }
        Ok(Self { layers, head })
    }

    /// SIREN-initialized network: `input → hidden[0] → … → hidden[last]`
    /// with sines, then an affine head of width `outputs`.
    pub fn siren(
        input: usize,
        hidden: &[usize],
        outputs: usize,
        head: Head,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        if widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive: {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| siren_init(w[1], w[0], rng))
            .collect();
        Self::new(layers, head)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }
}

/// Weights uniform on `(−√(6/fan_in), √(6/fan_in))`, zero biases.
pub fn siren_init(outputs: usize, inputs: usize, rng: &mut impl Rng) -> Layer {
    let bound = (6.0 / inputs as f64).sqrt();
    let weights =
        Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-bound..bound));
    Layer {
        weights,
        bias: Array1::zeros(outputs),
    }
}

/// Per-layer inputs `u_1..u_L` of a single forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

/// Evaluates one input vector: sine layers, then the affine head. Returns the
/// head output (logits, or the scalar value) and the layer inputs.
pub fn mlp_forward(r: &[f64], params: &MlpParams) -> Result<(Vec<f64>, ForwardCache)> {
    if r.len() != params.input_width() {
        return Err(dims_mismatch(params.input_width(), r.len()));
    }
    let last = params.layers.len() - 1;
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut u = r.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.outputs()];
        for (o, out) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for (w, x) in layer.weights.row(o).iter().zip(&u) {
                acc += w * x;
            }
            *out = if i == last { acc } else { acc.sin() };
        }
        activations.push(std::mem::replace(&mut u, next));
    }
    Ok((u, ForwardCache { activations }))
}
