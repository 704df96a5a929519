use super::mlp::{Layer, MlpParams};
use super::render::Gradients;
use crate::error::{dims_mismatch, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam with separate learning rates for the network and φ.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_mlp: f64,
    pub lr_phi: f64,
    pub first: Gradients,
    pub second: Gradients,
}

impl AdamState {
    pub fn new(params: &MlpParams, phi_len: usize, lr_mlp: f64, lr_phi: f64) -> Self {
        let zeros = super::render::zero_gradients(params, phi_len);
        Self {
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            lr_mlp,
            lr_phi,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, s: &Corrections) {
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = s.beta1 * *m + (1.0 - s.beta1) * g;
        *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
        let m_hat = *m / s.bias1;
        let v_hat = *v / s.bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + s.eps);
    }
}

struct Corrections {
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

fn same_shapes(a: &[Layer], b: &[Layer]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.weights.dim() == y.weights.dim() && x.bias.len() == y.bias.len())
}

/// One Adam update of every network parameter and of φ.
pub fn adam_step(
    params: &mut MlpParams,
    phi: &mut [f64],
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    if !same_shapes(params.layers(), &grads.layers)
        || !same_shapes(params.layers(), &state.first.layers)
    {
        return Err(dims_mismatch(
            "gradients shaped like the network",
            "other shapes",
        ));
    }
    if grads.phi.len() != phi.len() || state.first.phi.len() != phi.len() {
        return Err(dims_mismatch(phi.len(), grads.phi.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let s = Corrections {
        beta1: state.beta1,
        beta2: state.beta2,
        eps: state.eps,
        bias1: 1.0 - state.beta1.powi(t),
        bias2: 1.0 - state.beta2.powi(t),
    };
    let layers = params.layers_mut();
    for (i, layer) in layers.iter_mut().enumerate() {
        let g = &grads.layers[i];
        let (m, v) = (&mut state.first.layers[i], &mut state.second.layers[i]);
        update(
            layer.weights.as_slice_mut().expect("standard layout"),
            g.weights.as_slice().expect("standard layout"),
            m.weights.as_slice_mut().expect("standard layout"),
            v.weights.as_slice_mut().expect("standard layout"),
            state.lr_mlp,
            &s,
        );
        update(
            layer.bias.as_slice_mut().expect("standard layout"),
            g.bias.as_slice().expect("standard layout"),
            m.bias.as_slice_mut().expect("standard layout"),
            v.bias.as_slice_mut().expect("standard layout"),
            state.lr_mlp,
            &s,
        );
    }
    update(
        phi,
        &grads.phi,
        &mut state.first.phi,
        &mut state.second.phi,
        state.lr_phi,
        &s,
    );
    Ok(())
}
