//! Coordinate network: Fourier features, sine layers, a material-distribution
//! head and the learnable attenuation vector, with hand-written gradients and
//! Adam.

mod acv;
mod adam;
mod embedding;
mod mlp;
mod render;
mod report;
mod softmax;

pub use acv::AcVector;
pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use embedding::{pixel_coordinate, FourierEmbedding, COORD_DIMS, DEFAULT_SIGMA2};
pub use mlp::{mlp_forward, siren_init, ForwardCache, Head, Layer, MlpParams};
pub use render::{
    backward, g_value, render, render_image, render_pointwise, zero_gradients, Gradients,
    PixelBatch, RenderCache,
};
pub use report::{Architecture, ParamsReport};
pub use softmax::{modulated_softmax, Distribution};
