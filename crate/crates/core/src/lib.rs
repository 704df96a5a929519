//! Sparse-view parallel-beam CT reconstruction.
//!
//! The crate bundles the measurement operator ([`projector`]), classical
//! baselines ([`classical`]), multi-Otsu initialization ([`segmentation`]),
//! the coordinate network with a material-distribution head and learnable
//! attenuation vector ([`inr`]), training orchestration ([`pipeline`]),
//! synthetic phantoms ([`phantom`]) and file formats ([`io`]).

pub mod classical;
pub mod cli;
pub mod error;
pub mod grid;
pub mod inr;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod projector;
pub mod segmentation;

pub use error::{Error, Result};
pub use grid::{seeded_rng, DetRng, ImageGrid, LabelMap, RngStream, Sinogram};
pub use projector::{back_project, forward_project, ramp_filter, Projector, RayPath, ScanGeometry};
