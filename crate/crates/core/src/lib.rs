//! Conditional-adversarial reconstruction of 31-band hyperspectral images
//! from sRGB renders: a small autodiff engine, the U-Net generator and
//! PatchGAN discriminator, colorimetric rendering, spectral metrics, tiled
//! inference and dataset I/O.

// `!(x > 0.0)` comparisons are deliberate: they also reject NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]
#![allow(clippy::type_complexity)]

pub mod autograd;
pub mod cli;
pub mod colorimetry;
pub mod dataset_io;
pub mod error;
pub mod experiment;
pub mod gradsuite;
pub mod kv;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod tiling;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
