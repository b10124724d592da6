//! Multi-scale patch graph network for single image deraining.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`]: dense tensors with a reverse-mode tape.
//! * [`image`]: RGB images, PNG I/O, resampling, synthetic rain, PSNR and SSIM.
//! * [`graph`]: patch decomposition, exact k-NN search and attentional aggregation.
//! * [`network`]: the deraining backbone, parameter store and checkpoints.
//! * [`train`]: loss, ADAM, learning-rate schedule, training loop and evaluation.

pub mod error;
pub mod graph;
pub mod image;
pub mod network;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
