//! Class-incremental learning with fast exemplar selection and quantized
//! replay memory.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor_nn`]: dense tensors, a small MLP with manual backprop, the
//!   classification + distillation loss and Adam.
//! - [`selection`]: herding and bounded max-heap nearest-to-mean exemplar
//!   selection.
//! - [`quantization`]: affine 8-bit and half-precision storage of exemplars.
//! - [`memory`]: per-class exemplar sets under a global budget, plus the
//!   `FICL` snapshot format.
//! - [`learner`]: the incremental protocol driver and nearest-class-mean
//!   classification.
//! - [`data_io`]: the `FDSF` dataset format, synthetic generators and
//!   stratified splitting.
//! - [`harness`]: experiment grids, selection benchmarks and storage
//!   accounting used by the command-line front end.

mod codec;
pub mod data_io;
pub mod error;
pub mod harness;
pub mod learner;
pub mod memory;
pub mod quantization;
pub mod selection;
pub mod tensor_nn;

pub use error::{Error, Result};
