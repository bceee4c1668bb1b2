//! Dense tensors and a small feedforward network with hand-written
//! backpropagation.
//!
//! The network plays two roles: its penultimate (identity-activated) layer is
//! the feature extractor used for exemplar selection and nearest-class-mean
//! classification, and its last layer is a linear classifier head that grows
//! by one unit per newly learned class.
//!
//! Everything is generic over [`Real`] so the same code path can be checked
//! in `f64` against finite differences; training itself runs in `f32`.

mod adam;
mod loss;
mod mlp;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use loss::{loss_and_grads, loss_and_logit_grads, LossOutput};
pub use mlp::{Dense, Gradients, MlpModel};
pub use tensor::{Real, Tensor2};
