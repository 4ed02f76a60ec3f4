//! Latent geometry graphs (LGGs) over batches of neural-network
//! representations.
//!
//! Each sample of a batch becomes a vertex; edges join k-nearest neighbors
//! under cosine or Gaussian-kernel similarity of the samples' intermediate
//! representations. Graph-signal variation over these graphs, and in
//! particular *label variation* (the weight of edges joining distinct
//! classes), drives three training objectives:
//!
//! * graph knowledge distillation, matching normalized teacher and student
//!   graphs ([`objectives::gkd_loss`]);
//! * an embedding loss that separates classes at the output
//!   ([`objectives::label_variation_loss`]);
//! * a regularizer that keeps label variation changing smoothly from layer to
//!   layer ([`objectives::smoothness_regularizer`]).
//!
//! The crate carries its own small reverse-mode autodiff engine
//! ([`autodiff`]), dense MLPs and synthetic datasets ([`model`]), and an
//! experiment harness with robustness evaluation ([`harness`]).

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
