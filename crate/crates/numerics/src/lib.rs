//! Dense tensors and reverse-mode differentiation for the DeFT-AN speech
//! enhancement network.
//!
//! Ops are methods on [`Graph`]; each records a backward closure so that
//! [`Graph::backward`] can produce exact gradients. The scalar type is
//! generic so that the same code runs in `f32` for training and in `f64` for
//! [`gradcheck`].

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod param;
pub mod real;
pub mod tensor;

pub use error::{NumericsError, Result};
pub use gradcheck::{grad_check, grad_check_single, GradCheckOptions, GradCheckReport, ScalarFn};
pub use graph::{BackwardCtx, Gradients, Graph, Mode, Var};
pub use ops::{softmax_rows, MhsaParams};
pub use param::{BoundParams, ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tensor::Tensor;

pub use ops::LAYER_NORM_EPS;
