//! Gradient-only inexact line search (GOLS-I) for choosing learning rates of
//! mini-batch neural network training.
//!
//! The crate contains small dense vector numerics, a fully connected network
//! with analytic gradients, dataset loading and mini-batch samplers, the line
//! search, seven direction generators that use it, directional scan analysis
//! and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod harness;
pub mod linesearch;
pub mod model;
pub mod numeric;
pub mod optim;

pub use error::{Error, Result};
pub use linesearch::{golsi, ExitReason, GolsiParams, GradientOracle, LineFunction, LinePoint, StepResult};
pub use model::{Activation, MlpSpec, OutputHead};
pub use numeric::{SeededRng, Vector};
pub use optim::{Optimizer, OptimizerKind, OptimizerState, StepRule};
