//! Minimal reverse-mode automatic differentiation over rank-4 tensors.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use conv::ConvSpec;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{CustomBackward, Graph, Var, BCE_CLAMP};
pub use optim::{adam_step, AdamConfig, ParamSet, Parameter};

#[cfg(test)]
mod tests;
