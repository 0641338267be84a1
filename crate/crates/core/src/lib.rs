#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cross;
pub mod integrator;
pub mod interpolation;
mod linalg;
pub mod oracle_quadrature;
pub mod oscillators;
pub mod prototype_pipeline;
pub mod tensor_train;
