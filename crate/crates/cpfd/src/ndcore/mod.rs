//! Numeric substrate: dense matrices and reverse-mode differentiation.

pub mod matrix;
pub mod tape;

pub use matrix::{softmax_t, softmax_t_rows, Matrix};
pub use tape::{concat_cols, GradTape, Var};
