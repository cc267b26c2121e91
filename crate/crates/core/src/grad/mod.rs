//! Reverse-mode differentiation, Adam and finite-difference checking.

mod adam;
mod check;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use check::{
    grad_check, relative_error, Evaluation, GradCheckReport, TensorCheck, DEFAULT_TOLERANCE,
};
pub use tape::{Tape, Var};
pub use tensor::{Tensor, MAX_RANK};
