//! Dense matrices and a minimal reverse-mode differentiation core.

mod check;
mod matrix;
mod params;
mod tape;

pub use check::grad_check;
pub use matrix::Matrix;
pub use params::{ParamId, ParamStore};
pub use tape::{activation, sigmoid, softplus, Activation, Tape, Var};
