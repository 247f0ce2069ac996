#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod datagen;
pub mod encoders;
pub mod error;
pub mod glm;
pub mod identifiability;
pub mod linalg;
pub mod nonparametric;
pub mod training;

pub use error::{Error, Result};
