// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model_io;
pub mod rng;
pub mod sim;
pub mod tuning;
pub mod whitening;

pub use error::{Error, Result};
