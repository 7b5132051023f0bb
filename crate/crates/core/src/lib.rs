// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod dictionary;
pub mod edmd;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod plot;
pub mod resolvent;
pub mod spectral;
pub mod systems;
mod random;

pub use error::{Error, Result};
pub use num_complex::Complex64;
