// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attention;
pub mod branches;
pub mod cli;
pub mod config;
pub mod dataprep;
pub mod ela;
pub mod encodings;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod layers;
pub mod numerics;
pub mod pipeline;

pub use error::{Result, WetError};
