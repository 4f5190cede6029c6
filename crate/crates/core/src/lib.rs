#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dataset;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod gmm;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod segmentation;
pub mod sift;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
