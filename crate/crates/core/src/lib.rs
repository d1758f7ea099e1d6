//! Numerical core for federated transfer component analysis (FTCA).
//!
//! Everything in this crate is pure computation over in-memory matrices and
//! needs only an allocator: dataset normalization, kernel MMD estimators, the
//! TCA generalized eigen-solution, a small MLP/GAN tabular synthesizer, the
//! regression backends and the end-to-end evaluation of a transfer task.
//! File formats, networking and the command line live in the `ftca` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod diagnostics;
mod error;
pub mod kernel;
pub mod linalg;
pub mod mlp;
pub mod pipeline;
pub mod regress;
pub mod synth;
pub mod tabgen;
pub mod tca;

pub use crate::error::{Error, Result};
pub use crate::linalg::Matrix;
