//! Files, networking and command line around [`ftca_core`].
//!
//! * [`csvio`]: dataset CSV ingestion and export
//! * [`envelope`]: the `.ftcamodel` text format for generators and mappings
//! * [`fednet`]: the framed source/target model-transfer protocol
//! * [`task`], [`harness`]: transfer task files, runs and reports

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csvio;
pub mod envelope;
mod error;
pub mod fednet;
pub mod harness;
pub mod task;

pub use error::{EnvelopeError, FtcaError, NetError, Result};
pub use ftca_core as core;
