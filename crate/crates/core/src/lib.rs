//! Fast context-based pitch estimation.
//!
//! The pipeline runs audio through a log-mel frontend ([`mel`]), a stack of
//! depthwise-separable convolution blocks ([`model`]) and a local
//! weighted-average decoder over a 360-bin cent grid ([`pitch`]).
//! [`augment`], [`eval`] and [`train`] hold the corruption, scoring and toy
//! training tools built around that pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod audio;
pub mod augment;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod mel;
pub mod model;
pub mod pipeline;
pub mod pitch;
pub mod track;
pub mod train;

pub use error::{FcpeError, Result};
