//! Score-based diffusion laboratory: linear forward SDEs, score networks trained by
//! denoising score matching, density and KL evaluation of the learned model, and
//! numerical checks of generalization bounds.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod quad;
pub mod score_net;
pub mod sde;
pub mod seed;
pub mod targets;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
