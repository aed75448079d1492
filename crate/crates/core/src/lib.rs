//! Lyapunov barrier actor-critic for a planar reach-avoid navigation task.
//!
//! - [`env2d`]: the navigation environment.
//! - [`net`]: dense networks, reverse-mode gradients and gradient checking.
//! - [`lbac`]: transition rewriting, losses, multiplier updates and training.
//! - [`clbf_validate`]: numerical certification of trained artifacts.
//! - [`clf_cbf_qp`]: model-based CLF-CBF quadratic-program baseline.
//! - [`config`], [`checkpoint`]: run configuration and persistence.

// NaN must fail range checks, and index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod clbf_validate;
pub mod clf_cbf_qp;
pub mod config;
pub mod env2d;
pub mod error;
pub mod lbac;
pub mod net;

pub use error::{Error, Result};
