//! Asymptotic and finite-length analysis of coded slotted ALOHA (CSA) over
//! the K-multi-packet-reception channel.
//!
//! - [`codes`]: segment-level binary linear block codes, information
//!   functions and MAP erasure closure.
//! - [`de`]: uncoupled density evolution and load thresholds.
//! - [`bound`]: the converse bound `𝔾(R, K)` and its area functionals.
//! - [`coupled`]: density evolution for spatially-coupled repetition CSA.
//! - [`sim`]: Monte Carlo frames with iterative interference cancellation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod codes;
pub mod coupled;
pub mod de;
pub mod error;
mod gf2;
pub mod numeric;
pub mod sim;

pub use codes::{info_function, validate_code, CodeSpec, CodeViolation, InfoFunctionTable, RawCode};
pub use de::{Convergence, DeOutcome, DeParams, DeTrace, Ensemble, LoadThreshold};
pub use error::{Error, Result};
pub use gf2::rank_gf2;
