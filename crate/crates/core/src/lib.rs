//! Simulation and asymptotic evaluation for γ-reflected processes with
//! fractional Brownian motion input.
//!
//! The γ-reflected process is
//!
//! ```text
//! W_γ(t) = X_H(t) − c·t − γ · inf_{s ≤ t} (X_H(s) − c·s)
//! ```
//!
//! where `X_H` is a standard fBm. The crate provides exact path sampling
//! ([`fbm`]), the reflection map ([`reflected`]), Monte Carlo tail estimates
//! of `ψ_{γ,T}(u) = P(sup_{[0,T]} W_γ > u)` ([`montecarlo`]), Pickands and
//! Piterbarg constant estimation ([`constants`]), closed-form tail
//! asymptotics ([`asymptotics`]), a small Gaussian random field lab
//! ([`field`]) and the acceptance harness ([`verify`]).
//!
//! Monte Carlo loops run over fixed-size chunks with per-chunk seeds, so
//! results do not depend on the number of worker threads. With the
//! `parallel` feature (on by default) chunks are dispatched with rayon.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod constants;
pub mod error;
pub mod exec;
pub mod fbm;
pub mod field;
mod linalg;
pub mod montecarlo;
pub mod reflected;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use exec::ExecMode;

/// Crate version, embedded in every machine-readable output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
