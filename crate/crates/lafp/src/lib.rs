//! Achievable-rate regions for the ergodic fading MIMO broadcast channel.
//!
//! A transmitter with `M` antennas serves `L` users whose channel matrices
//! are random, known to each receiver but only in distribution to the
//! transmitter. Users are encoded successively; user `l` treats the
//! already-encoded signals as non-causally known interference through a
//! linear assignment `U = F S + X`, a fading generalization of
//! dirty-paper coding. This crate computes:
//!
//! - the linear-assignment fading-paper (LAFP) achievable region,
//! - a baseline region for dirty-paper precoding matched to the mean fade,
//! - a cooperative upper bound on the sum rate, minimized over joint
//!   fade/noise correlations that preserve each user's marginal channel,
//! - a decorrelation construction that turns correlated per-user signals
//!   into independent ones without losing rate, and
//! - a brute-force quantized side-information rate used as an independent
//!   numerical oracle for the closed-form rate.
//!
//! Start with the runnable programs in `examples/`; each exercises one of
//! the capabilities above end to end. The `lafp` binary wraps the same
//! entry points behind a small command-line interface.

pub mod cli;
pub mod decorrelate;
pub mod dirty_paper;
pub mod error;
pub mod fading_paper;
pub mod gp_quant;
pub mod linalg;
pub mod region;
pub mod sato;
pub mod scenario;

pub use error::{Error, Result};
pub use linalg::{Mat, SymPSD};
pub use scenario::{load_scenario, Scenario, UserChannel};
