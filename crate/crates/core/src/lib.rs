//! Robust sensing/communication power allocation for multi-UAV integrated
//! sensing and communication (ISAC).
//!
//! Several UAVs localize one ground user by time of arrival while also
//! serving it data. Every UAV splits its power between a sensing pilot and a
//! data stream; the allocators here minimize the position CRB `tr(J_p⁻¹)`
//! while keeping each link above a rate floor despite the location sensing
//! error that corrupts the channel estimate.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod allocators;
pub mod channel;
pub mod cli;
pub mod conic;
pub mod error;
pub mod fisher;
pub mod geometry;
pub mod linalg;
pub mod montecarlo;

pub use error::{Error, Result};
