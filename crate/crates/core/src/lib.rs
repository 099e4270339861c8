//! Reachability-based safety verification for autonomous spacecraft rendezvous.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod hybrid;
pub mod io;
pub mod lqr;
pub mod numsim;
pub mod orbital;
pub mod starset;
pub mod verifier;

pub use error::{Error, Result};
