//! Kinematics, gain-scheduled LQ stabilization and pure-pursuit path
//! tracking for a reversing truck with an off-axle hitched dolly and
//! trailer, plus a multi-rate closed-loop simulator built on them.

// `!(x < limit)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod error;
pub mod lqr;
pub mod model;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};
