//! Command-line and HTTP front ends for the trailer lab simulator. All
//! physics lives in `trailer-lab-core`; this crate only moves data.

pub mod commands;
pub mod error;
pub mod feasibility;
pub mod manifest;
pub mod service;
