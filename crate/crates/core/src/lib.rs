//! Differential testing of compiled concurrent code against memory models.

pub mod diff;
pub mod error;
pub mod exec;
pub mod litmus;
pub mod model;
pub mod pipeline;
pub mod relation;
pub mod transform;

#[cfg(test)]
mod fixtures;

pub use error::Error;
