//! Desk-scale experiments on Delone–Anderson operators `-Δ + Σ_p ω_p u(· - p)`.
//!
//! Point sets, colourings and grids are deterministic functions of their inputs and a
//! master seed, so every experiment can be rerun bit for bit.

pub mod bounds;
pub mod colouring;
pub mod counterexample;
pub mod error;
pub mod hamiltonian;
pub mod ids;
pub mod pointset;
pub mod runner;
pub mod spectrum;
pub mod stats;
mod stream;

pub use error::{LabError, Result};
