//! Phase-field simulation of a deformable self-propelled object driven by
//! surfactant-dependent surface tension.
//!
//! The crate couples an Allen–Cahn type equation with a quasi volume
//! constraint to a reaction–diffusion equation for the surfactant, and ships
//! the tooling needed to check a run against the quantitative estimates the
//! model satisfies: energy bounds, maximum-principle envelopes, equipartition
//! and convergence to the sharp-interface velocity law in radial settings.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod exec;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod init;
pub mod integrator;
pub mod oracle;
pub mod output;
pub mod physics;

pub use grid::{Grid, ScalarField};
pub use physics::{ModelParams, SimState, Variant};
