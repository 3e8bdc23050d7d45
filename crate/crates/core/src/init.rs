//! Initial conditions.
//!
//! Phase profiles are the standing wave `(1 + tanh(d / (2 sqrt(2) eps))) / 2`
//! of the signed distance `d` (positive inside), which solves
//! `eps^2 q'' = W'(q) / 2` and stays strictly inside `(0, 1)`.

use std::f64::consts::{PI, SQRT_2};

use crate::grid::{Grid, ScalarField};

/// The standing-wave profile at signed distance `d`.
#[inline]
pub fn standing_wave(d: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + (d / (2.0 * SQRT_2 * epsilon)).tanh())
}

/// Disk (ball in 3D) of `radius` around `center`, using torus distance.
pub fn disk_profile(grid: &Grid, center: &[f64], radius: f64, epsilon: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let d = radius - grid.torus_distance(&x, center);
        standing_wave(d, epsilon)
    })
}

/// Slab `|x_axis - position| < width / 2` (periodic), with two flat interfaces.
pub fn stripe_profile(
    grid: &Grid,
    axis: usize,
    position: f64,
    width: f64,
    epsilon: f64,
) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let off = grid.periodic_offset(axis, position, x[axis]).abs();
        standing_wave(0.5 * width - off, epsilon)
    })
}

/// `mean + amplitude * sin(2 pi x_axis / L_axis)`.
pub fn sine_field(grid: &Grid, axis: usize, mean: f64, amplitude: f64) -> ScalarField {
    let l = grid.lengths()[axis];
    ScalarField::from_fn(grid, |x| mean + amplitude * (2.0 * PI * x[axis] / l).sin())
}
