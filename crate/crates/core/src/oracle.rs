//! Sharp-interface reference solutions for radially symmetric interfaces.
//!
//! The interface law is
//! `dR/dt = -(n-1)/R + sqrt(2) (gamma - (alpha/6) w_n (R^n - R0^n))`
//! where `w_n` is the volume of the unit ball. `radial_coupled_solve` pairs it
//! with a finite-volume radial surfactant equation.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use thiserror::Error;

use crate::physics::{gamma_clamped, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle input: {0}")]
    BadInput(String),
    #[error("time {t} is at or past the extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },
    #[error("radius {radius} left the radial domain (limit {limit}) at t = {t}")]
    Escaped { t: f64, radius: f64, limit: f64 },
    #[error("step control failed at t = {t} (R = {radius})")]
    StepFailure { t: f64, radius: f64 },
}

/// Recorded interface radius and the surfactant it sees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// The argument of `gamma` at each sample (empty for uncoupled laws).
    pub u_at_interface: Vec<f64>,
    /// Radial profiles `(t, values at cell centers)`, when requested.
    pub u_profile: Vec<(f64, Vec<f64>)>,
    /// Time at which R reached the smallest resolvable radius.
    pub extinction: Option<f64>,
}

impl OracleTrajectory {
    pub fn final_radius(&self) -> Option<f64> {
        self.radii.last().copied()
    }

    /// Linear interpolation of R at time `t`; `None` outside the record.
    pub fn radius_at(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == n {
            return Some(self.radii[n - 1]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(self.radii[k - 1] + w * (self.radii[k] - self.radii[k - 1]))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,R,u_R")?;
        for (i, (t, r)) in self.times.iter().zip(&self.radii).enumerate() {
            match self.u_at_interface.get(i) {
                Some(u) => writeln!(w, "{t},{r},{u}")?,
                None => writeln!(w, "{t},{r},")?,
            }
        }
        if let Some(te) = self.extinction {
            writeln!(w, "# extinction at t = {te}")?;
        }
        Ok(())
    }
}

/// Volume of the unit ball in dimension `n` (2 or 3).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {n}"),
    }
}

fn check_dim(n: usize) -> Result<(), OracleError> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(OracleError::BadInput(format!(
            "dimension must be 2 or 3, got {n}"
        )))
    }
}

/// Exact shrinking-sphere radius `sqrt(R0^2 - 2 (n-1) t)`.
pub fn mcf_radius(r0: f64, t: f64, n: usize) -> Result<f64, OracleError> {
    check_dim(n)?;
    if !(r0 > 0.0) || !(t >= 0.0) {
        return Err(OracleError::BadInput(format!(
            "need R0 > 0 and t >= 0 (R0 = {r0}, t = {t})"
        )));
    }
    let extinction = r0 * r0 / (2.0 * (n as f64 - 1.0));
    if t >= extinction {
        return Err(OracleError::PastExtinction { t, extinction });
    }
    Ok((r0 * r0 - 2.0 * (n as f64 - 1.0) * t).sqrt())
}

/// Right-hand side of the radial interface law.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceLaw {
    pub n: usize,
    pub alpha: f64,
    pub r0: f64,
}

impl InterfaceLaw {
    #[inline]
    pub fn velocity(&self, r: f64, gamma: f64) -> f64 {
        let n = self.n as f64;
        let penalty = self.alpha / 6.0
            * unit_ball_volume(self.n)
            * (r.powi(self.n as i32) - self.r0.powi(self.n as i32));
        -(n - 1.0) / r + SQRT_2 * (gamma - penalty)
    }
}

/// Classical fixed-step RK4 for a scalar autonomous ODE.
pub fn rk4_fixed<F: Fn(f64) -> f64>(f: F, y0: f64, h: f64, steps: usize) -> f64 {
    let mut y = y0;
    for _ in 0..steps {
        y = rk4_step(&f, y, h);
    }
    y
}

#[inline]
fn rk4_step<F: Fn(f64) -> f64>(f: &F, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Local error target per accepted step.
const LOCAL_TOL: f64 = 1e-13;
/// Radii below this fraction of R0 count as extinct.
const EXTINCTION_FRACTION: f64 = 1e-3;

enum Advance {
    Reached(f64),
    Extinct { t: f64, radius: f64 },
}

/// Integrate `y' = f(y)` over `[t, t + span]` with step-doubling RK4.
/// `h` carries the step size between calls.
fn advance_controlled<F: Fn(f64) -> f64>(
    f: &F,
    y0: f64,
    t0: f64,
    span: f64,
    h: &mut f64,
    r_min: f64,
) -> Result<Advance, OracleError> {
    let mut y = y0;
    let mut done = 0.0;
    let h_floor = span * 1e-12;
    while done < span {
        if y <= r_min {
            return Ok(Advance::Extinct {
                t: t0 + done,
                radius: y,
            });
        }
        let last = span - done <= *h;
        let step = if last { span - done } else { *h };
        let full = rk4_step(f, y, step);
        let mid = rk4_step(f, y, 0.5 * step);
        let two = rk4_step(f, mid, 0.5 * step);
        let err = (two - full).abs();
        let ok = full.is_finite() && two.is_finite() && mid > 0.0 && two > 0.0;
        let tol = LOCAL_TOL + 4.0 * f64::EPSILON * y.abs();
        if ok && err <= tol {
            y = two + (two - full) / 15.0;
            done = if last { span } else { done + step };
            let grow = if err > 0.0 {
                0.9 * (tol / err).powf(0.2)
            } else {
                2.0
            };
            if !last {
                *h = step * grow.clamp(0.2, 2.0);
            }
        } else {
            let shrink = if ok {
                (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.5)
            } else {
                0.25
            };
            *h = step * shrink;
            if *h < h_floor {
                if y < 10.0 * r_min || !ok {
                    return Ok(Advance::Extinct {
                        t: t0 + done,
                        radius: y,
                    });
                }
                return Err(OracleError::StepFailure {
                    t: t0 + done,
                    radius: y,
                });
            }
        }
    }
    Ok(Advance::Reached(y))
}

fn sample_count(t_end: f64, dt: f64) -> Result<usize, OracleError> {
    if !(dt > 0.0) || !dt.is_finite() || !(t_end >= 0.0) {
        return Err(OracleError::BadInput(format!(
            "need dt > 0 and T >= 0 (dt = {dt}, T = {t_end})"
        )));
    }
    let ratio = t_end / dt;
    let rounded = ratio.round();
    Ok(if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    })
}

/// Constant-gamma interface law sampled every `dt` up to `t_end`.
pub fn forced_circle_trajectory(
    r0: f64,
    gamma_hat: f64,
    alpha: f64,
    n: usize,
    dt: f64,
    t_end: f64,
) -> Result<OracleTrajectory, OracleError> {
    check_dim(n)?;
    if !(r0 > 0.0) || !gamma_hat.is_finite() || !(alpha >= 0.0) {
        return Err(OracleError::BadInput(format!(
            "need R0 > 0, finite gamma, alpha >= 0 (R0 = {r0}, gamma = {gamma_hat}, alpha = {alpha})"
        )));
    }
    let steps = sample_count(t_end, dt)?;
    let law = InterfaceLaw { n, alpha, r0 };
    let f = |r: f64| law.velocity(r, gamma_hat);
    let mut traj = OracleTrajectory {
        times: vec![0.0],
        radii: vec![r0],
        ..Default::default()
    };
    let mut r = r0;
    let mut h = dt;
    for s in 0..steps {
        let t0 = s as f64 * dt;
        let t1 = if s + 1 == steps {
            t_end
        } else {
            (s + 1) as f64 * dt
        };
        match advance_controlled(&f, r, t0, t1 - t0, &mut h, EXTINCTION_FRACTION * r0)? {
            Advance::Reached(y) => r = y,
            Advance::Extinct { t, radius } => {
                traj.times.push(t);
                traj.radii.push(radius);
                traj.extinction = Some(t);
                return Ok(traj);
            }
        }
        traj.times.push(t1);
        traj.radii.push(r);
    }
    Ok(traj)
}

/// Geometry and resolution of the radial surfactant solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSetup {
    pub n: usize,
    pub r0: f64,
    pub r_max: f64,
    pub dr: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Keep a profile snapshot every this many steps (0 disables).
    pub profile_every: usize,
}

/// Finite-volume radial mesh: cells `[i dr, (i+1) dr]`.
struct RadialMesh {
    n: usize,
    dr: f64,
    cells: usize,
    /// Cell measures and face measures (face `i` sits at `i dr`).
    volume: Vec<f64>,
    face: Vec<f64>,
}

impl RadialMesh {
    fn new(n: usize, r_max: f64, dr: f64) -> Self {
        let cells = (r_max / dr).round() as usize;
        let w = unit_ball_volume(n);
        let ni = n as i32;
        let volume = (0..cells)
            .map(|i| w * (((i + 1) as f64 * dr).powi(ni) - (i as f64 * dr).powi(ni)))
            .collect();
        let face = (0..=cells)
            .map(|i| n as f64 * w * (i as f64 * dr).powi(ni - 1))
            .collect();
        Self {
            n,
            dr,
            cells,
            volume,
            face,
        }
    }

    fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    /// Fraction of cell `i` lying inside radius `r`.
    fn fill(&self, i: usize, r: f64) -> f64 {
        let a = i as f64 * self.dr;
        let b = a + self.dr;
        if r <= a {
            0.0
        } else if r >= b {
            1.0
        } else {
            let ni = self.n as i32;
            (r.powi(ni) - a.powi(ni)) / (b.powi(ni) - a.powi(ni))
        }
    }

    /// Linear interpolation between cell centers, flat beyond the outer ones.
    fn sample(&self, u: &[f64], r: f64) -> f64 {
        let x = r / self.dr - 0.5;
        if x <= 0.0 {
            return u[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= self.cells {
            return u[self.cells - 1];
        }
        let w = x - i as f64;
        u[i] + w * (u[i + 1] - u[i])
    }

    /// Off-diagonal couplings `A_f / dr` of the diffusion operator.
    fn coupling(&self, face: usize) -> f64 {
        self.face[face] / self.dr
    }

    /// Solve `(c V + L) u = rhs` with `L` the (positive) FV diffusion matrix.
    fn solve(&self, c: f64, rhs: &[f64]) -> Vec<f64> {
        let m = self.cells;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut lower = vec![0.0; m];
        for i in 0..m {
            let west = if i > 0 { self.coupling(i) } else { 0.0 };
            let east = if i + 1 < m { self.coupling(i + 1) } else { 0.0 };
            diag[i] = c * self.volume[i] + west + east;
            lower[i] = -west;
            upper[i] = -east;
        }
        thomas(&lower, &diag, &upper, rhs)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Interface law coupled to `u_t = u_rr + (n-1)/r u_r - k u + 1_{r<R}`.
///
/// Each step first advances R with the profile frozen (gamma sampled at the
/// moving interface), then takes a backward-Euler step of the radial
/// equation with the source filled up to the new radius.
pub fn radial_coupled_solve<U: Fn(f64) -> f64>(
    setup: &RadialSetup,
    u0: U,
    p: &ModelParams,
) -> Result<OracleTrajectory, OracleError> {
    let RadialSetup {
        n,
        r0,
        r_max,
        dr,
        dt,
        t_end,
        profile_every,
    } = *setup;
    check_dim(n)?;
    p.validate()
        .map_err(|e| OracleError::BadInput(e.to_string()))?;
    if !(r0 > 0.0) {
        return Err(OracleError::BadInput(format!(
            "R0 must be positive, got {r0}"
        )));
    }
    if r_max < 3.0 * r0 {
        return Err(OracleError::BadInput(format!(
            "r_max = {r_max} is below 3 R0"
        )));
    }
    if !(dr > 0.0) || dr > r0 / 50.0 {
        return Err(OracleError::BadInput(format!(
            "dr = {dr} does not resolve R0 / 50"
        )));
    }
    let steps = sample_count(t_end, dt)?;
    let mesh = RadialMesh::new(n, r_max, dr);
    let mut u: Vec<f64> = (0..mesh.cells).map(|i| u0(mesh.center(i))).collect();
    if u.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(OracleError::BadInput(
            "initial concentration must be finite and nonnegative".into(),
        ));
    }
    let law = InterfaceLaw {
        n,
        alpha: p.alpha,
        r0,
    };
    let gamma_of = |v: f64| gamma_clamped(v, p);

    let mut r = r0;
    let mut traj = OracleTrajectory::default();
    let record = |traj: &mut OracleTrajectory, t: f64, r: f64, u: &[f64]| {
        traj.times.push(t);
        traj.radii.push(r);
        traj.u_at_interface.push(mesh.sample(u, r));
    };
    record(&mut traj, 0.0, r, &u);
    if profile_every > 0 {
        traj.u_profile.push((0.0, u.clone()));
    }
    let limit = 0.9 * r_max;
    let mut h = dt;
    let mut rhs = vec![0.0; mesh.cells];
    for s in 0..steps {
        let t0 = s as f64 * dt;
        let t1 = if s + 1 == steps {
            t_end
        } else {
            (s + 1) as f64 * dt
        };
        let span = t1 - t0;
        let frozen = &u;
        let f = |rad: f64| law.velocity(rad, gamma_of(mesh.sample(frozen, rad)));
        match advance_controlled(&f, r, t0, span, &mut h, EXTINCTION_FRACTION * r0)? {
            Advance::Reached(y) => r = y,
            Advance::Extinct { t, radius } => {
                record(&mut traj, t, radius, &u);
                traj.extinction = Some(t);
                return Ok(traj);
            }
        }
        if r > limit {
            return Err(OracleError::Escaped {
                t: t1,
                radius: r,
                limit,
            });
        }
        let inv = 1.0 / span;
        for i in 0..mesh.cells {
            rhs[i] = mesh.volume[i] * (inv * u[i] + mesh.fill(i, r));
        }
        u = mesh.solve(inv + p.k, &rhs);
        record(&mut traj, t1, r, &u);
        if profile_every > 0 && (s + 1) % profile_every == 0 {
            traj.u_profile.push((t1, u.clone()));
        }
    }
    Ok(traj)
}

/// Leading-order translation velocity of a circle of radius `radius` whose
/// boundary sees the concentration `u_at`.
///
/// A boundary displacement `a cos(theta)` is a shift by `a`, so the first
/// Fourier mode of the normal velocity `sqrt(2) gamma(u)` gives
/// `dc/dt = (sqrt(2)/pi) int gamma(u(c + R e(theta))) e(theta) dtheta`.
pub fn propulsion_velocity<U: Fn([f64; 2]) -> f64>(
    p: &ModelParams,
    center: [f64; 2],
    radius: f64,
    samples: usize,
    u_at: U,
) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let dtheta = 2.0 * PI / samples as f64;
    for s in 0..samples {
        let th = (s as f64 + 0.5) * dtheta;
        let (sn, cs) = th.sin_cos();
        let x = [center[0] + radius * cs, center[1] + radius * sn];
        let g = gamma_clamped(u_at(x), p);
        acc[0] += g * cs * dtheta;
        acc[1] += g * sn * dtheta;
    }
    [SQRT_2 / PI * acc[0], SQRT_2 / PI * acc[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::Variant;
    use approx::assert_relative_eq;

    #[test]
    fn mcf_examples() {
        assert_relative_eq!(
            mcf_radius(0.3, 0.02, 2).unwrap(),
            0.05f64.sqrt(),
            epsilon = 1e-15
        );
        assert_relative_eq!(mcf_radius(0.3, 0.02, 2).unwrap(), 0.223607, epsilon = 1e-6);
        assert_eq!(mcf_radius(0.3, 0.0, 2).unwrap(), 0.3);
        assert_relative_eq!(mcf_radius(0.3, 0.01, 3).unwrap(), 0.223607, epsilon = 1e-6);
        assert!(matches!(
            mcf_radius(0.3, 0.045, 2),
            Err(OracleError::PastExtinction { .. })
        ));
        assert!(mcf_radius(0.3, 0.1, 2).is_err());
    }

    #[test]
    fn rk4_agrees_with_circle_law() {
        let law = InterfaceLaw {
            n: 2,
            alpha: 0.0,
            r0: 0.3,
        };
        let r = rk4_fixed(|r| law.velocity(r, 0.0), 0.3, 0.02 / 2000.0, 2000);
        assert_relative_eq!(r, 0.05f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let law = InterfaceLaw {
            n: 2,
            alpha: 0.0,
            r0: 0.3,
        };
        let exact = mcf_radius(0.3, 0.04, 2).unwrap();
        let err = |steps: usize| {
            (rk4_fixed(|r| law.velocity(r, 0.0), 0.3, 0.04 / steps as f64, steps) - exact).abs()
        };
        for steps in [20, 40, 80] {
            let ratio = err(steps) / err(2 * steps);
            assert!((12.0..=20.0).contains(&ratio), "{steps}: {ratio}");
        }
    }

    #[test]
    fn unforced_trajectory_reduces_to_mcf() {
        let tr = forced_circle_trajectory(0.3, 0.0, 0.0, 2, 1e-3, 0.04).unwrap();
        assert_eq!(tr.times.len(), 41);
        for (t, r) in tr.times.iter().zip(&tr.radii) {
            assert!(
                (r - mcf_radius(0.3, *t, 2).unwrap()).abs() <= 1e-8,
                "t = {t}"
            );
        }
        assert!(tr.extinction.is_none());
    }

    #[test]
    fn halving_sample_step_changes_little() {
        let a = forced_circle_trajectory(0.3, 2.0, 50.0, 2, 1e-3, 0.05).unwrap();
        let b = forced_circle_trajectory(0.3, 2.0, 50.0, 2, 5e-4, 0.05).unwrap();
        assert!(a.extinction.is_none());
        assert!((a.final_radius().unwrap() - b.final_radius().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn extinction_is_marked() {
        let tr = forced_circle_trajectory(0.3, 0.0, 0.0, 2, 1e-3, 0.06).unwrap();
        let te = tr.extinction.expect("circle must vanish");
        assert!((te - 0.045).abs() < 1e-6, "{te}");
        assert!(tr.radii.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn forced_equilibrium_is_repelling() {
        // dR/dt = -1/R + sqrt(2) gamma vanishes at 0.25 and its slope there
        // is 1/R^2 > 0, so neighbouring radii move away from it.
        let g = 2.0 * SQRT_2;
        let still = forced_circle_trajectory(0.25, g, 0.0, 2, 1e-3, 0.05).unwrap();
        assert!((still.final_radius().unwrap() - 0.25).abs() < 1e-12);
        let lo = forced_circle_trajectory(0.2, g, 0.0, 2, 1e-3, 0.05).unwrap();
        let hi = forced_circle_trajectory(0.3, g, 0.0, 2, 1e-3, 0.05).unwrap();
        assert!(lo.radii.windows(2).all(|w| w[1] < w[0]));
        assert!(hi.radii.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn large_alpha_locks_the_radius() {
        let mut prev = f64::INFINITY;
        for alpha in [1e2, 1e3, 1e4] {
            let tr = forced_circle_trajectory(0.3, 0.0, alpha, 2, 1e-3, 0.02).unwrap();
            let dev = (tr.final_radius().unwrap() - 0.3).abs();
            assert!(dev < prev);
            prev = dev;
        }
        assert!(prev <= 10.0 / 1e4, "{prev}");
    }

    fn setup(t_end: f64) -> RadialSetup {
        RadialSetup {
            n: 2,
            r0: 0.25,
            r_max: 1.0,
            dr: 0.0025,
            dt: 1e-3,
            t_end,
            profile_every: 0,
        }
    }

    #[test]
    fn constant_gamma_decouples() {
        let p = ModelParams {
            alpha: 30.0,
            variant: Variant::ConstGamma(1.5),
            ..ModelParams::default()
        };
        let a = radial_coupled_solve(&setup(0.05), |_| 0.5, &p).unwrap();
        let b = forced_circle_trajectory(0.25, 1.5, 30.0, 2, 1e-3, 0.05).unwrap();
        for (x, y) in a.radii.iter().zip(&b.radii) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn steady_state_matches_direct_solve() {
        use nalgebra::{DMatrix, DVector};
        let p = ModelParams {
            alpha: 1e6,
            ..ModelParams::default()
        };
        let mut s = setup(15.0);
        s.dr = 0.005;
        s.dt = 0.05;
        s.profile_every = 300;
        let tr = radial_coupled_solve(&s, |_| 1.0 / p.k, &p).unwrap();
        let r_end = tr.final_radius().unwrap();
        assert!((r_end - 0.25).abs() < 1e-4);
        let u_end = &tr.u_profile.last().unwrap().1;

        // Assemble k V u + L u = V fill(R) densely and solve by LU.
        let mesh = RadialMesh::new(2, s.r_max, s.dr);
        let m = mesh.cells;
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for i in 0..m {
            a[(i, i)] += p.k * mesh.volume[i];
            b[i] = mesh.volume[i] * mesh.fill(i, r_end);
            if i + 1 < m {
                let c = mesh.face[i + 1] / s.dr;
                a[(i, i)] += c;
                a[(i + 1, i + 1)] += c;
                a[(i, i + 1)] -= c;
                a[(i + 1, i)] -= c;
            }
        }
        let direct = a.lu().solve(&b).unwrap();
        let num: f64 = u_end
            .iter()
            .zip(direct.iter())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let den: f64 = direct.iter().map(|y| y * y).sum();
        assert!((num / den).sqrt() <= 1e-4, "{}", (num / den).sqrt());
    }

    #[test]
    fn fast_relaxation_tracks_local_source() {
        let p = ModelParams {
            k: 1e3,
            alpha: 100.0,
            ..ModelParams::default()
        };
        let mut s = setup(0.02);
        s.profile_every = 20;
        let tr = radial_coupled_solve(&s, |r| if r < 0.25 { 1e-3 } else { 0.0 }, &p).unwrap();
        let (_, u) = tr.u_profile.last().unwrap();
        let mesh = RadialMesh::new(2, s.r_max, s.dr);
        let r = tr.final_radius().unwrap();
        // The correction to phi/k decays like exp(-sqrt(k) d) away from the
        // interface, so the pointwise bound holds about ten lengths out.
        for i in 0..mesh.cells {
            let away = (mesh.center(i) - r).abs() > 10.0 / p.k.sqrt();
            if away {
                let phi = if mesh.center(i) < r { 1.0 } else { 0.0 };
                assert!(
                    (u[i] - phi / p.k).abs() <= 2.0 / (p.k * p.k),
                    "{i}: {}",
                    u[i]
                );
            }
        }
        assert!((u[0] * p.k - 1.0).abs() < 0.01);
        // The interface sees roughly half the inside value.
        let g = gamma_clamped(0.5 / p.k, &p);
        let forced = forced_circle_trajectory(0.25, g, p.alpha, 2, 1e-3, 0.02).unwrap();
        assert!((forced.final_radius().unwrap() - r).abs() < 1e-4);
    }

    #[test]
    fn radial_concentration_stays_positive() {
        let p = ModelParams {
            alpha: 10.0,
            ..ModelParams::default()
        };
        let mut s = setup(0.2);
        s.profile_every = 10;
        let tr = radial_coupled_solve(&s, |r| 1e-6 * r, &p).unwrap();
        for (_, u) in &tr.u_profile {
            assert!(u.iter().all(|&v| v >= 0.0));
        }
        assert!(tr.u_at_interface.iter().skip(1).all(|&v| v > 0.0));
    }

    #[test]
    fn radial_setup_is_validated() {
        let p = ModelParams::default();
        let mut s = setup(0.01);
        s.r_max = 0.5;
        assert!(radial_coupled_solve(&s, |_| 0.5, &p).is_err());
        let mut s = setup(0.01);
        s.dr = 0.01;
        assert!(radial_coupled_solve(&s, |_| 0.5, &p).is_err());
    }

    #[test]
    fn escaping_radius_aborts() {
        let p = ModelParams {
            variant: Variant::ConstGamma(40.0),
            ..ModelParams::default()
        };
        let mut s = setup(0.1);
        s.dr = 0.0025;
        assert!(matches!(
            radial_coupled_solve(&s, |_| 0.5, &p),
            Err(OracleError::Escaped { .. })
        ));
    }

    #[test]
    fn propulsion_points_to_lower_concentration() {
        let p = ModelParams::default();
        let v = propulsion_velocity(&p, [0.5, 0.5], 0.25, 256, |x| {
            0.5 + 0.3 * (2.0 * PI * x[0]).sin()
        });
        // u falls with x around the center, so gamma rises and the disk moves +x.
        assert!(v[0] > 0.0);
        assert!(v[1].abs() < 1e-12);
        let flat = propulsion_velocity(&p, [0.5, 0.5], 0.25, 256, |_| 0.5);
        assert!(flat[0].abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let tr = forced_circle_trajectory(0.3, 0.0, 0.0, 2, 0.01, 0.02).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,R,u_R");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0.3,"));
    }

    #[test]
    fn radius_interpolation() {
        let tr = OracleTrajectory {
            times: vec![0.0, 1.0],
            radii: vec![1.0, 3.0],
            ..Default::default()
        };
        assert_eq!(tr.radius_at(0.5), Some(2.0));
        assert_eq!(tr.radius_at(1.0), Some(3.0));
        assert_eq!(tr.radius_at(1.5), None);
    }
}
