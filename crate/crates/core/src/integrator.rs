//! Time stepping for the coupled phase / surfactant system.
//!
//! The phase field advances by forward Euler. The concentration advances
//! either by forward Euler or by backward Euler through
//! [`helmholtz_solve_in_place`]. Both use the fields at the start of the step, so
//! the two updates are independent (Jacobi order), and the nonlocal term is
//! lagged at its start-of-step value.

use thiserror::Error;

use crate::diagnostics::{energy_report, EnergyReport};
use crate::exec;
use crate::grid::{helmholtz_solve_in_place, Grid, GridError, HelmholtzWork};
use crate::physics::{gamma_clamped, ModelError, ModelParams, PhaseRate, SimState, Variant};

/// Allowed overshoot of `phi` outside `[0, 1]`.
pub const PHI_RANGE_TOL: f64 = 1e-9;
/// Allowed undershoot of `u` below zero.
pub const U_FLOOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UScheme {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub cfl_safety: f64,
    pub u_scheme: UScheme,
    pub dt_override: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            cfl_safety: 0.5,
            u_scheme: UScheme::Implicit,
            dt_override: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(
        "non-finite value {value} in {field} at step {step}, cell {index} (coords {coords:?})"
    )]
    NonFinite {
        step: usize,
        field: &'static str,
        index: usize,
        coords: [usize; 3],
        value: f64,
    },
    #[error("max principle violated at step {step} (t = {t}): phi in [{phi_min:e}, {phi_max:e}], min u = {u_min:e}")]
    MaxPrinciple {
        step: usize,
        t: f64,
        phi_min: f64,
        phi_max: f64,
        u_min: f64,
    },
    #[error("CFL exceeded: dt = {dt:e} is larger than the stable step {stable:e}")]
    CflExceeded { dt: f64, stable: f64 },
    #[error("invalid time step {0}")]
    BadTimeStep(f64),
    #[error("t_end = {t_end} lies before the current time {t}")]
    EndBeforeStart { t: f64, t_end: f64 },
    #[error("cfl_safety must lie in (0, 1], got {0}")]
    BadSafety(f64),
    #[error("implicit concentration step failed: {0}")]
    Helmholtz(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invariant violated at t = {t}: {what}")]
    Invariant { t: f64, what: String },
}

/// Largest forward-Euler step allowed by the stability bounds, scaled by the
/// safety factor: phase diffusion, the stiff reaction, and (explicit only)
/// concentration diffusion.
pub fn stable_dt(grid: &Grid, p: &ModelParams, policy: &StepPolicy) -> f64 {
    let n = grid.ndim() as f64;
    let h2 = grid.min_spacing().powi(2);
    let phi_diffusion = p.tau * h2 / (2.0 * n * p.sigma * p.sigma);
    let reaction = p.tau * p.epsilon * p.epsilon;
    let mut dt = phi_diffusion.min(reaction);
    if policy.u_scheme == UScheme::Explicit {
        dt = dt.min(h2 / (2.0 * n));
    }
    policy.cfl_safety * dt
}

/// The step a run will use: the override if given, otherwise [`stable_dt`].
pub fn resolve_dt(grid: &Grid, p: &ModelParams, policy: &StepPolicy) -> Result<f64, StepError> {
    if !(policy.cfl_safety > 0.0 && policy.cfl_safety <= 1.0) {
        return Err(StepError::BadSafety(policy.cfl_safety));
    }
    let stable = stable_dt(grid, p, policy);
    match policy.dt_override {
        None => Ok(stable),
        Some(dt) if !(dt.is_finite() && dt > 0.0) => Err(StepError::BadTimeStep(dt)),
        Some(dt) if policy.u_scheme == UScheme::Explicit && dt > stable => {
            Err(StepError::CflExceeded { dt, stable })
        }
        Some(dt) => Ok(dt),
    }
}

#[derive(Debug, Clone, Copy)]
struct RowStats {
    phi_min: f64,
    phi_max: f64,
    u_min: f64,
    bad: Option<(usize, bool)>,
}

/// Reusable buffers for repeated steps on one grid.
#[derive(Debug, Default)]
pub struct Stepper {
    phi_next: Vec<f64>,
    u_next: Vec<f64>,
    u_solved: Vec<f64>,
    work: HelmholtzWork,
    steps: usize,
}

impl Stepper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of steps taken so far (used in error reports).
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advance `state` by `dt` in place. On error the state is untouched.
    pub fn advance(
        &mut self,
        state: &mut SimState,
        p: &ModelParams,
        dt: f64,
        policy: &StepPolicy,
    ) -> Result<(), StepError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(StepError::BadTimeStep(dt));
        }
        let grid = state.grid().clone();
        let len = grid.len();
        self.phi_next.resize(len, 0.0);
        self.u_next.resize(len, 0.0);

        let nx = grid.nx();
        let [cx, cy, cz] = grid.inv_h2();
        let three_d = grid.ndim() == 3;
        let rate = PhaseRate::new(p, state.stilde);
        let k = p.k;
        let explicit_u = policy.u_scheme == UScheme::Explicit;
        let const_gamma = match p.variant {
            Variant::ConstGamma(g) => Some(g),
            _ => None,
        };
        let phi = state.phi.values();
        let u = state.u.values();

        let stats = exec::map_rows2(&mut self.phi_next, &mut self.u_next, nx, |row, pn, un| {
            let [ym, yp, zm, zp] = grid.row_neighbours(row);
            let base = row * nx;
            let c = &phi[base..base + nx];
            let cym = &phi[ym * nx..(ym + 1) * nx];
            let cyp = &phi[yp * nx..(yp + 1) * nx];
            let d = &u[base..base + nx];
            let dym = &u[ym * nx..(ym + 1) * nx];
            let dyp = &u[yp * nx..(yp + 1) * nx];
            let (czm, czp, dzm, dzp) = if three_d {
                (
                    &phi[zm * nx..(zm + 1) * nx],
                    &phi[zp * nx..(zp + 1) * nx],
                    &u[zm * nx..(zm + 1) * nx],
                    &u[zp * nx..(zp + 1) * nx],
                )
            } else {
                (c, c, d, d)
            };
            let mut st = RowStats {
                phi_min: f64::INFINITY,
                phi_max: f64::NEG_INFINITY,
                u_min: f64::INFINITY,
                bad: None,
            };
            let mut cell = |i: usize, il: usize, ir: usize| {
                let pc = c[i];
                let uc = d[i];
                let mut lap_phi =
                    cx * (c[il] + c[ir] - 2.0 * pc) + cy * (cym[i] + cyp[i] - 2.0 * pc);
                if three_d {
                    lap_phi += cz * (czm[i] + czp[i] - 2.0 * pc);
                }
                let gam = match const_gamma {
                    Some(g) => g,
                    None => gamma_clamped(uc, p),
                };
                let pnext = pc + dt * rate.rate(lap_phi, pc, gam);
                pn[i] = pnext;
                let unext = if explicit_u {
                    let mut lap_u =
                        cx * (d[il] + d[ir] - 2.0 * uc) + cy * (dym[i] + dyp[i] - 2.0 * uc);
                    if three_d {
                        lap_u += cz * (dzm[i] + dzp[i] - 2.0 * uc);
                    }
                    uc + dt * (lap_u - k * uc + pc)
                } else {
                    // Right-hand side of the backward-Euler system.
                    uc + dt * pc
                };
                un[i] = unext;
                st.phi_min = st.phi_min.min(pnext);
                st.phi_max = st.phi_max.max(pnext);
                st.u_min = st.u_min.min(unext);
                if !(pnext.is_finite() && unext.is_finite()) && st.bad.is_none() {
                    st.bad = Some((base + i, !pnext.is_finite()));
                }
            };
            // Wrapped ends first so the interior loop is branch free.
            cell(0, nx - 1, 1 % nx);
            for i in 1..nx - 1 {
                cell(i, i - 1, i + 1);
            }
            cell(nx - 1, nx - 2, 0);
            st
        });

        let step = self.steps + 1;
        if let Some((index, in_phi)) = stats.iter().find_map(|s| s.bad) {
            let (field, value) = if in_phi {
                ("phi", self.phi_next[index])
            } else {
                ("u", self.u_next[index])
            };
            return Err(StepError::NonFinite {
                step,
                field,
                index,
                coords: grid.coords(index),
                value,
            });
        }

        if !explicit_u {
            let inv_dt = 1.0 / dt;
            for v in self.u_next.iter_mut() {
                *v *= inv_dt;
            }
            self.u_solved.clear();
            self.u_solved.extend_from_slice(state.u.values());
            helmholtz_solve_in_place(
                &grid,
                &self.u_next,
                inv_dt,
                k,
                &mut self.u_solved,
                &mut self.work,
            )?;
            std::mem::swap(&mut self.u_next, &mut self.u_solved);
        }

        let phi_min = stats
            .iter()
            .map(|s| s.phi_min)
            .fold(f64::INFINITY, f64::min);
        let phi_max = stats
            .iter()
            .map(|s| s.phi_max)
            .fold(f64::NEG_INFINITY, f64::max);
        let u_min = if explicit_u {
            stats.iter().map(|s| s.u_min).fold(f64::INFINITY, f64::min)
        } else {
            self.u_next.iter().copied().fold(f64::INFINITY, f64::min)
        };
        if phi_min <= -PHI_RANGE_TOL || phi_max >= 1.0 + PHI_RANGE_TOL || u_min <= -U_FLOOR_TOL {
            return Err(StepError::MaxPrinciple {
                step,
                t: state.t + dt,
                phi_min,
                phi_max,
                u_min,
            });
        }

        std::mem::swap(state.phi.values_mut_vec(), &mut self.phi_next);
        std::mem::swap(state.u.values_mut_vec(), &mut self.u_next);
        state.stilde_l2_accum += state.stilde * state.stilde * dt;
        state.t += dt;
        state.refresh_nonlocal(p);
        self.steps = step;
        Ok(())
    }
}

/// One step from `state`, returning the new state.
pub fn step(
    state: &SimState,
    p: &ModelParams,
    dt: f64,
    policy: &StepPolicy,
) -> Result<SimState, StepError> {
    let mut next = state.clone();
    Stepper::new().advance(&mut next, p, dt, policy)?;
    Ok(next)
}

/// Result of [`run_until`]: the final state and the recorded diagnostics.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    pub reports: Vec<EnergyReport>,
    pub steps: usize,
    pub dt: f64,
}

/// A failed run keeps everything recorded before the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: StepError,
    pub partial: RunOutput,
}

/// Number of steps of size `dt` needed to reach `span`, the last one shortened.
pub fn step_count(span: f64, dt: f64) -> usize {
    if span <= 0.0 {
        return 0;
    }
    let n = span / dt;
    // Absorb roundoff so that e.g. 0.01 / 0.001 does not add a sliver step.
    let whole = n.round();
    if (n - whole).abs() <= 1e-9 * n.max(1.0) {
        whole.max(1.0) as usize
    } else {
        n.ceil() as usize
    }
}

/// Advance to `t_end`, recording an [`EnergyReport`] at the start, every
/// `cadence` steps and at the end. `observer` sees each record and may abort
/// the run by returning an error.
pub fn run_until_with<F>(
    mut state: SimState,
    p: &ModelParams,
    policy: &StepPolicy,
    t_end: f64,
    cadence: usize,
    mut observer: F,
) -> Result<RunOutput, Box<RunFailure>>
where
    F: FnMut(&SimState, &EnergyReport) -> Result<(), StepError>,
{
    let fail = |error: StepError, state: SimState, reports, steps, dt| {
        Box::new(RunFailure {
            error,
            partial: RunOutput {
                state,
                reports,
                steps,
                dt,
            },
        })
    };
    let cadence = cadence.max(1);
    let dt = match resolve_dt(state.grid(), p, policy) {
        Ok(dt) => dt,
        Err(e) => return Err(fail(e, state, Vec::new(), 0, 0.0)),
    };
    if t_end < state.t {
        let e = StepError::EndBeforeStart { t: state.t, t_end };
        return Err(fail(e, state, Vec::new(), 0, dt));
    }
    let t0 = state.t;
    let n = step_count(t_end - t0, dt);
    let mut reports = Vec::new();
    if n == 0 {
        return Ok(RunOutput {
            state,
            reports,
            steps: 0,
            dt,
        });
    }

    let record = |state: &SimState, reports: &mut Vec<EnergyReport>, observer: &mut F| {
        let rep = energy_report(state, p);
        let res = observer(state, &rep);
        reports.push(rep);
        res
    };
    if let Err(e) = record(&state, &mut reports, &mut observer) {
        return Err(fail(e, state, reports, 0, dt));
    }

    let mut stepper = Stepper::new();
    for s in 0..n {
        let h = if s + 1 == n { t_end - state.t } else { dt };
        if let Err(e) = stepper.advance(&mut state, p, h, policy) {
            return Err(fail(e, state, reports, s, dt));
        }
        if s + 1 == n {
            state.t = t_end;
        }
        if (s + 1) % cadence == 0 || s + 1 == n {
            if let Err(e) = record(&state, &mut reports, &mut observer) {
                return Err(fail(e, state, reports, s + 1, dt));
            }
        }
    }
    Ok(RunOutput {
        state,
        reports,
        steps: n,
        dt,
    })
}

/// [`run_until_with`] without an observer.
pub fn run_until(
    state: SimState,
    p: &ModelParams,
    policy: &StepPolicy,
    t_end: f64,
    cadence: usize,
) -> Result<RunOutput, Box<RunFailure>> {
    run_until_with(state, p, policy, t_end, cadence, |_, _| Ok(()))
}
