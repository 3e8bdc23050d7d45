//! Energies, equipartition, maximum-principle envelopes and the a-priori
//! bounds that constrain a run, plus an online checker that applies them to
//! every recorded snapshot.

use crate::exec;
use crate::grid::{grad_sq_into, ScalarField};
use crate::physics::{g, gamma_clamped, variant_mass, w, ModelParams, SimState, Variant};

/// Multiplicative slack applied to the a-priori bounds.
pub const BOUND_SLACK: f64 = 1.05;
/// Absolute tolerance of the envelope comparisons.
pub const ENVELOPE_TOL: f64 = 1e-8;
/// Relative tolerance of the energy-decrease check (times `E(0)`).
pub const DISSIPATION_TOL: f64 = 1e-10;

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    /// `int eps sigma^2 |grad phi|^2 / 2 + W(phi) / (2 eps)`.
    pub e_s: f64,
    /// `alpha / 2 (mass - ref_mass)^2`.
    pub e_p: f64,
    pub e: f64,
    /// `int | eps |grad phi|^2 / 2 - W(phi) / (2 eps) |`.
    pub xi: f64,
    /// Total mass of the diffuse surface measure.
    pub mu_total: f64,
    pub stilde: f64,
    /// `int G(phi)`.
    pub mass_g: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub u_min: f64,
    /// `int_0^t S~(s)^2 ds`.
    pub stilde_l2_accum: f64,
}

pub fn energy_report(state: &SimState, p: &ModelParams) -> EnergyReport {
    let grid = state.grid();
    let n = grid.len();
    let dv = grid.cell_volume();
    let phi = state.phi.values();
    let mut gs = vec![0.0; n];
    grad_sq_into(grid, phi, &mut gs);

    let eps = p.epsilon;
    let s2 = p.sigma * p.sigma;
    let inv_2eps = 0.5 / eps;
    let e_s = exec::sum_by_index(n, |i| 0.5 * eps * s2 * gs[i] + w(phi[i]) * inv_2eps) * dv;
    let mu_total = exec::sum_by_index(n, |i| 0.5 * eps * gs[i] + w(phi[i]) * inv_2eps) * dv;
    let xi = exec::sum_by_index(n, |i| (0.5 * eps * gs[i] - w(phi[i]) * inv_2eps).abs()) * dv;
    let mass_g = exec::sum_by_index(n, |i| g(phi[i])) * dv;
    let mass = match p.variant {
        Variant::SOld => variant_mass(&state.phi, p),
        _ => mass_g,
    };
    let e_p = 0.5 * p.alpha * (mass - state.ref_mass()).powi(2);

    EnergyReport {
        t: state.t,
        e_s,
        e_p,
        e: e_s + e_p,
        xi,
        mu_total,
        stilde: state.stilde,
        mass_g,
        phi_min: state.phi.min(),
        phi_max: state.phi.max(),
        u_min: state.u.min(),
        stilde_l2_accum: state.stilde_l2_accum,
    }
}

/// `E + int gamma(u) (1 - G(phi))`: the functional whose L2 gradient, with
/// `u` frozen, drives the phase equation.
pub fn free_energy(state: &SimState, p: &ModelParams) -> f64 {
    let rep = energy_report(state, p);
    let phi = state.phi.values();
    let u = state.u.values();
    let forcing = exec::sum_by_index(phi.len(), |i| gamma_clamped(u[i], p) * (1.0 - g(phi[i])))
        * state.grid().cell_volume();
    rep.e + forcing
}

/// Density of the diffuse surface measure, `eps |grad phi|^2 / 2 + W / (2 eps)`.
pub fn export_measure_density(state: &SimState, p: &ModelParams) -> ScalarField {
    let grid = state.grid();
    let phi = state.phi.values();
    let mut gs = vec![0.0; grid.len()];
    grad_sq_into(grid, phi, &mut gs);
    let eps = p.epsilon;
    for (v, &f) in gs.iter_mut().zip(phi) {
        *v = 0.5 * eps * *v + w(f) / (2.0 * eps);
    }
    ScalarField::from_raw(grid, gs)
}

/// Constants of the exponential sub/super-solutions bounding `phi` and `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub k: f64,
}

impl EnvelopeParams {
    /// Envelope constants from the initial state. The decay rate carries a
    /// `1/tau` factor, which is 1 in the reference scaling.
    pub fn from_initial(state: &SimState, p: &ModelParams) -> Self {
        let vol = state.grid().volume();
        let eps = p.epsilon;
        let d1 = 1.0 - state.phi.max().max(0.5);
        let d2 = (0.5 + eps * (p.m_gamma() + p.nonlocal_bound(vol))) / (eps * eps * p.tau);
        Self {
            d1,
            d2,
            d3: state.phi.min(),
            d4: state.u.min(),
            k: p.k,
        }
    }

    pub fn phi_upper(&self, t: f64) -> f64 {
        1.0 - self.d1 * (-self.d2 * t).exp()
    }

    pub fn phi_lower(&self, t: f64) -> f64 {
        self.d3 * (-self.d2 * t).exp()
    }

    pub fn u_lower(&self, t: f64) -> f64 {
        self.d4 * (-self.k * t).exp()
    }
}

/// Worst margins (bound minus value, positive is safe) of the three envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck {
    pub pass: bool,
    pub phi_upper_margin: f64,
    pub phi_lower_margin: f64,
    pub u_lower_margin: f64,
}

pub fn envelope_check(state: &SimState, env: &EnvelopeParams) -> EnvelopeCheck {
    let t = state.t;
    let phi_upper_margin = env.phi_upper(t) - state.phi.max();
    let phi_lower_margin = state.phi.min() - env.phi_lower(t);
    let u_lower_margin = state.u.min() - env.u_lower(t);
    EnvelopeCheck {
        pass: phi_upper_margin >= -ENVELOPE_TOL
            && phi_lower_margin >= -ENVELOPE_TOL
            && u_lower_margin >= -ENVELOPE_TOL,
        phi_upper_margin,
        phi_lower_margin,
        u_lower_margin,
    }
}

/// `e^{2 M^2 t} E(0)`, the energy growth bound.
pub fn gronwall_bound(e0: f64, t: f64, p: &ModelParams) -> f64 {
    (2.0 * p.m_gamma().powi(2) * t).exp() * e0
}

/// Outcome of [`volume_drift_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    pub drift: f64,
    /// `sqrt((2/alpha) e^{2 M^2 t} E(0))`; infinite when `alpha == 0`.
    pub bound: f64,
    pub pass: bool,
}

/// `|int G(phi) - int G(phi_0)| <= sqrt((2/alpha) e^{2 M^2 t} E(0))`, with
/// [`BOUND_SLACK`].
pub fn volume_drift_bound(
    report: &EnergyReport,
    e0: f64,
    mass_g0: f64,
    p: &ModelParams,
) -> DriftCheck {
    let drift = (report.mass_g - mass_g0).abs();
    if p.alpha <= 0.0 {
        return DriftCheck {
            drift,
            bound: f64::INFINITY,
            pass: true,
        };
    }
    let bound = (2.0 / p.alpha * gronwall_bound(e0, report.t, p)).sqrt();
    DriftCheck {
        drift,
        bound,
        pass: drift <= BOUND_SLACK * bound,
    }
}

/// Applies every a-priori bound to a stream of reports.
#[derive(Debug, Clone)]
pub struct BoundChecker {
    params: ModelParams,
    volume: f64,
    e0: f64,
    mass_g0: f64,
    envelope: Option<EnvelopeParams>,
    prev_e: Option<f64>,
}

impl BoundChecker {
    /// Set up from the initial state. Envelopes are only enforced when the
    /// initial data satisfy `0 < phi < 1`, `u > 0`.
    pub fn new(initial: &SimState, p: &ModelParams) -> Self {
        let rep = energy_report(initial, p);
        let envelope = initial
            .hypotheses_hold()
            .then(|| EnvelopeParams::from_initial(initial, p));
        Self {
            params: p.clone(),
            volume: initial.grid().volume(),
            e0: rep.e,
            mass_g0: rep.mass_g,
            envelope,
            prev_e: None,
        }
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn mass_g0(&self) -> f64 {
        self.mass_g0
    }

    pub fn envelope(&self) -> Option<&EnvelopeParams> {
        self.envelope.as_ref()
    }

    /// Check one snapshot; returns a description of the first violated bound.
    pub fn check(&mut self, state: &SimState, rep: &EnergyReport) -> Result<(), String> {
        let p = &self.params;
        let s_bound = p.nonlocal_bound(self.volume);
        if rep.stilde.abs() > s_bound * (1.0 + 1e-12) {
            return Err(format!(
                "nonlocal bound violated: |S| = {} > {}",
                rep.stilde.abs(),
                s_bound
            ));
        }
        let growth = gronwall_bound(self.e0, rep.t, p);
        if rep.e > BOUND_SLACK * growth {
            return Err(format!(
                "energy bound violated: E = {} > 1.05 * e^(2M^2 t) E(0) = {}",
                rep.e,
                BOUND_SLACK * growth
            ));
        }
        if p.gamma_is_zero() {
            if let Some(prev) = self.prev_e {
                if rep.e > prev + DISSIPATION_TOL * self.e0 {
                    return Err(format!(
                        "energy increased without forcing: {} -> {}",
                        prev, rep.e
                    ));
                }
            }
        }
        self.prev_e = Some(rep.e);
        if !matches!(p.variant, Variant::SOld) {
            let d = volume_drift_bound(rep, self.e0, self.mass_g0, p);
            if !d.pass {
                return Err(format!(
                    "volume drift {} exceeds 1.05 * {}",
                    d.drift, d.bound
                ));
            }
        }
        if let Some(env) = &self.envelope {
            let c = envelope_check(state, env);
            if !c.pass {
                return Err(format!(
                    "max principle envelope violated (margins: phi upper {:e}, phi lower {:e}, u lower {:e})",
                    c.phi_upper_margin, c.phi_lower_margin, c.u_lower_margin
                ));
            }
        }
        Ok(())
    }
}
