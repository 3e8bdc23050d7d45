//! Potentials, surface tension, the nonlocal volume terms and the right-hand
//! side of the phase-field equation.
//!
//! The phase equation is
//!
//! ```text
//! tau * d(phi)/dt = sigma^2 lap(phi) - W'(phi) / (2 eps^2)
//!                   - (1/eps) G'(phi) (-gamma(u) + S)
//! ```
//!
//! where `S` is the nonlocal volume term selected by [`Variant`].

use thiserror::Error;

use crate::exec;
use crate::grid::{laplacian_into, Grid, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} is out of range ({rule})")]
    BadParameter {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("surface tension is undefined for negative concentration u = {0}")]
    NegativeConcentration(f64),
    #[error("phi and u live on different grids")]
    GridMismatch,
    #[error("non-finite phase rate {value} at cell {index} (coords {coords:?})")]
    NonFinite {
        index: usize,
        coords: [usize; 3],
        value: f64,
    },
}

/// Which nonlocal term and surface tension drive the phase equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// `S~ = alpha (int G(phi) - int G(phi_0))` with the decreasing `gamma(u)`.
    STilde,
    /// `S = alpha (int phi - int phi_0)` with the decreasing `gamma(u)`.
    SOld,
    /// `S~` with a constant surface tension; `u` no longer feeds back.
    ConstGamma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub k: f64,
    pub gamma0: f64,
    pub u1: f64,
    pub m: u32,
    pub variant: Variant,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            tau: 1.0,
            sigma: 1.0,
            alpha: 0.0,
            k: 1.0,
            gamma0: 0.1,
            u1: 1.0,
            m: 2,
            variant: Variant::STilde,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::BadParameter {
            name,
            value,
            rule: "must be > 0",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::BadParameter {
            name,
            value,
            rule: "must be >= 0",
        })
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("epsilon", self.epsilon)?;
        positive("tau", self.tau)?;
        positive("sigma", self.sigma)?;
        non_negative("alpha", self.alpha)?;
        positive("k", self.k)?;
        non_negative("gamma0", self.gamma0)?;
        positive("u1", self.u1)?;
        if self.m == 0 {
            return Err(ModelError::BadParameter {
                name: "m",
                value: 0.0,
                rule: "must be a positive integer",
            });
        }
        if let Variant::ConstGamma(g) = self.variant {
            non_negative("gamma_const", g)?;
        }
        Ok(())
    }

    /// `sup_{u >= 0} gamma(u)`.
    pub fn m_gamma(&self) -> f64 {
        match self.variant {
            Variant::ConstGamma(g) => g,
            _ => 1.0 + self.gamma0,
        }
    }

    /// True when the surface tension vanishes identically (pure gradient flow).
    pub fn gamma_is_zero(&self) -> bool {
        matches!(self.variant, Variant::ConstGamma(g) if g == 0.0)
    }

    /// Upper bound of `|S|` over admissible fields on a domain of measure `volume`.
    pub fn nonlocal_bound(&self, volume: f64) -> f64 {
        match self.variant {
            Variant::SOld => self.alpha * volume,
            _ => self.alpha * volume / 3.0,
        }
    }
}

/// Double-well potential `phi^2 (1 - phi)^2 / 2`.
#[inline]
pub fn w(phi: f64) -> f64 {
    let q = phi * (1.0 - phi);
    0.5 * q * q
}

#[inline]
pub fn w_prime(phi: f64) -> f64 {
    phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}

/// Shape function `phi^2 / 2 - phi^3 / 3`, with `G(1) = 1/6`.
#[inline]
pub fn g(phi: f64) -> f64 {
    phi * phi * (0.5 - phi / 3.0)
}

#[inline]
pub fn g_prime(phi: f64) -> f64 {
    phi * (1.0 - phi)
}

/// Surface tension `1 / (1 + (u/u1)^m) + gamma0`, or the constant of
/// [`Variant::ConstGamma`].
pub fn gamma(u: f64, p: &ModelParams) -> Result<f64, ModelError> {
    if u < 0.0 || u.is_nan() {
        return Err(ModelError::NegativeConcentration(u));
    }
    Ok(gamma_clamped(u, p))
}

/// [`gamma`] with `u` clamped at zero; used inside the solver where the
/// maximum principle keeps `u` positive up to roundoff.
#[inline]
pub fn gamma_clamped(u: f64, p: &ModelParams) -> f64 {
    match p.variant {
        Variant::ConstGamma(g) => g,
        _ => {
            let x = u.max(0.0) / p.u1;
            // Integer power by squaring; inlines where powi would not.
            let (mut r, mut base, mut e) = (1.0, x, p.m);
            while e > 0 {
                if e & 1 == 1 {
                    r *= base;
                }
                base *= base;
                e >>= 1;
            }
            1.0 / (1.0 + r) + p.gamma0
        }
    }
}

/// `alpha * (int G(phi) - ref_mass)`.
pub fn stilde(phi: &ScalarField, ref_mass: f64, alpha: f64) -> f64 {
    alpha * (mass_g(phi) - ref_mass)
}

/// `alpha * (int phi - ref_mass_old)`.
pub fn s_old(phi: &ScalarField, ref_mass_old: f64, alpha: f64) -> f64 {
    alpha * (mass_phi(phi) - ref_mass_old)
}

/// `int G(phi)`.
pub fn mass_g(phi: &ScalarField) -> f64 {
    let v = phi.values();
    exec::sum_by_index(v.len(), |i| g(v[i])) * phi.grid().cell_volume()
}

/// `int phi`.
pub fn mass_phi(phi: &ScalarField) -> f64 {
    crate::grid::integrate(phi)
}

/// The mass functional whose drift the variant penalizes.
pub fn variant_mass(phi: &ScalarField, p: &ModelParams) -> f64 {
    match p.variant {
        Variant::SOld => mass_phi(phi),
        _ => mass_g(phi),
    }
}

/// Current nonlocal term for the variant.
pub fn nonlocal_term(phi: &ScalarField, ref_mass: f64, p: &ModelParams) -> f64 {
    match p.variant {
        Variant::SOld => s_old(phi, ref_mass, p.alpha),
        _ => stilde(phi, ref_mass, p.alpha),
    }
}

/// Phase field, concentration and the cached nonlocal quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub phi: ScalarField,
    pub u: ScalarField,
    pub t: f64,
    ref_mass: f64,
    pub stilde: f64,
    /// Running `int_0^t S(s)^2 ds` (left rectangle rule over the steps).
    pub stilde_l2_accum: f64,
}

impl SimState {
    /// Start a run at `t = 0`, freezing the reference mass from the discrete
    /// initial field so that the nonlocal term starts at exactly zero.
    pub fn new(phi: ScalarField, u: ScalarField, p: &ModelParams) -> Result<Self, ModelError> {
        if phi.grid() != u.grid() {
            return Err(ModelError::GridMismatch);
        }
        let ref_mass = variant_mass(&phi, p);
        Ok(Self {
            phi,
            u,
            t: 0.0,
            ref_mass,
            stilde: 0.0,
            stilde_l2_accum: 0.0,
        })
    }

    /// Assemble a state with an explicit reference mass (for restarts and
    /// tests); the nonlocal term is recomputed.
    pub fn with_ref_mass(
        phi: ScalarField,
        u: ScalarField,
        t: f64,
        ref_mass: f64,
        p: &ModelParams,
    ) -> Result<Self, ModelError> {
        if phi.grid() != u.grid() {
            return Err(ModelError::GridMismatch);
        }
        let stilde = nonlocal_term(&phi, ref_mass, p);
        Ok(Self {
            phi,
            u,
            t,
            ref_mass,
            stilde,
            stilde_l2_accum: 0.0,
        })
    }

    pub fn ref_mass(&self) -> f64 {
        self.ref_mass
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    /// Initial-data hypotheses of the maximum principle: `0 < phi < 1`, `u > 0`.
    pub fn hypotheses_hold(&self) -> bool {
        self.phi.values().iter().all(|&v| v > 0.0 && v < 1.0)
            && self.u.values().iter().all(|&v| v > 0.0)
    }

    pub(crate) fn refresh_nonlocal(&mut self, p: &ModelParams) {
        self.stilde = nonlocal_term(&self.phi, self.ref_mass, p);
    }
}

/// Coefficients of the pointwise phase rate, hoisted out of cell loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PhaseRate {
    sigma2: f64,
    inv_2eps2: f64,
    inv_eps: f64,
    inv_tau: f64,
    nonlocal: f64,
}

impl PhaseRate {
    pub(crate) fn new(p: &ModelParams, nonlocal: f64) -> Self {
        Self {
            sigma2: p.sigma * p.sigma,
            inv_2eps2: 0.5 / (p.epsilon * p.epsilon),
            inv_eps: 1.0 / p.epsilon,
            inv_tau: 1.0 / p.tau,
            nonlocal,
        }
    }

    /// `d(phi)/dt` at a cell given its Laplacian and surface tension.
    #[inline(always)]
    pub(crate) fn rate(&self, lap: f64, phi: f64, gamma: f64) -> f64 {
        let q = phi * (1.0 - phi);
        let wp = q * (1.0 - 2.0 * phi);
        (self.sigma2 * lap - wp * self.inv_2eps2 - self.inv_eps * q * (self.nonlocal - gamma))
            * self.inv_tau
    }
}

/// `d(phi)/dt` of the phase equation at the given state.
pub fn rhs_phi(state: &SimState, p: &ModelParams) -> Result<ScalarField, ModelError> {
    let grid = state.grid();
    let mut lap = vec![0.0; grid.len()];
    laplacian_into(grid, state.phi.values(), &mut lap);
    let rate = PhaseRate::new(p, state.stilde);
    let phi = state.phi.values();
    let u = state.u.values();
    let out: Vec<f64> = (0..grid.len())
        .map(|i| rate.rate(lap[i], phi[i], gamma_clamped(u[i], p)))
        .collect();
    if let Some((index, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            index,
            coords: grid.coords(index),
            value,
        });
    }
    Ok(ScalarField::from_raw(grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn potential_values() {
        assert_eq!(w(0.5), 1.0 / 32.0);
        assert_eq!(w_prime(0.25), 0.09375);
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(w_prime(x), 0.0);
        }
        assert_eq!(w(0.0), 0.0);
        assert_eq!(w(1.0), 0.0);
    }

    #[test]
    fn shape_function_values() {
        assert_relative_eq!(g(1.0), 1.0 / 6.0, epsilon = 1e-16);
        assert_relative_eq!(g(0.5), 1.0 / 12.0, epsilon = 1e-16);
        assert_eq!(g_prime(0.5), 0.25);
        assert_eq!((2.0 * w(0.5)).sqrt(), 0.25);
    }

    #[test]
    fn gamma_examples() {
        let mut p = params();
        p.gamma0 = 0.3;
        assert_relative_eq!(gamma(0.0, &p).unwrap(), 1.3);
        assert_relative_eq!(gamma(0.0, &p).unwrap(), p.m_gamma());
        assert_relative_eq!(gamma(p.u1, &p).unwrap(), 0.8);
        let far = gamma(1e6 * p.u1, &p).unwrap();
        assert!((far - p.gamma0).abs() <= 1e-11);
        assert!(gamma(-1e-3, &p).is_err());
        p.variant = Variant::ConstGamma(2.5);
        assert_eq!(gamma(7.0, &p).unwrap(), 2.5);
        assert_eq!(p.m_gamma(), 2.5);
    }

    #[test]
    fn gamma_clamps_roundoff_negatives() {
        let p = params();
        assert_eq!(gamma_clamped(-1e-17, &p), gamma_clamped(0.0, &p));
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let bad = [
            ModelParams {
                epsilon: 0.0,
                ..params()
            },
            ModelParams {
                tau: -1.0,
                ..params()
            },
            ModelParams {
                alpha: -1.0,
                ..params()
            },
            ModelParams { k: 0.0, ..params() },
            ModelParams {
                u1: 0.0,
                ..params()
            },
            ModelParams { m: 0, ..params() },
            ModelParams {
                gamma0: f64::NAN,
                ..params()
            },
            ModelParams {
                variant: Variant::ConstGamma(-1.0),
                ..params()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn nonlocal_examples() {
        let grid = Grid::unit(2, 16).unwrap();
        let one = ScalarField::constant(&grid, 1.0);
        let zero = ScalarField::constant(&grid, 0.0);
        let half = ScalarField::constant(&grid, 0.5);
        assert_eq!(stilde(&one, mass_g(&one), 3.0), 0.0);
        assert_relative_eq!(stilde(&one, mass_g(&zero), 6.0), 1.0, epsilon = 1e-14);
        assert_eq!(s_old(&one, mass_phi(&one), 1.0), 0.0);
        assert_relative_eq!(s_old(&one, mass_phi(&zero), 1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(s_old(&half, mass_phi(&zero), 2.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn stilde_bound_random_fields() {
        use rand::{Rng, SeedableRng};
        let grid = Grid::unit(2, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let alpha = 10.0;
        let bound = alpha * grid.volume() / 3.0;
        for _ in 0..10_000 {
            let a = ScalarField::from_fn(&grid, |_| rng.gen::<f64>());
            let b = ScalarField::from_fn(&grid, |_| rng.gen::<f64>().powi(3));
            let s = stilde(&a, mass_g(&b), alpha);
            assert!(s.abs() <= bound);
        }
    }

    #[test]
    fn rhs_pure_phase_is_stationary() {
        let grid = Grid::unit(2, 16).unwrap();
        let p = params();
        let phi = ScalarField::constant(&grid, 1.0);
        let u = ScalarField::from_fn(&grid, |x| 1.0 + x[0]);
        let s = SimState::new(phi, u, &p).unwrap();
        assert!(rhs_phi(&s, &p).unwrap().max_abs() == 0.0);

        let s = SimState::new(
            ScalarField::constant(&grid, 0.0),
            ScalarField::constant(&grid, 1.0),
            &p,
        )
        .unwrap();
        assert!(rhs_phi(&s, &p).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn rhs_uniform_growth_pressure() {
        let grid = Grid::unit(2, 16).unwrap();
        let gval = 1.7;
        let p = ModelParams {
            epsilon: 0.05,
            variant: Variant::ConstGamma(gval),
            ..params()
        };
        let s = SimState::new(
            ScalarField::constant(&grid, 0.5),
            ScalarField::constant(&grid, 0.3),
            &p,
        )
        .unwrap();
        let rhs = rhs_phi(&s, &p).unwrap();
        // Independent scalar evaluation of the formula.
        let scalar = {
            let phi: f64 = 0.5;
            let wp = phi * (1.0 - phi) * (1.0 - 2.0 * phi);
            let gp = phi * (1.0 - phi);
            -wp / (2.0 * p.epsilon.powi(2)) - gp * (-gval + 0.0) / p.epsilon
        };
        assert_relative_eq!(scalar, gval / (4.0 * p.epsilon), max_relative = 1e-15);
        for &v in rhs.values() {
            assert_relative_eq!(v, scalar, max_relative = 1e-14);
        }
    }

    /// The standing wave solves the 1D profile equation exactly, so the
    /// residual is discretization error and drops ~4x when h halves.
    #[test]
    fn rhs_standing_wave_is_near_stationary() {
        let eps = 0.01;
        let residual = |nx: usize| {
            let grid = Grid::new(&[nx, 8], &[1.0, 1.0]).unwrap();
            let p = ModelParams {
                epsilon: eps,
                variant: Variant::ConstGamma(0.0),
                ..params()
            };
            let phi = crate::init::stripe_profile(&grid, 0, 0.5, 0.5, eps);
            let u = ScalarField::constant(&grid, 1.0);
            let s = SimState::new(phi, u, &p).unwrap();
            rhs_phi(&s, &p).unwrap().max_abs()
        };
        let coarse = residual(512);
        let fine = residual(1024);
        // Natural rate scale of the equation is 1/eps^2.
        assert!(
            coarse <= 10.0 / (eps * eps) * (1.0 / 512.0 / eps).powi(2),
            "{coarse}"
        );
        let ratio = coarse / fine;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn potential_identities(phi in 0.0f64..=1.0) {
            prop_assert!((g_prime(phi) - (2.0 * w(phi)).sqrt()).abs() <= 1e-12);
            prop_assert!((w(phi) - w(1.0 - phi)).abs() <= 1e-16);
            prop_assert!((g(phi) + g(1.0 - phi) - 1.0 / 6.0).abs() <= 1e-12);
            prop_assert!(g(phi) >= 0.0 && g(phi) <= 1.0 / 6.0 + 1e-16);
        }

        #[test]
        fn gamma_is_monotone_and_bounded(a in 0.0f64..50.0, b in 0.0f64..50.0, m in 1u32..6) {
            let p = ModelParams { m, gamma0: 0.2, ..ModelParams::default() };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let gl = gamma(lo, &p).unwrap();
            let gh = gamma(hi, &p).unwrap();
            prop_assert!(gh <= gl);
            prop_assert!(gh > p.gamma0 && gl <= 1.0 + p.gamma0);
        }
    }
}
