//! Semi-classical equations of motion, fixed-step RK4 relaxation and numerical
//! location of the bifurcation.
//!
//! Membrane damping enters both quadratures at the full rate,
//! `dx/dt = p - gamma x`, `dp/dt = ... - gamma p`, which puts the fixed-point
//! bifurcation at `mu = sqrt(1 + gamma^2)`.

use std::f64::consts::TAU;
use std::io::{self, Write};
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{field_steady_states, Branch, SteadyState};
use crate::model::{DimensionlessParams, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid integrator config: {0}")]
    Config(String),
    #[error("no attractor: kappa = gamma = 0")]
    NoDissipation,
    #[error("not converged by t = {t_max}: mean residual {residual:e} over the last period")]
    NotConverged { t_max: f64, residual: f64, last: StateVector },
    #[error("trajectory diverged at t = {t}")]
    Diverged { t: f64 },
    #[error("range [{lo}, {hi}] does not bracket the transition (displaced: {lo_displaced}, {hi_displaced})")]
    Unbracketed { lo: f64, hi: f64, lo_displaced: bool, hi_displaced: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StateVector {
    pub x: f64,
    pub p: f64,
    pub re_a: f64,
    pub im_a: f64,
    pub re_b: f64,
    pub im_b: f64,
}

impl StateVector {
    pub fn new(x: f64, p: f64, a: Complex64, b: Complex64) -> Self {
        Self {
            x,
            p,
            re_a: a.re,
            im_a: a.im,
            re_b: b.re,
            im_b: b.im,
        }
    }

    pub fn a(&self) -> Complex64 {
        Complex64::new(self.re_a, self.im_a)
    }

    pub fn b(&self) -> Complex64 {
        Complex64::new(self.re_b, self.im_b)
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.x, self.p, self.re_a, self.im_a, self.re_b, self.im_b]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            x: v[0],
            p: v[1],
            re_a: v[2],
            im_a: v[3],
            re_b: v[4],
            im_b: v[5],
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Parity image `(x, p, a, b) -> (-x, -p, -b, -a)`.
    pub fn parity_image(&self) -> Self {
        Self::new(-self.x, -self.p, -self.b(), -self.a())
    }

    /// Fixed point of the normal branch: `x = p = 0`, fields slaved.
    pub fn normal_fixed_point(p: &DimensionlessParams) -> Self {
        let (a, b) = field_steady_states(p, 0.0);
        Self::new(0.0, 0.0, a, b)
    }
}

impl Add for StateVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (self.to_array(), o.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Mul<f64> for StateVector {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub residual_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 2000.0,
            residual_tol: 1e-9,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Config(format!("dt = {}", self.dt)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(DynamicsError::Config(format!("residual_tol = {}", self.residual_tol)));
        }
        if !(self.t_max > 0.0) {
            return Err(DynamicsError::Config(format!("t_max = {}", self.t_max)));
        }
        Ok(())
    }

    /// Step actually used: `min(dt, 0.01 / max(g, kappa, 1))`.
    pub fn effective_dt(&self, p: &DimensionlessParams) -> f64 {
        self.dt.min(0.01 / p.g.max(p.kappa).max(1.0))
    }
}

pub fn eom_rhs(p: &DimensionlessParams, s: &StateVector) -> StateVector {
    let sv = p.v.sqrt();
    let k = p.lambda / sv;
    let (a, b) = (s.a(), s.b());
    let i = Complex64::i();
    let da = -i * (p.g * b + (p.delta + k * s.x) * a + p.eta_a * sv) - p.kappa * a;
    let db = -i * (p.g * a + (p.delta - k * s.x) * b + p.eta_b * sv) - p.kappa * b;
    let dx = s.p - p.gamma * s.x;
    let dp = -s.x - k * (a.norm_sqr() - b.norm_sqr()) - p.gamma * s.p;
    StateVector::new(dx, dp, da, db)
}

pub fn rk4_step(p: &DimensionlessParams, s: &StateVector, dt: f64) -> StateVector {
    let k1 = eom_rhs(p, s);
    let k2 = eom_rhs(p, &(*s + k1 * (0.5 * dt)));
    let k3 = eom_rhs(p, &(*s + k2 * (0.5 * dt)));
    let k4 = eom_rhs(p, &(*s + k3 * dt));
    *s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Integrates `n_steps` of size `dt`, calling `observe(step, state)` after each.
pub fn integrate<F: FnMut(usize, &StateVector)>(
    p: &DimensionlessParams,
    init: StateVector,
    dt: f64,
    n_steps: usize,
    mut observe: F,
) -> StateVector {
    let mut s = init;
    for k in 1..=n_steps {
        s = rk4_step(p, &s, dt);
        observe(k, &s);
    }
    s
}

const DIVERGENCE: f64 = 1e12;
const SEED: f64 = 1e-3;

struct Relaxation {
    state: StateVector,
    converged: bool,
    residual: f64,
    max_x_last_period: f64,
}

fn run_relaxation<F: FnMut(f64, &StateVector)>(
    p: &DimensionlessParams,
    init: StateVector,
    cfg: &IntegratorConfig,
    mut observe: F,
) -> Result<Relaxation, DynamicsError> {
    cfg.validate()?;
    p.validate()?;
    if p.kappa == 0.0 && p.gamma == 0.0 {
        return Err(DynamicsError::NoDissipation);
    }
    let dt = cfg.effective_dt(p);
    let window = (TAU / dt).round().max(1.0) as usize;
    let n_total = (cfg.t_max / dt).ceil() as usize;
    let mut s = init;
    s.x += SEED;
    observe(0.0, &s);
    let mut acc = 0.0;
    let mut max_x: f64 = 0.0;
    let mut last = (f64::INFINITY, 0.0);
    for k in 1..=n_total {
        s = rk4_step(p, &s, dt);
        let t = k as f64 * dt;
        if !(s.max_abs() <= DIVERGENCE) {
            return Err(DynamicsError::Diverged { t });
        }
        observe(t, &s);
        acc += eom_rhs(p, &s).norm();
        max_x = max_x.max(s.x.abs());
        if k % window == 0 {
            let mean = acc / window as f64;
            last = (mean, max_x);
            if mean <= cfg.residual_tol {
                return Ok(Relaxation {
                    state: s,
                    converged: true,
                    residual: mean,
                    max_x_last_period: max_x,
                });
            }
            acc = 0.0;
            max_x = 0.0;
        }
    }
    Ok(Relaxation {
        state: s,
        converged: false,
        residual: last.0,
        max_x_last_period: last.1,
    })
}

fn to_steady(s: &StateVector, tol: f64) -> SteadyState {
    let branch = if s.x.abs() <= 10.0 * tol {
        Branch::Normal
    } else if s.x > 0.0 {
        Branch::BrokenPlus
    } else {
        Branch::BrokenMinus
    };
    let (a, b) = (s.a(), s.b());
    SteadyState {
        x_ss: s.x,
        a_ss: a,
        b_ss: b,
        n_a: a.norm_sqr(),
        n_b: b.norm_sqr(),
        n_c: 0.5 * (s.x * s.x + s.p * s.p),
        branch,
        stable: true,
    }
}

/// Integrates from `init` (x displaced by +1e-3) until the residual averaged
/// over one membrane period drops below `cfg.residual_tol`.
pub fn relax_to_steady(
    p: &DimensionlessParams,
    init: StateVector,
    cfg: &IntegratorConfig,
) -> Result<SteadyState, DynamicsError> {
    relax_with_observer(p, init, cfg, |_, _| {})
}

pub fn relax_with_observer<F: FnMut(f64, &StateVector)>(
    p: &DimensionlessParams,
    init: StateVector,
    cfg: &IntegratorConfig,
    observe: F,
) -> Result<SteadyState, DynamicsError> {
    let r = run_relaxation(p, init, cfg, observe)?;
    if !r.converged {
        return Err(DynamicsError::NotConverged {
            t_max: cfg.t_max,
            residual: r.residual,
            last: r.state,
        });
    }
    Ok(to_steady(&r.state, cfg.residual_tol))
}

/// Whether the seeded displacement of the normal state grew rather than decayed.
/// Final `|x|` is compared with the seed; unconverged runs use the largest `|x|`
/// over the last period.
pub fn is_displaced(p: &DimensionlessParams, cfg: &IntegratorConfig) -> Result<bool, DynamicsError> {
    let r = run_relaxation(p, StateVector::normal_fixed_point(p), cfg, |_, _| {})?;
    Ok(if r.converged {
        r.state.x.abs() > SEED
    } else {
        r.max_x_last_period > SEED
    })
}

/// Bisection in `lambda` on the displaced/not-displaced indicator until the
/// bracket is narrower than `1e-4 * lambda`.
pub fn locate_bifurcation(
    p: &DimensionlessParams,
    lambda_range: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<f64, DynamicsError> {
    let (mut lo, mut hi) = lambda_range;
    if !(lo < hi) {
        return Err(DynamicsError::Config(format!("empty range [{lo}, {hi}]")));
    }
    let probe = |lam: f64| is_displaced(&p.with_lambda(lam), cfg);
    let (dlo, dhi) = (probe(lo)?, probe(hi)?);
    if dlo || !dhi {
        return Err(DynamicsError::Unbracketed {
            lo,
            hi,
            lo_displaced: dlo,
            hi_displaced: dhi,
        });
    }
    while hi - lo > 1e-4 * 0.5 * (lo + hi) {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const TRAJECTORY_HEADER: &str = "t,x,p,re_a,im_a,re_b,im_b";

/// Trajectory rows `(t, state)` decimated by `stride`.
pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[(f64, StateVector)]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, s) in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, s.x, s.p, s.re_a, s.im_a, s.re_b, s.im_b
        )?;
    }
    Ok(())
}
