//! Adiabatic field steady states, the effective membrane potential and the
//! mean-field order parameter.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{DimensionlessParams, ModelError};
use crate::numerics::{bisect, integrate, linear_slope};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeanFieldError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("closed form requires balanced antisymmetric pumping (eta_a = -eta_b)")]
    NotBalanced,
    #[error("no broken phase at mu = {0} (need mu > 1)")]
    NotBroken(f64),
    #[error("root bracket failed on [{lo}, {hi}]: force {f_lo} .. {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("fit window: {0}")]
    Window(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Normal,
    BrokenPlus,
    BrokenMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub x_ss: f64,
    #[serde(serialize_with = "ser_complex")]
    pub a_ss: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub b_ss: Complex64,
    pub n_a: f64,
    pub n_b: f64,
    pub n_c: f64,
    pub branch: Branch,
    /// Local minimum of the effective potential.
    pub stable: bool,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

impl SteadyState {
    pub fn at(p: &DimensionlessParams, x: f64, branch: Branch, stable: bool) -> Self {
        let (a, b) = field_steady_states(p, x);
        Self {
            x_ss: x,
            a_ss: a,
            b_ss: b,
            n_a: a.norm_sqr(),
            n_b: b.norm_sqr(),
            n_c: 0.5 * x * x,
            branch,
            stable,
        }
    }
}

/// Field amplitudes with `d/dt a = d/dt b = 0` at fixed displacement `x`.
pub fn field_steady_states(p: &DimensionlessParams, x: f64) -> (Complex64, Complex64) {
    let sv = p.v.sqrt();
    let s = p.lambda / sv;
    let d1 = Complex64::new(p.delta + s * x, -p.kappa);
    let d2 = Complex64::new(p.delta - s * x, -p.kappa);
    let r1 = -sv * p.eta_a;
    let r2 = -sv * p.eta_b;
    let det = d1 * d2 - p.g * p.g;
    let a = (d2 * r1 - p.g * r2) / det;
    let b = (d1 * r2 - p.g * r1) / det;
    (a, b)
}

/// `-x - (lambda/sqrt V)(n_a - n_b)` with fields slaved to `x`.
pub fn effective_force(p: &DimensionlessParams, x: f64) -> f64 {
    let (a, b) = field_steady_states(p, x);
    -x - p.lambda / p.v.sqrt() * (a.norm_sqr() - b.norm_sqr())
}

fn potential_resonant(p: &DimensionlessParams, x: f64) -> f64 {
    let u = x * p.lambda / p.v.sqrt();
    let s = p.g * p.g + p.kappa * p.kappa;
    let sym = 0.5 * x * x - 2.0 * p.g * p.eta_a * p.eta_b * p.v / (s + u * u);
    let imb = p.eta_a * p.eta_a - p.eta_b * p.eta_b;
    if imb == 0.0 {
        return sym;
    }
    let bracket = p.kappa * p.kappa * (u / s.sqrt()).atan() / s.sqrt() - p.g * p.g * u / (s + u * u);
    sym + p.v * imb / s * bracket
}

/// Effective membrane potential. Closed form on resonance; with detuning the
/// force is integrated from the resonant value at `x = 0`.
pub fn effective_potential(p: &DimensionlessParams, x: f64) -> f64 {
    if p.delta == 0.0 {
        return potential_resonant(p, x);
    }
    let v0 = potential_resonant(p, 0.0);
    let panels = ((x.abs() / 0.5).ceil() as usize).max(4);
    v0 - integrate(|y| effective_force(p, y), 0.0, x, panels)
}

/// Broken-phase displacement `sqrt(2 eps0) sqrt(mu - 1) / mu` (balanced pumping, resonant).
pub fn x_ss_closed(mu: f64, eps0: f64) -> f64 {
    if mu <= 1.0 {
        0.0
    } else {
        (2.0 * eps0).sqrt() * (mu - 1.0).sqrt() / mu
    }
}

fn closed_form_applies(p: &DimensionlessParams) -> bool {
    p.is_balanced_antisymmetric() && p.delta == 0.0 && p.eta_a != 0.0
}

/// All stationary points of the effective potential, broken branches first.
pub fn steady_positions(p: &DimensionlessParams) -> Result<Vec<SteadyState>, MeanFieldError> {
    p.validate()?;
    if closed_form_applies(p) {
        let mu = p.mu()?;
        if mu <= 1.0 {
            return Ok(vec![SteadyState::at(p, 0.0, Branch::Normal, true)]);
        }
        let x = x_ss_closed(mu, p.epsilon0());
        return Ok(vec![
            SteadyState::at(p, x, Branch::BrokenPlus, true),
            SteadyState::at(p, -x, Branch::BrokenMinus, true),
            SteadyState::at(p, 0.0, Branch::Normal, false),
        ]);
    }
    numeric_positions(p)
}

fn numeric_positions(p: &DimensionlessParams) -> Result<Vec<SteadyState>, MeanFieldError> {
    let f = |x: f64| effective_force(p, x);
    let mut reach = 1.0;
    while !(f(reach) < 0.0 && f(-reach) > 0.0) {
        reach *= 2.0;
        if reach > 1e15 {
            return Err(MeanFieldError::Bracket {
                lo: -reach,
                hi: reach,
                f_lo: f(-reach),
                f_hi: f(reach),
            });
        }
    }
    let n = 4001;
    let h = 2.0 * reach / (n - 1) as f64;
    let xs: Vec<f64> = (0..n)
        .map(|i| if i == n / 2 { 0.0 } else { -reach + i as f64 * h })
        .collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        if fs[i] == 0.0 {
            roots.push(xs[i]);
        } else if i + 1 < n && fs[i + 1] != 0.0 && fs[i].signum() != fs[i + 1].signum() {
            let r = bisect(f, xs[i], xs[i + 1], 1e-12 * reach.max(1.0)).ok_or(MeanFieldError::Bracket {
                lo: xs[i],
                hi: xs[i + 1],
                f_lo: fs[i],
                f_hi: fs[i + 1],
            })?;
            roots.push(r);
        }
    }
    let mut out: Vec<SteadyState> = roots
        .into_iter()
        .map(|x| {
            let d = 1e-6 * x.abs().max(1.0);
            let stable = f(x + d) - f(x - d) < 0.0;
            let branch = if x == 0.0 {
                Branch::Normal
            } else if x > 0.0 {
                Branch::BrokenPlus
            } else {
                Branch::BrokenMinus
            };
            SteadyState::at(p, x, branch, stable)
        })
        .collect();
    out.sort_by(|a, b| b.stable.cmp(&a.stable).then(b.x_ss.total_cmp(&a.x_ss)));
    Ok(out)
}

/// Stable stationary point with the lowest effective potential (ties: larger `x`).
pub fn global_minimum(p: &DimensionlessParams) -> Result<SteadyState, MeanFieldError> {
    let all = steady_positions(p)?;
    let mut best: Option<(f64, SteadyState)> = None;
    for s in all.into_iter().filter(|s| s.stable) {
        let e = effective_potential(p, s.x_ss);
        match best {
            Some((eb, _)) if eb <= e => {}
            _ => best = Some((e, s)),
        }
    }
    Ok(best.expect("a confining potential has a minimum").1)
}

/// Mean-field ground energy `E0`; `eps0` below threshold, `eps0 (2 mu - 1)/mu^2` above.
pub fn ground_energy(p: &DimensionlessParams) -> Result<f64, MeanFieldError> {
    if !p.is_balanced_antisymmetric() {
        return Err(MeanFieldError::NotBalanced);
    }
    let mu = p.mu()?;
    let e = p.epsilon0();
    Ok(if mu <= 1.0 { e } else { e * (2.0 * mu - 1.0) / (mu * mu) })
}

/// `(n_a + n_b, n_a - n_b)` on the given branch from the closed forms.
pub fn photon_observables(p: &DimensionlessParams, branch: Branch) -> Result<(f64, f64), MeanFieldError> {
    if !p.is_balanced_antisymmetric() {
        return Err(MeanFieldError::NotBalanced);
    }
    let mu = p.mu()?;
    let s = p.g * p.g + p.kappa * p.kappa;
    let eta = p.eta();
    match branch {
        Branch::Normal => Ok((2.0 * eta * eta * p.v / s, 0.0)),
        _ if mu <= 1.0 => Err(MeanFieldError::NotBroken(mu)),
        b => {
            let l2 = p.lambda * p.lambda;
            let diff = p.v / l2 * (s * (mu - 1.0)).sqrt();
            let tot = eta * p.v / (p.g.sqrt() * p.lambda);
            let sign = if b == Branch::BrokenPlus { -1.0 } else { 1.0 };
            Ok((tot, sign * diff))
        }
    }
}

/// Phonon number `x_ss^2 / 2` of the (+) ground branch.
pub fn phonon_number(p: &DimensionlessParams) -> Result<f64, MeanFieldError> {
    if closed_form_applies(p) {
        let x = x_ss_closed(p.mu()?, p.epsilon0());
        return Ok(0.5 * x * x);
    }
    Ok(global_minimum(p)?.n_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_points: usize,
    pub log_near_one: bool,
}

impl GridSpec {
    pub fn uniform(mu_min: f64, mu_max: f64, n_points: usize) -> Self {
        Self {
            mu_min,
            mu_max,
            n_points,
            log_near_one: false,
        }
    }

    /// Points `1 + t` with `t` log-spaced; requires `1 < mu_min < mu_max`.
    pub fn log_near_one(mu_min: f64, mu_max: f64, n_points: usize) -> Self {
        Self {
            log_near_one: true,
            ..Self::uniform(mu_min, mu_max, n_points)
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        if n == 1 {
            return vec![self.mu_min];
        }
        let t = |i: usize| i as f64 / (n - 1) as f64;
        if self.log_near_one {
            let (a, b) = ((self.mu_min - 1.0).ln(), (self.mu_max - 1.0).ln());
            (0..n).map(|i| 1.0 + (a + (b - a) * t(i)).exp()).collect()
        } else {
            (0..n).map(|i| self.mu_min + (self.mu_max - self.mu_min) * t(i)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub x_ss_plus: f64,
    pub n_a: f64,
    pub n_b: f64,
    pub n_diff: f64,
    pub n_c: f64,
    pub e0_over_eps0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub grid: GridSpec,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "mu,x_ss_plus,n_a,n_b,n_diff,n_c,E0_over_eps0";

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.mu, r.x_ss_plus, r.n_a, r.n_b, r.n_diff, r.n_c, r.e0_over_eps0
            )?;
        }
        Ok(())
    }
}

/// Closed-form sweep of the (+) branch over a strictly increasing `mu` grid.
pub fn sweep(p: &DimensionlessParams, grid: GridSpec) -> Result<SweepTable, MeanFieldError> {
    if !p.is_balanced_antisymmetric() {
        return Err(MeanFieldError::NotBalanced);
    }
    p.validate()?;
    let mus = grid.points();
    if mus.windows(2).any(|w| w[1] <= w[0]) || mus.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(MeanFieldError::Window("mu grid must be finite, >= 0 and strictly increasing".into()));
    }
    let lc = p.lambda_c()?;
    let eps0 = p.epsilon0();
    let rows = mus
        .par_iter()
        .map(|&mu| {
            let q = p.with_lambda(mu * lc);
            let x = x_ss_closed(mu, eps0);
            let (a, b) = field_steady_states(&q, x);
            let e0 = if mu <= 1.0 { 1.0 } else { (2.0 * mu - 1.0) / (mu * mu) };
            SweepRow {
                mu,
                x_ss_plus: x,
                n_a: a.norm_sqr(),
                n_b: b.norm_sqr(),
                n_diff: a.norm_sqr() - b.norm_sqr(),
                n_c: 0.5 * x * x,
                e0_over_eps0: e0,
            }
        })
        .collect();
    Ok(SweepTable { grid, rows })
}

/// Log-log slope of `n_c` against `mu - 1` for rows with `mu` in `[lo, hi]`.
pub fn fit_beta(table: &SweepTable, lo: f64, hi: f64) -> Result<f64, MeanFieldError> {
    if !(lo > 1.0 && hi <= 1.1 && lo < hi) {
        return Err(MeanFieldError::Window(format!("[{lo}, {hi}] not inside (1, 1.1]")));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter(|r| r.mu >= lo && r.mu <= hi && r.n_c > 0.0)
        .map(|r| ((r.mu - 1.0).ln(), r.n_c.ln()))
        .unzip();
    if x.len() < 5 {
        return Err(MeanFieldError::Window(format!("{} points in window, need 5", x.len())));
    }
    linear_slope(&x, &y).ok_or_else(|| MeanFieldError::Window("degenerate fit".into()))
}
