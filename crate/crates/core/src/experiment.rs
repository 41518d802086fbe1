//! Laboratory feasibility numbers and the tunnelling sensitivity of the cat state.
//!
//! Exponentially small results are carried as natural logarithms; the linear
//! value is `None` whenever it would underflow.

use serde::Serialize;
use thiserror::Error;

use crate::meanfield::{effective_potential, photon_observables, phonon_number, Branch, MeanFieldError};
use crate::model::{critical_power, DimensionlessParams, ModelError, PhysicalParams, HBAR};
use crate::numerics::{bisect, integrate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error("requires the broken phase (mu = {0})")]
    BelowThreshold(f64),
    #[error("barrier {barrier} does not exceed the well zero-point energy; splitting formula invalid")]
    Barrier { barrier: f64 },
    #[error("g = kappa: linearized imbalance vanishes")]
    EqualRates,
    #[error("invalid input: {0}")]
    Input(String),
}

fn linear(ln: f64) -> Option<f64> {
    let v = ln.exp();
    (v.is_finite() && v >= f64::MIN_POSITIVE).then_some(v)
}

/// `(omega L / omega_centre) sqrt(g m V / 2 hbar) sqrt(1 - 1/mu_P)`; `g`, `kappa` in rad/s.
pub fn signal_to_noise(pp: &PhysicalParams, g: f64, kappa: f64) -> Result<f64, ExperimentError> {
    pp.validate()?;
    let ratio = pp.power / critical_power(pp, g, kappa);
    if ratio < 1.0 - 1e-12 {
        return Err(ExperimentError::BelowThreshold(ratio.sqrt()));
    }
    let mu_p = ratio.sqrt().max(1.0);
    Ok(pp.omega * pp.length / pp.omega_centre * (g * pp.m * pp.v / (2.0 * HBAR)).sqrt() * (1.0 - 1.0 / mu_p).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabEstimate {
    pub lambda: f64,
    pub lambda_c: f64,
    #[serde(rename = "P_c")]
    pub p_c: f64,
    #[serde(rename = "P")]
    pub power: f64,
    pub mu_p: f64,
    pub r_snr: f64,
    pub n_tot: f64,
    /// `|n_a - n_b|`.
    pub n_diff: f64,
    pub n_c: f64,
    #[serde(rename = "mech_loss_W")]
    pub mech_loss_w: f64,
    #[serde(rename = "opt_loss_W")]
    pub opt_loss_w: f64,
}

/// Lab numbers at `P = p_over_pc * P_c`; the power stored in `pp` is ignored.
pub fn lab_report(pp: &PhysicalParams, g: f64, kappa: f64, p_over_pc: f64) -> Result<LabEstimate, ExperimentError> {
    if !(p_over_pc.is_finite() && p_over_pc > 0.0) {
        return Err(ExperimentError::Input(format!("P/P_c = {p_over_pc} must be > 0")));
    }
    let p_c = critical_power(pp, g, kappa);
    let pp = pp.with_power(p_over_pc * p_c);
    let d = pp.to_dimensionless(g, kappa)?;
    let mu = d.mu()?;
    let broken = mu > 1.0;
    let (n_tot, n_diff) = photon_observables(&d, if broken { Branch::BrokenPlus } else { Branch::Normal })?;
    let n_c = if broken { phonon_number(&d)? } else { 0.0 };
    let r_snr = if p_over_pc >= 1.0 { signal_to_noise(&pp, g, kappa)? } else { 0.0 };
    Ok(LabEstimate {
        lambda: d.lambda,
        lambda_c: d.lambda_c()?,
        p_c,
        power: pp.power,
        mu_p: p_over_pc.sqrt(),
        r_snr,
        n_tot,
        n_diff: n_diff.abs(),
        n_c,
        mech_loss_w: pp.omega / pp.q * n_c * HBAR * pp.omega,
        opt_loss_w: kappa * n_tot * HBAR * pp.omega_centre,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WkbSplitting {
    /// Well frequency in units of the membrane frequency.
    pub omega: f64,
    pub e_well: f64,
    pub a_turn: f64,
    pub ln_de_split: f64,
    pub de_split: Option<f64>,
}

/// Tunnel splitting from the harmonic-well / inverted-parabola closed form.
pub fn wkb_splitting(mu: f64, eps0: f64) -> Result<WkbSplitting, ExperimentError> {
    if !(mu > 1.0) {
        return Err(ExperimentError::BelowThreshold(mu));
    }
    let r = ((mu - 1.0) / mu).sqrt();
    let barrier = eps0 * (mu - 1.0).powi(2) / (mu * mu) - r;
    if !(barrier > 0.0) {
        return Err(ExperimentError::Barrier { barrier });
    }
    let e0 = eps0 * (2.0 * mu - 1.0) / (mu * mu);
    let a2 = (2.0 * eps0 * (mu - 1.0) / (mu * mu) - 2.0 / (mu * (mu - 1.0)).sqrt()) / (1.0 + mu);
    let ln = (2.0 / std::f64::consts::PI * r).ln() - std::f64::consts::PI * barrier / (mu * mu - 1.0).sqrt();
    Ok(WkbSplitting {
        omega: 2.0 * r,
        e_well: r + e0,
        a_turn: a2.sqrt(),
        ln_de_split: ln,
        de_split: linear(ln),
    })
}

/// Same splitting with the barrier action integrated over the exact effective
/// potential between numerically located turning points (balanced, resonant).
pub fn wkb_splitting_quadrature(p: &DimensionlessParams) -> Result<WkbSplitting, ExperimentError> {
    if !p.is_balanced_antisymmetric() || p.delta != 0.0 {
        return Err(ExperimentError::Input("quadrature needs balanced antisymmetric resonant pumping".into()));
    }
    let mu = p.mu()?;
    if !(mu > 1.0) {
        return Err(ExperimentError::BelowThreshold(mu));
    }
    let x_ss = crate::meanfield::x_ss_closed(mu, p.epsilon0());
    let r = ((mu - 1.0) / mu).sqrt();
    let e = effective_potential(p, x_ss) + r;
    let f = |x: f64| effective_potential(p, x) - e;
    let barrier = f(0.0);
    if !(barrier > 0.0) {
        return Err(ExperimentError::Barrier { barrier });
    }
    let a = bisect(f, 0.0, x_ss, 1e-14 * x_ss.max(1.0)).ok_or(ExperimentError::Barrier { barrier })?;
    // x = a sin(theta) removes the square-root endpoint singularity
    let half = integrate(
        |t| (f(a * t.sin()).max(0.0)).sqrt() * a * t.cos(),
        0.0,
        std::f64::consts::FRAC_PI_2,
        32,
    );
    let action = 2f64.sqrt() * 2.0 * half;
    let ln = (2.0 * r / std::f64::consts::PI).ln() - action;
    Ok(WkbSplitting {
        omega: 2.0 * r,
        e_well: e - effective_potential(p, x_ss) + p.epsilon0() * (2.0 * mu - 1.0) / (mu * mu),
        a_turn: a,
        ln_de_split: ln,
        de_split: linear(ln),
    })
}

/// Energy offset between the wells, `2V (eta_a^2 - eta_b^2)(g^2 - kappa^2) sqrt(mu-1) / (g^2+kappa^2)^{3/2}`.
pub fn imbalance_energy(p: &DimensionlessParams) -> Result<f64, ExperimentError> {
    let mu = p.mu()?;
    if !(mu > 1.0) {
        return Err(ExperimentError::BelowThreshold(mu));
    }
    let s = p.g * p.g + p.kappa * p.kappa;
    Ok(2.0 * p.v * (p.eta_a.powi(2) - p.eta_b.powi(2)) * (p.g * p.g - p.kappa * p.kappa) * (mu - 1.0).sqrt() / s.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalImbalance {
    /// Sign of `eta_a^2 - eta_b^2` (that of `g^2 - kappa^2`).
    pub sign: f64,
    pub ln_abs_eta_sq_diff: f64,
    pub eta_sq_diff: Option<f64>,
    /// Relative mismatch between solving `dE_imb = dE_split` and the closed relation.
    pub relation_residual: f64,
}

/// `eta_a^2 - eta_b^2` at which the imbalance energy equals the tunnel splitting.
pub fn critical_imbalance(p: &DimensionlessParams) -> Result<CriticalImbalance, ExperimentError> {
    let mu = p.mu()?;
    let split = wkb_splitting(mu, p.epsilon0())?;
    let diff = p.g * p.g - p.kappa * p.kappa;
    if diff == 0.0 {
        return Err(ExperimentError::EqualRates);
    }
    let s = p.g * p.g + p.kappa * p.kappa;
    // per unit eta^2 difference, from imbalance_energy
    let ln_per_unit = (2.0 * p.v * diff.abs() * (mu - 1.0).sqrt() / s.powf(1.5)).ln();
    let ln_solved = split.ln_de_split - ln_per_unit;
    let exponent = -std::f64::consts::PI * (p.epsilon0() * (mu - 1.0).powi(2) / (mu * mu) - ((mu - 1.0) / mu).sqrt())
        / (mu * mu - 1.0).sqrt();
    let ln_closed = (s.powf(1.5) / (p.v * std::f64::consts::PI * mu.sqrt() * diff.abs())).ln() + exponent;
    Ok(CriticalImbalance {
        sign: diff.signum(),
        ln_abs_eta_sq_diff: ln_closed,
        eta_sq_diff: linear(ln_closed).map(|v| v * diff.signum()),
        relation_residual: (ln_solved - ln_closed).abs() / ln_closed.abs().max(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerImbalance {
    pub mu_p: f64,
    /// Prefactor in W.
    pub c1: f64,
    /// `C_2 / (hbar omega)`.
    pub c2_over_hbar_omega: f64,
    pub ln_dp: f64,
    #[serde(rename = "log10_dP")]
    pub log10_dp: f64,
    #[serde(rename = "dP_W")]
    pub dp_w: Option<f64>,
}

/// Critical power difference between the two pumps; `g`, `kappa` in rad/s.
pub fn power_imbalance(pp: &PhysicalParams, g: f64, kappa: f64, p_over_pc: f64) -> Result<PowerImbalance, ExperimentError> {
    pp.validate()?;
    let mu_p = p_over_pc.sqrt();
    if !(mu_p > 1.0) {
        return Err(ExperimentError::BelowThreshold(mu_p));
    }
    let diff = g * g - kappa * kappa;
    if diff == 0.0 {
        return Err(ExperimentError::EqualRates);
    }
    let s = g * g + kappa * kappa;
    let (w, wc) = (pp.omega, pp.omega_centre);
    let c1 = HBAR * w * wc * s.powf(1.5) / (pp.v * std::f64::consts::PI * kappa * mu_p.sqrt() * diff);
    let c2 = pp.v * pp.length.powi(2) * w * w * pp.m * s / (8.0 * wc * wc);
    let c2n = c2 / (HBAR * w);
    let exponent =
        -std::f64::consts::PI * (c2n * (mu_p - 1.0).powi(2) - ((mu_p - 1.0) / mu_p).sqrt()) / (mu_p * mu_p - 1.0).sqrt();
    let ln_dp = c1.abs().ln() + exponent;
    Ok(PowerImbalance {
        mu_p,
        c1,
        c2_over_hbar_omega: c2n,
        ln_dp,
        log10_dp: ln_dp / std::f64::consts::LN_10,
        dp_w: linear(ln_dp).map(|v| v * c1.signum()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatSensitivity {
    pub mu: f64,
    pub eps0: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
    #[serde(rename = "E_well")]
    pub e_well: f64,
    pub a_turn: f64,
    #[serde(rename = "ln_dE_split")]
    pub ln_de_split: f64,
    #[serde(rename = "dE_split")]
    pub de_split: Option<f64>,
    /// Imbalance energy for the pumping in the parameters (zero when balanced).
    #[serde(rename = "dE_imb")]
    pub de_imb: f64,
    /// `None` when `g = kappa`.
    pub critical: Option<CriticalImbalance>,
    pub power: Option<PowerImbalance>,
}

pub fn cat_sensitivity(p: &DimensionlessParams) -> Result<CatSensitivity, ExperimentError> {
    p.validate()?;
    let mu = p.mu()?;
    let eps0 = p.epsilon0();
    let w = wkb_splitting(mu, eps0)?;
    let critical = match critical_imbalance(p) {
        Ok(c) => Some(c),
        Err(ExperimentError::EqualRates) => None,
        Err(e) => return Err(e),
    };
    Ok(CatSensitivity {
        mu,
        eps0,
        omega: w.omega,
        e_well: w.e_well,
        a_turn: w.a_turn,
        ln_de_split: w.ln_de_split,
        de_split: w.de_split,
        de_imb: imbalance_energy(p)?,
        critical,
        power: None,
    })
}

/// [`cat_sensitivity`] at `P = p_over_pc * P_c`, including the power imbalance.
pub fn cat_sensitivity_lab(pp: &PhysicalParams, g: f64, kappa: f64, p_over_pc: f64) -> Result<CatSensitivity, ExperimentError> {
    let pp = pp.with_power(p_over_pc * critical_power(pp, g, kappa));
    let d = pp.to_dimensionless(g, kappa)?;
    let mut c = cat_sensitivity(&d)?;
    c.power = Some(power_imbalance(&pp, g, kappa, p_over_pc)?);
    Ok(c)
}
