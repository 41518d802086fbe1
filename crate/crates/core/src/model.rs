//! Parameter containers, laboratory/dimensionless conversions and closed-form
//! critical quantities.
//!
//! Everything outside this module works in units of the membrane frequency
//! (rates) and the oscillator length `sqrt(hbar / m omega)` (displacements).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 2.997_924_58e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no transition: pump amplitude is zero")]
    NoPump,
    #[error("criticality lost: g + delta = {0} <= 0")]
    CriticalityLost(f64),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Model rates in units of the membrane frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessParams {
    pub g: f64,
    pub kappa: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub lambda: f64,
    #[serde(rename = "V", alias = "v")]
    pub v: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub gamma: f64,
}

impl DimensionlessParams {
    /// Balanced antisymmetric pumping `eta_a = -eta_b = eta`, no detuning, no damping.
    pub fn balanced(g: f64, kappa: f64, eta: f64, lambda: f64, v: f64) -> Self {
        Self {
            g,
            kappa,
            eta_a: eta,
            eta_b: -eta,
            lambda,
            v,
            delta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_pumping(mut self, eta_a: f64, eta_b: f64) -> Self {
        self.eta_a = eta_a;
        self.eta_b = eta_b;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Sets `lambda = mu * lambda_c`.
    pub fn with_mu(self, mu: f64) -> Result<Self, ModelError> {
        let lc = self.lambda_c()?;
        Ok(self.with_lambda(mu * lc))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("eta_a", self.eta_a),
            ("eta_b", self.eta_b),
            ("lambda", self.lambda),
            ("V", self.v),
            ("delta", self.delta),
            ("gamma", self.gamma),
        ];
        for (name, val) in all {
            if !val.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.g <= 0.0 {
            return Err(invalid("g", "must be > 0"));
        }
        if self.kappa < 0.0 {
            return Err(invalid("kappa", "must be >= 0"));
        }
        if self.v <= 0.0 {
            return Err(invalid("V", "must be > 0"));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", "must be >= 0"));
        }
        Ok(())
    }

    pub fn is_balanced_antisymmetric(&self) -> bool {
        self.eta_a == -self.eta_b
    }

    pub fn is_balanced_symmetric(&self) -> bool {
        self.eta_a == self.eta_b
    }

    /// Single pump amplitude used by the closed forms; exact for `eta_a = +-eta_b`.
    pub fn eta(&self) -> f64 {
        0.5 * (self.eta_a.abs() + self.eta_b.abs())
    }

    pub fn lambda_c(&self) -> Result<f64, ModelError> {
        critical_coupling(self.g, self.kappa, self.eta())
    }

    pub fn mu(&self) -> Result<f64, ModelError> {
        Ok(self.lambda / self.lambda_c()?)
    }

    pub fn epsilon0(&self) -> f64 {
        epsilon0(self.g, self.kappa, self.eta(), self.v)
    }

    pub fn critical_set(&self) -> Result<CriticalSet, ModelError> {
        let lambda_c = self.lambda_c()?;
        Ok(CriticalSet {
            lambda_c,
            lambda_c_detuned: detuned_critical_coupling(self.g, self.kappa, self.eta(), self.delta)?,
            mu: self.lambda / lambda_c,
            epsilon0: self.epsilon0(),
        })
    }
}

/// Laboratory inputs (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Cavity length, m.
    #[serde(rename = "L")]
    pub length: f64,
    /// Motional mass, kg.
    pub m: f64,
    /// Membrane angular frequency, rad/s.
    pub omega: f64,
    /// Pump/cavity angular frequency, rad/s.
    pub omega_centre: f64,
    /// Membrane intensity reflectivity.
    #[serde(rename = "R_membrane")]
    pub r_membrane: f64,
    /// Pump power, W.
    #[serde(rename = "P")]
    pub power: f64,
    /// Membrane quality factor.
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "V", alias = "v")]
    pub v: f64,
}

impl PhysicalParams {
    /// SiN membrane (m = 5e-14 kg, 100 kHz) in a 6.7 cm cavity pumped at 1064 nm.
    pub fn sin_membrane_1064nm(power: f64) -> Self {
        Self {
            length: 0.067,
            m: 5e-14,
            omega: 2.0 * std::f64::consts::PI * 1e5,
            omega_centre: 2.0 * std::f64::consts::PI * C_LIGHT / 1064e-9,
            r_membrane: 0.5,
            power,
            q: 1e6,
            v: 1.0,
        }
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            ("L", self.length),
            ("m", self.m),
            ("omega", self.omega),
            ("omega_centre", self.omega_centre),
            ("R_membrane", self.r_membrane),
            ("Q", self.q),
            ("V", self.v),
        ];
        for (name, val) in all {
            if !(val.is_finite() && val > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(invalid("P", "must be finite and >= 0"));
        }
        if self.r_membrane >= 1.0 {
            return Err(invalid("R_membrane", "must be < 1"));
        }
        Ok(())
    }

    /// Dimensionless parameters for balanced antisymmetric pumping at power `P`.
    /// `g` and `kappa` are in rad/s.
    pub fn to_dimensionless(&self, g: f64, kappa: f64) -> Result<DimensionlessParams, ModelError> {
        self.validate()?;
        if !(g > 0.0 && kappa > 0.0) {
            return Err(invalid("g/kappa", "dimensional rates must be > 0"));
        }
        let eta = eta_from_power(self.power, kappa, self.omega_centre) / self.omega;
        let p = DimensionlessParams::balanced(
            g / self.omega,
            kappa / self.omega,
            eta,
            lambda_from_physical(self),
            self.v,
        );
        Ok(p)
    }
}

/// Critical quantities for a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalSet {
    pub lambda_c: f64,
    pub lambda_c_detuned: f64,
    pub mu: f64,
    pub epsilon0: f64,
}

/// Photon tunnelling rate `(c/L) sqrt((1-R)/R)` in rad/s.
pub fn coupling_from_reflectivity(p: &PhysicalParams) -> Result<f64, ModelError> {
    let r = p.r_membrane;
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid("R_membrane", format!("{r} not in (0, 1)")));
    }
    if !(p.length > 0.0) {
        return Err(invalid("L", "must be > 0"));
    }
    Ok(C_LIGHT / p.length * ((1.0 - r) / r).sqrt())
}

/// `lambda = (2/L) (omega_centre/omega) sqrt(hbar / (m omega))`.
pub fn lambda_from_physical(p: &PhysicalParams) -> f64 {
    2.0 / p.length * (p.omega_centre / p.omega) * (HBAR / (p.m * p.omega)).sqrt()
}

/// Pump rate `sqrt(kappa P / (hbar omega_centre))` in rad/s.
pub fn eta_from_power(power: f64, kappa: f64, omega_centre: f64) -> f64 {
    (kappa * power / (HBAR * omega_centre)).sqrt()
}

/// `lambda_c = (g^2 + kappa^2) / (2 eta sqrt(g))`.
pub fn critical_coupling(g: f64, kappa: f64, eta: f64) -> Result<f64, ModelError> {
    if !(g > 0.0) {
        return Err(invalid("g", "must be > 0"));
    }
    if eta == 0.0 {
        return Err(ModelError::NoPump);
    }
    Ok((g * g + kappa * kappa) / (2.0 * eta.abs() * g.sqrt()))
}

/// Critical coupling with cavity-pump detuning `delta`.
pub fn detuned_critical_coupling(g: f64, kappa: f64, eta: f64, delta: f64) -> Result<f64, ModelError> {
    if eta == 0.0 {
        return Err(ModelError::NoPump);
    }
    if g + delta <= 0.0 {
        return Err(ModelError::CriticalityLost(g + delta));
    }
    let k2 = kappa * kappa;
    let num = ((g - delta).powi(2) + k2) * ((g + delta).powi(2) + k2);
    Ok((num / (g + delta)).sqrt() / (2.0 * eta.abs()))
}

/// Critical pump power in W; `g` and `kappa` in rad/s.
pub fn critical_power(p: &PhysicalParams, g: f64, kappa: f64) -> f64 {
    let s = g * g + kappa * kappa;
    p.omega * p.omega * p.length * p.length * p.m / p.omega_centre * s * s / (16.0 * g * kappa)
}

/// Energy scale `2 g eta^2 V / (g^2 + kappa^2)`.
pub fn epsilon0(g: f64, kappa: f64, eta: f64, v: f64) -> f64 {
    2.0 * g * eta * eta * v / (g * g + kappa * kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn lab() -> PhysicalParams {
        PhysicalParams::sin_membrane_1064nm(1e-3)
    }

    #[test]
    fn reflectivity_coupling() {
        let mut p = lab();
        let g = coupling_from_reflectivity(&p).unwrap();
        assert_relative_eq!(g, C_LIGHT / 0.067, max_relative = 1e-14);
        assert_relative_eq!(g, 4.4745e9, max_relative = 1e-4);
        p.length /= 2.0;
        assert_relative_eq!(coupling_from_reflectivity(&p).unwrap(), 2.0 * g, max_relative = 1e-14);
        p.r_membrane = 1.0 - 1e-12;
        assert!(coupling_from_reflectivity(&p).unwrap() < 1e-3 * g);
        p.r_membrane = 1.0;
        assert!(coupling_from_reflectivity(&p).is_err());
        p.r_membrane = 0.0;
        assert!(coupling_from_reflectivity(&p).is_err());
    }

    #[test]
    fn lambda_lab_value_and_scaling() {
        let p = lab();
        let l = lambda_from_physical(&p);
        assert_relative_eq!(l, 0.004_873_011_227, max_relative = 1e-9);
        let mut q = p;
        q.m *= 4.0;
        assert_relative_eq!(lambda_from_physical(&q), l / 2.0, max_relative = 1e-14);
        let mut q = p;
        q.omega_centre *= 2.0;
        assert_relative_eq!(lambda_from_physical(&q), 2.0 * l, max_relative = 1e-14);
    }

    #[test]
    fn critical_power_lab_value() {
        let p = lab();
        let (g, k) = (2.0 * PI * 1e7, 2.0 * PI * 1e5);
        let pc = critical_power(&p, g, k);
        assert_relative_eq!(pc, 1.235_23e-3, max_relative = 1e-5);
        let eta = eta_from_power(pc, k, p.omega_centre) / p.omega;
        assert_relative_eq!(eta, 102_616.2, max_relative = 1e-6);
        let mut q = p;
        q.length *= 2.0;
        assert_relative_eq!(critical_power(&q, g, k), 4.0 * pc, max_relative = 1e-14);
    }

    #[test]
    fn eta_scaling() {
        assert_eq!(eta_from_power(0.0, 1.0, 1.0), 0.0);
        let a = eta_from_power(1e-3, 2.0, 3.0);
        assert_relative_eq!(eta_from_power(4e-3, 2.0, 3.0), 2.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn critical_coupling_values() {
        assert_eq!(critical_coupling(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            critical_coupling(3.0, 2.0, 4.0).unwrap(),
            13.0 / (8.0 * 3f64.sqrt()),
            max_relative = 1e-15
        );
        assert_eq!(critical_coupling(1.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(critical_coupling(1.0, 1.0, 0.0), Err(ModelError::NoPump));
    }

    #[test]
    fn detuned_values() {
        let v = detuned_critical_coupling(1.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(v, 0.5 * (1.25f64 * 3.25 / 1.5).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.822_85, max_relative = 1e-5);
        let near = detuned_critical_coupling(1.0, 1.0, 1.0, -1.0 + 1e-10).unwrap();
        assert!(near > 1e4);
        assert!(matches!(
            detuned_critical_coupling(1.0, 1.0, 1.0, -1.0),
            Err(ModelError::CriticalityLost(_))
        ));
    }

    #[test]
    fn params_helpers() {
        let p = DimensionlessParams::balanced(1.0, 1.0, 1.0, 2.0, 100.0);
        assert!(p.is_balanced_antisymmetric());
        assert!(!p.is_balanced_symmetric());
        assert_eq!(p.mu().unwrap(), 2.0);
        assert_eq!(p.epsilon0(), 100.0);
        let cs = p.critical_set().unwrap();
        assert_eq!(cs.lambda_c, cs.lambda_c_detuned);
        assert!(p.with_gamma(-1.0).validate().is_err());
        assert!(DimensionlessParams { v: 0.0, ..p }.validate().is_err());
        assert_relative_eq!(p.with_mu(1.5).unwrap().lambda, 1.5);
    }

    #[test]
    fn physical_to_dimensionless_at_pc_is_critical() {
        let (g, k) = (2.0 * PI * 1e7, 2.0 * PI * 1e5);
        let base = lab();
        let pc = critical_power(&base, g, k);
        let d = base.with_power(pc).to_dimensionless(g, k).unwrap();
        assert_relative_eq!(d.mu().unwrap(), 1.0, max_relative = 1e-12);
        let d = base.with_power(1.1 * pc).to_dimensionless(g, k).unwrap();
        assert_relative_eq!(d.mu().unwrap(), 1.1f64.sqrt(), max_relative = 1e-12);
        // epsilon0 at P_c equals C2 / (hbar omega)
        let d = base.with_power(pc).to_dimensionless(g, k).unwrap();
        assert_relative_eq!(d.epsilon0(), 2.1058e8, max_relative = 1e-4);
    }

    #[test]
    fn physical_validation() {
        let lab = lab();
        assert!(lab.validate().is_ok());
        assert!(PhysicalParams { r_membrane: 1.0, ..lab }.validate().is_err());
    }
}
