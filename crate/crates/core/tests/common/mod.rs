#![allow(dead_code)]

use mim_dicke::dynamics::{eom_rhs, StateVector};
use mim_dicke::fockcheck::{check_dicke_equivalence, check_number_conservation, check_parity, FockTruncation};
use mim_dicke::meanfield::{effective_force, effective_potential, steady_positions};
use mim_dicke::model::{critical_coupling, detuned_critical_coupling};
use mim_dicke::quantum1d::{ground_state, moments, Grid1D, ImagTimeConfig};
use mim_dicke::stability::{drift_matrix, drift_matrix_general, matched_distance, spectrum};
use mim_dicke::DimensionlessParams;
use num_complex::Complex64;
use proptest::prelude::*;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Generic pumping, any detuning.
pub fn any_params() -> impl Strategy<Value = DimensionlessParams> {
    (0.3..3.0f64, 0.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.0..3.0f64, 1.0..1e3f64, -0.5..0.5f64).prop_map(
        |(g, k, ea, eb, lam, v, d)| {
            DimensionlessParams::balanced(g, k, 1.0, lam, v).with_pumping(ea, eb).with_delta(d)
        },
    )
}

/// Balanced antisymmetric pumping at a given `mu`.
pub fn balanced_params() -> impl Strategy<Value = DimensionlessParams> {
    (0.3..3.0f64, 0.05..2.0f64, 0.2..2.0f64, 0.0..3.0f64, 5.0..500.0f64, -0.5..0.5f64).prop_map(|(g, k, eta, mu, v, d)| {
        DimensionlessParams::balanced(g, k, eta, 0.0, v).with_mu(mu).unwrap().with_delta(d)
    })
}

pub fn force_is_minus_gradient(p: &DimensionlessParams, x: f64) -> Check {
    let h = 1e-4 * x.abs().max(1.0);
    let dv = (effective_potential(p, x + h) - effective_potential(p, x - h)) / (2.0 * h);
    let f = effective_force(p, x);
    let scale = f.abs().max(1.0);
    ensure((f + dv).abs() <= 1e-6 * scale, || format!("F = {f}, -dV/dx = {}", -dv))
}

pub fn potential_is_even(p: &DimensionlessParams, x: f64) -> Check {
    let (a, b) = (effective_potential(p, x), effective_potential(p, -x));
    ensure((a - b).abs() <= 1e-10 * a.abs().max(1.0), || format!("V({x}) = {a}, V(-x) = {b}"))
}

pub fn flow_is_equivariant(p: &DimensionlessParams, s: &StateVector) -> Check {
    let lhs = eom_rhs(p, &s.parity_image());
    let rhs = eom_rhs(p, s).parity_image();
    let d = lhs.to_array().iter().zip(rhs.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = rhs.max_abs().max(1.0);
    ensure(d <= 1e-10 * scale, || format!("flow mismatch {d:e}"))
}

pub fn heisenberg_bound(p: &DimensionlessParams) -> Check {
    let grid = Grid1D::auto(p, 256).map_err(|e| e.to_string())?;
    let wf = ground_state(p, &grid, &ImagTimeConfig::default()).map_err(|e| e.to_string())?;
    let m = moments(&wf);
    ensure(m.dx * m.dp >= 0.5 - 1e-6, || format!("dx dp = {}", m.dx * m.dp))
}

pub fn spectrum_pairing_and_trace(p: &DimensionlessParams) -> Check {
    let mu = p.mu().map_err(|e| e.to_string())?;
    let mut mats = vec![drift_matrix(p, mu).map_err(|e| e.to_string())?];
    for ss in steady_positions(p).map_err(|e| e.to_string())? {
        mats.push(drift_matrix_general(p, &ss));
    }
    for d in mats {
        let s = spectrum(&d).map_err(|e| e.to_string())?;
        let mirrored: [Complex64; 6] = std::array::from_fn(|k| -s.omegas[k].conj());
        let dist = matched_distance(&s.omegas, &mirrored);
        let scale = d.0.norm();
        ensure(dist <= 1e-8 * scale, || format!("pairing off by {dist:e}"))?;
        let sum: Complex64 = s.omegas.iter().sum();
        let expect = -4.0 * p.kappa - 2.0 * p.gamma;
        ensure((d.trace() - expect).abs() < 1e-12, || format!("trace {}", d.trace()))?;
        ensure((sum.im - expect).abs() <= 1e-9 * scale && sum.re.abs() <= 1e-9 * scale, || {
            format!("sum of frequencies {sum}, expected i*{expect}")
        })?;
    }
    Ok(())
}

pub fn critical_couplings_agree(g: f64, k: f64, eta: f64) -> Check {
    let a = critical_coupling(g, k, eta).map_err(|e| e.to_string())?;
    let b = detuned_critical_coupling(g, k, eta, 0.0).map_err(|e| e.to_string())?;
    ensure((a - b).abs() <= 1e-12 * a, || format!("{a} vs {b}"))
}

pub fn fock_checks(g: f64, lambda: f64, eta: f64, v: f64) -> Check {
    let t = FockTruncation::new(3, 3, 4).map_err(|e| e.to_string())?;
    let free = DimensionlessParams::balanced(g, 1.0, 0.0, lambda, v);
    let c = check_number_conservation(&free, &t).map_err(|e| e.to_string())?;
    ensure(c <= 1e-12, || format!("[H, N] = {c:e}"))?;
    let d = check_dicke_equivalence(&free, &t).map_err(|e| e.to_string())?;
    ensure(d <= 1e-12, || format!("H - H_D - 1/2 = {d:e}"))?;
    let anti = free.with_pumping(eta, -eta);
    let u = check_parity(&anti, &t, -1.0).map_err(|e| e.to_string())?;
    ensure(u <= 1e-12, || format!("[H, U-] = {u:e}"))?;
    let sym = free.with_pumping(eta, eta);
    let u = check_parity(&sym, &t, 1.0).map_err(|e| e.to_string())?;
    ensure(u <= 1e-12, || format!("[H, U+] = {u:e}"))
}

/// One draw of every property family.
#[derive(Debug, Clone)]
pub struct Draw {
    pub generic: DimensionlessParams,
    pub balanced: DimensionlessParams,
    pub x: f64,
    pub state: [f64; 6],
    pub quantum: DimensionlessParams,
    pub fock: (f64, f64, f64, f64),
}

pub fn quantum_params() -> impl Strategy<Value = DimensionlessParams> {
    (0.5..2.0f64, 0.2..2.0f64, 0.0..2.5f64, 5.0..200.0f64)
        .prop_map(|(g, k, mu, v)| DimensionlessParams::balanced(g, k, 1.0, 0.0, v).with_mu(mu).unwrap())
}

pub fn draws() -> impl Strategy<Value = Draw> {
    (
        any_params(),
        balanced_params(),
        -30.0..30.0f64,
        prop::array::uniform6(-20.0..20.0f64),
        quantum_params(),
        (0.3..3.0f64, 0.0..3.0f64, 0.1..1.0f64, 10.0..1e3f64),
    )
        .prop_map(|(generic, balanced, x, state, quantum, fock)| Draw {
            generic,
            balanced,
            x,
            state,
            quantum,
            fock,
        })
}

pub fn check_all(d: &Draw) -> Check {
    force_is_minus_gradient(&d.generic, d.x)?;
    potential_is_even(&d.balanced, d.x)?;
    flow_is_equivariant(&d.balanced.with_gamma(0.3), &StateVector::from_array(d.state))?;
    heisenberg_bound(&d.quantum)?;
    spectrum_pairing_and_trace(&d.balanced.with_delta(0.0).with_gamma(0.2))?;
    critical_couplings_agree(d.balanced.g, d.balanced.kappa, d.balanced.eta())?;
    let (g, l, e, v) = d.fock;
    fock_checks(g, l, e, v)
}
