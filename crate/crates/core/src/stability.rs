//! Linearized fluctuations: drift matrices, excitation spectra and branch
//! continuation across a `mu` sweep.
//!
//! Quadratures are `u = (dx, dp, dX_a, dP_a, dX_b, dP_b)` with
//! `X = (d + d^dag)/sqrt2`, `P = (d^dag - d)/(i sqrt2)` for every mode.
//! Frequencies are eigenvalues of `iD`; decay shows as a negative imaginary part.

use std::io::{self, Write};

use nalgebra::{Matrix6, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::meanfield::SteadyState;
use crate::model::{DimensionlessParams, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("closed-form drift matrix requires balanced antisymmetric pumping")]
    NotBalanced,
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("eigenpair residual {residual:e} exceeds {bound:e} at omega = {omega}")]
    Residual { omega: Complex64, residual: f64, bound: f64 },
    #[error("mu grid must be non-negative and strictly increasing")]
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Matrix6<f64>);

impl DriftMatrix {
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Drift matrix about the normal branch (`x = 0`) at `mu = lambda/lambda_c`.
pub fn drift_matrix(p: &DimensionlessParams, mu: f64) -> Result<DriftMatrix, StabilityError> {
    if !p.is_balanced_antisymmetric() {
        return Err(StabilityError::NotBalanced);
    }
    p.validate()?;
    let (g, k, gm) = (p.g, p.kappa, p.gamma);
    let r = mu * (g / 2.0).sqrt();
    let q = mu * k / (2.0 * g).sqrt();
    #[rustfmt::skip]
    let m = Matrix6::new(
        -gm, -1.0, 0.0, 0.0, 0.0, 0.0,
        1.0, -gm,  r,   q,   r,   q,
        -q,  0.0, -k,  0.0, 0.0, -g,
        r,   0.0, 0.0, -k,   g,  0.0,
        -q,  0.0, 0.0, -g,  -k,  0.0,
        r,   0.0,  g,  0.0, 0.0, -k,
    );
    Ok(DriftMatrix(m))
}

/// Drift matrix linearized about an arbitrary steady state.
pub fn drift_matrix_general(p: &DimensionlessParams, ss: &SteadyState) -> DriftMatrix {
    let i = Complex64::i();
    let s2 = p.lambda / (2.0 * p.v).sqrt();
    let sv = p.lambda / p.v.sqrt();
    let (al, be) = (ss.a_ss, ss.b_ss);
    let zero = Complex64::new(0.0, 0.0);
    let mut a = [[zero; 3]; 3];
    let mut b = [[zero; 3]; 3];
    // d/dt z = A z + B z*, z = (dc, da, db)
    a[0][0] = -i - p.gamma;
    a[0][1] = -i * s2 * al.conj();
    a[0][2] = i * s2 * be.conj();
    b[0][1] = -i * s2 * al;
    b[0][2] = i * s2 * be;
    a[1][0] = -i * s2 * al;
    b[1][0] = -i * s2 * al;
    a[1][1] = -i * (p.delta + sv * ss.x_ss) - p.kappa;
    a[1][2] = -i * p.g;
    a[2][0] = i * s2 * be;
    b[2][0] = i * s2 * be;
    a[2][2] = -i * (p.delta - sv * ss.x_ss) - p.kappa;
    a[2][1] = -i * p.g;
    let mut m = Matrix6::zeros();
    for j in 0..3 {
        for l in 0..3 {
            let s = a[j][l] + b[j][l];
            let d = a[j][l] - b[j][l];
            m[(2 * j, 2 * l)] = s.re;
            m[(2 * j, 2 * l + 1)] = d.im;
            m[(2 * j + 1, 2 * l)] = -s.im;
            m[(2 * j + 1, 2 * l + 1)] = d.re;
        }
    }
    DriftMatrix(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcitationSpectrum {
    #[serde(serialize_with = "ser_omegas")]
    pub omegas: [Complex64; 6],
    /// Smallest singular value of `iD - omega` for each frequency.
    pub residuals: [f64; 6],
}

fn ser_omegas<S: serde::Serializer>(w: &[Complex64; 6], s: S) -> Result<S::Ok, S::Error> {
    w.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
}

impl ExcitationSpectrum {
    pub fn max_growth(&self) -> f64 {
        self.omegas.iter().fold(f64::NEG_INFINITY, |m, w| m.max(w.im))
    }

    pub fn is_stable(&self, tol: f64) -> bool {
        self.max_growth() <= tol
    }
}

fn sort_omegas(w: &mut [Complex64; 6]) {
    w.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn smallest_singular(m: &Matrix6<Complex64>) -> f64 {
    m.singular_values().min()
}

/// Eigenvalues of `iD` with per-pair residual `<= 1e-9 ||D||_F`.
///
/// Nearly coincident eigenvalues (a defective pair splits as `sqrt(eps)`) are
/// replaced by their mean when the mean is itself an acceptable eigenvalue.
pub fn spectrum(d: &DriftMatrix) -> Result<ExcitationSpectrum, StabilityError> {
    let norm = d.0.norm();
    let bound = 1e-9 * norm.max(f64::MIN_POSITIVE);
    let schur = Schur::try_new(d.0, f64::EPSILON, 600).ok_or(StabilityError::NoConvergence)?;
    let ev = schur.complex_eigenvalues();
    let mut w: [Complex64; 6] = std::array::from_fn(|k| Complex64::i() * ev[k]);
    let id: Matrix6<Complex64> = d.0.map(|v| Complex64::new(0.0, v));
    let resid = |z: Complex64| smallest_singular(&(id - Matrix6::from_diagonal_element(z)));

    let merge_tol = 8.0 * f64::EPSILON.sqrt() * norm;
    let mut used = [false; 6];
    for k in 0..6 {
        if used[k] {
            continue;
        }
        let cluster: Vec<usize> = (k..6).filter(|&j| !used[j] && (w[j] - w[k]).norm() <= merge_tol).collect();
        for &j in &cluster {
            used[j] = true;
        }
        if cluster.len() > 1 {
            let mean = cluster.iter().map(|&j| w[j]).sum::<Complex64>() / cluster.len() as f64;
            if resid(mean) <= bound {
                for &j in &cluster {
                    w[j] = mean;
                }
            }
        }
    }
    sort_omegas(&mut w);
    let mut residuals = [0.0; 6];
    for k in 0..6 {
        residuals[k] = resid(w[k]);
        if !(residuals[k] <= bound) {
            return Err(StabilityError::Residual {
                omega: w[k],
                residual: residuals[k],
                bound,
            });
        }
    }
    Ok(ExcitationSpectrum { omegas: w, residuals })
}

/// Lossless closed form: `(+-g, +-w2, +-w3)`, sorted like [`spectrum`].
pub fn analytic_spectrum_lossless(g: f64, mu: f64) -> [Complex64; 6] {
    let s = 1.0 + g * g;
    let inner = ((g * g - 1.0).powi(2) + 4.0 * g * g * mu * mu).sqrt();
    let w2 = ((s + inner) / 2.0).sqrt();
    // s - inner written without cancellation; vanishes exactly at mu = 1
    let lower = 4.0 * g * g * (1.0 - mu * mu) / (s + inner);
    let w3 = Complex64::new(lower / 2.0, 0.0).sqrt();
    let mut w = [
        Complex64::new(g, 0.0),
        Complex64::new(-g, 0.0),
        Complex64::new(w2, 0.0),
        Complex64::new(-w2, 0.0),
        w3,
        -w3,
    ];
    sort_omegas(&mut w);
    w
}

fn permutations6() -> Vec<[usize; 6]> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool; 6], out: &mut Vec<[usize; 6]>) {
        if cur.len() == 6 {
            out.push(std::array::from_fn(|k| cur[k]));
            return;
        }
        for j in 0..6 {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::with_capacity(720);
    rec(&mut Vec::new(), &mut [false; 6], &mut out);
    out
}

/// Permutation `perm` minimizing `sum_k |next[perm[k]] - prev[k]|` (first minimum wins).
pub fn best_assignment(prev: &[Complex64; 6], next: &[Complex64; 6]) -> [usize; 6] {
    let mut best = ([0, 1, 2, 3, 4, 5], f64::INFINITY);
    for perm in permutations6() {
        let cost: f64 = (0..6).map(|k| (next[perm[k]] - prev[k]).norm()).sum();
        if cost < best.1 {
            best = (perm, cost);
        }
    }
    best.0
}

/// Largest deviation between two six-frequency sets after optimal matching.
pub fn matched_distance(a: &[Complex64; 6], b: &[Complex64; 6]) -> f64 {
    let perm = best_assignment(a, b);
    (0..6).map(|k| (b[perm[k]] - a[k]).norm()).fold(0.0, f64::max)
}

pub const BRANCH_LABELS: [&str; 6] = ["light1+", "light1-", "light2+", "light2-", "membrane+", "membrane-"];
pub const MEMBRANE_PLUS: usize = 4;
pub const MEMBRANE_MINUS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub mu: f64,
    /// Frequencies in [`BRANCH_LABELS`] order.
    #[serde(serialize_with = "ser_omegas")]
    pub omegas: [Complex64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumScan {
    pub rows: Vec<SpectrumRow>,
}

pub const SPECTRUM_HEADER: &str = "mu,branch,re_omega,im_omega";

impl SpectrumScan {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SPECTRUM_HEADER}")?;
        for r in &self.rows {
            for (label, z) in BRANCH_LABELS.iter().zip(&r.omegas) {
                writeln!(w, "{:.16e},{},{:.16e},{:.16e}", r.mu, label, z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn branch(&self, idx: usize) -> Vec<(f64, Complex64)> {
        self.rows.iter().map(|r| (r.mu, r.omegas[idx])).collect()
    }
}

const MAX_CONTINUATION_STEP: f64 = 0.005;

/// Normal-branch spectra over `mu_grid` with labels carried from `mu = 0`.
pub fn scan_spectrum(p: &DimensionlessParams, mu_grid: &[f64]) -> Result<SpectrumScan, StabilityError> {
    if mu_grid.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || mu_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StabilityError::Grid);
    }
    // continuation path from 0 through every requested point
    let mut path: Vec<(f64, bool)> = vec![(0.0, mu_grid.first() == Some(&0.0))];
    for &m in mu_grid.iter().filter(|m| **m > 0.0) {
        let prev = path.last().unwrap().0;
        let n = ((m - prev) / MAX_CONTINUATION_STEP).ceil().max(1.0) as usize;
        for k in 1..n {
            path.push((prev + (m - prev) * k as f64 / n as f64, false));
        }
        path.push((m, true));
    }
    let spectra: Vec<ExcitationSpectrum> = path
        .par_iter()
        .map(|&(mu, _)| drift_matrix(p, mu).and_then(|d| spectrum(&d)))
        .collect::<Result<_, _>>()?;

    let (g, k, gm) = (p.g, p.kappa, p.gamma);
    let targets = [
        Complex64::new(g, -k),
        Complex64::new(-g, -k),
        Complex64::new(g, -k),
        Complex64::new(-g, -k),
        Complex64::new(1.0, -gm),
        Complex64::new(-1.0, -gm),
    ];
    let perm = best_assignment(&targets, &spectra[0].omegas);
    let mut cur: [Complex64; 6] = std::array::from_fn(|j| spectra[0].omegas[perm[j]]);
    let mut rows = Vec::new();
    if path[0].1 {
        rows.push(SpectrumRow { mu: 0.0, omegas: cur });
    }
    for (step, (&(mu, keep), sp)) in path.iter().zip(&spectra).enumerate().skip(1) {
        let perm = best_assignment(&cur, &sp.omegas);
        cur = std::array::from_fn(|j| sp.omegas[perm[j]]);
        if step == 1 {
            // the two light pairs start degenerate; light1 is the pair that stays at +-g - i kappa
            let d1 = (cur[0] - targets[0]).norm() + (cur[1] - targets[1]).norm();
            let d2 = (cur[2] - targets[2]).norm() + (cur[3] - targets[3]).norm();
            if d2 < d1 {
                cur.swap(0, 2);
                cur.swap(1, 3);
            }
        }
        if keep {
            rows.push(SpectrumRow { mu, omegas: cur });
        }
    }
    Ok(SpectrumScan { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{steady_positions, x_ss_closed};

    fn branch_params(mu: f64) -> DimensionlessParams {
        DimensionlessParams::balanced(2.0, 1.0, 1.0, 0.0, 100.0).with_mu(mu).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn closed_matrix_entries() {
        let p = branch_params(1.0);
        let d = drift_matrix(&p, 1.0).unwrap().0;
        assert!((d[(1, 2)] - 1.0).abs() < 1e-15);
        assert!((d[(2, 0)] + 0.5).abs() < 1e-15);
        for mu in [0.0, 0.7, 2.5] {
            let d = drift_matrix(&p, mu).unwrap().0;
            assert_eq!((d[(0, 1)], d[(1, 0)]), (-1.0, 1.0));
        }
        let d0 = drift_matrix(&p, 0.0).unwrap().0;
        for r in 0..2 {
            for col in 2..6 {
                assert_eq!(d0[(r, col)], 0.0);
                assert_eq!(d0[(col, r)], 0.0);
            }
        }
    }

    #[test]
    fn general_reduces_to_closed_at_normal_branch() {
        for (g, k, mu) in [(2.0, 1.0, 0.3), (2.0, 1.0, 1.5), (0.7, 0.2, 2.2)] {
            let p = DimensionlessParams::balanced(g, k, 1.3, 0.0, 50.0).with_mu(mu).unwrap();
            let ss = SteadyState::at(&p, 0.0, crate::Branch::Normal, mu <= 1.0);
            let diff = drift_matrix_general(&p, &ss).0 - drift_matrix(&p, mu).unwrap().0;
            assert!(diff.abs().max() < 1e-13, "{diff}");
        }
    }

    #[test]
    fn general_matches_finite_difference_jacobian() {
        use crate::dynamics::{eom_rhs, StateVector};
        let p = branch_params(1.5).with_gamma(0.2);
        let ss = steady_positions(&p).unwrap()[0];
        let s0 = StateVector::new(ss.x_ss, p.gamma * 0.0, ss.a_ss, ss.b_ss);
        // the physical fixed point carries p = gamma x; rebuild it with gamma = 0 instead
        let q = DimensionlessParams { gamma: 0.0, ..p };
        let d = drift_matrix_general(&q, &ss).0;
        let h = 1e-6;
        // physical coordinates y = (x, p, Re a, Im a, Re b, Im b); quadratures u = T y
        let sq = 2f64.sqrt();
        let t = Matrix6::from_diagonal(&nalgebra::Vector6::new(1.0, -1.0, sq, -sq, sq, -sq));
        let mut j = Matrix6::zeros();
        for col in 0..6 {
            let mut e = [0.0; 6];
            e[col] = h;
            let plus = StateVector::from_array(std::array::from_fn(|k| s0.to_array()[k] + e[k]));
            let minus = StateVector::from_array(std::array::from_fn(|k| s0.to_array()[k] - e[k]));
            let (fp, fm) = (eom_rhs(&q, &plus).to_array(), eom_rhs(&q, &minus).to_array());
            for row in 0..6 {
                j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        let expect = t * j * t.try_inverse().unwrap();
        assert!((expect - d).abs().max() < 1e-6, "{}", (expect - d).abs().max());
    }

    #[test]
    fn lossless_spectrum_examples() {
        let w = analytic_spectrum_lossless(2.0, 0.0);
        let expect = [c(-2.0, 0.0), c(-2.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)];
        assert!(matched_distance(&w, &expect) < 1e-15);
        for g in [0.5, 1.0, 2.0, 5.0, 0.3] {
            let w = analytic_spectrum_lossless(g, 1.0);
            assert_eq!(w.iter().filter(|z| z.norm() == 0.0).count(), 2);
        }
        let w = analytic_spectrum_lossless(2.0, 1.2);
        let third: Vec<_> = w.iter().filter(|z| z.norm() < 1.0).collect();
        assert_eq!(third.len(), 2);
        assert!(third.iter().all(|z| z.re == 0.0 && z.im != 0.0));
    }

    #[test]
    fn numeric_matches_lossless() {
        for g in [0.5, 1.0, 2.0, 5.0] {
            let p = DimensionlessParams::balanced(g, 0.0, 1.0, 0.0, 100.0);
            for i in 0..=60 {
                let mu = i as f64 / 20.0;
                let s = spectrum(&drift_matrix(&p, mu).unwrap()).unwrap();
                let d = matched_distance(&analytic_spectrum_lossless(g, mu), &s.omegas);
                assert!(d < 1e-9, "g={g} mu={mu} d={d:e}");
            }
        }
    }

    #[test]
    fn pairing_and_trace() {
        let p = branch_params(0.8).with_gamma(0.3);
        let d = drift_matrix(&p, 0.8).unwrap();
        assert!((d.trace() + 4.0 * 1.0 + 2.0 * 0.3).abs() < 1e-12);
        let s = spectrum(&d).unwrap();
        let mirrored: [Complex64; 6] = std::array::from_fn(|k| -s.omegas[k].conj());
        assert!(matched_distance(&s.omegas, &mirrored) < 1e-9);
        let sum: Complex64 = s.omegas.iter().sum();
        assert!((sum.im - d.trace()).abs() < 1e-10);
    }

    #[test]
    fn normal_branch_grows_above_threshold() {
        let p = branch_params(1.5);
        let s = spectrum(&drift_matrix(&p, 1.5).unwrap()).unwrap();
        assert!(s.max_growth() > 1e-3);
        let s = spectrum(&drift_matrix(&p, 0.5).unwrap()).unwrap();
        assert!(s.is_stable(1e-12));
    }

    #[test]
    fn broken_branch_stability() {
        // stable close to threshold
        let p = branch_params(1.2);
        for ss in steady_positions(&p).unwrap().iter().filter(|s| s.stable) {
            let s = spectrum(&drift_matrix_general(&p, ss)).unwrap();
            assert!(s.is_stable(1e-12), "{:?}", s.omegas);
        }
        // oscillatory at mu = 1.5 but weakly anti-damped (Hopf) without membrane damping
        let p = branch_params(1.5);
        let ss = steady_positions(&p).unwrap()[0];
        let s = spectrum(&drift_matrix_general(&p, &ss)).unwrap();
        assert!(s.omegas.iter().all(|w| w.re.abs() > 1e-3));
        assert!((s.max_growth() - 0.058).abs() < 0.005, "{}", s.max_growth());
        // g = kappa = 1, mu = 2
        let p = DimensionlessParams::balanced(1.0, 1.0, 1.0, 2.0, 100.0);
        let x = x_ss_closed(2.0, 100.0);
        let ss = SteadyState::at(&p, x, crate::Branch::BrokenPlus, true);
        let s = spectrum(&drift_matrix_general(&p, &ss)).unwrap();
        assert!((s.max_growth() - 0.263).abs() < 0.005, "{}", s.max_growth());
    }

    #[test]
    fn branch_labels_at_zero() {
        let p = branch_params(0.0);
        let grid: Vec<f64> = (0..=150).map(|i| i as f64 / 100.0).collect();
        let scan = scan_spectrum(&p, &grid).unwrap();
        let r0 = &scan.rows[0];
        for j in 0..4 {
            assert!((r0.omegas[j].im + 1.0).abs() < 1e-12);
        }
        assert!((r0.omegas[MEMBRANE_PLUS] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((r0.omegas[MEMBRANE_MINUS] - c(-1.0, 0.0)).norm() < 1e-12);
        for r in scan.rows.iter().filter(|r| r.mu > 0.0 && r.mu < 1.0) {
            assert!(r.omegas[MEMBRANE_PLUS].im < 0.0, "mu={}", r.mu);
        }
        // light1 stays at +-g - i kappa
        for r in &scan.rows {
            assert!((r.omegas[0] - c(2.0, -1.0)).norm() < 1e-9);
        }
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("mu,branch,re_omega,im_omega\n"));
        assert_eq!(s.lines().count(), 1 + 6 * grid.len());
    }

    #[test]
    fn scan_rejects_bad_grid() {
        assert_eq!(scan_spectrum(&branch_params(0.0), &[0.5, 0.2]), Err(StabilityError::Grid));
    }
}
