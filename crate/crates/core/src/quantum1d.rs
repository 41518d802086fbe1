//! Quantum membrane in the effective potential: imaginary-time ground states,
//! squeezing, Wigner functions and the fidelity susceptibility.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::{effective_potential, steady_positions, MeanFieldError};
use crate::model::{DimensionlessParams, ModelError};
use crate::numerics::lstsq;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("imaginary-time propagation not converged after {steps} steps (energy drift {drift:e})")]
    NotConverged { steps: usize, drift: f64 },
    #[error("parity projection needs a mirror-symmetric grid and potential")]
    Parity,
    #[error("Wigner imaginary residue {0:e} too large; grid too coarse")]
    WignerResidue(f64),
    #[error("singular at mu = 1")]
    Singular,
    #[error("fit: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

pub const DEFAULT_POINTS: usize = 2048;

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, QuantumError> {
        let g = Grid1D { x_min, x_max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn symmetric(half_width: f64, n_points: usize) -> Result<Self, QuantumError> {
        Self::new(-half_width, half_width, n_points)
    }

    /// Symmetric grid of half-width `|x_ss| + max(10, 6 sigma)`.
    pub fn auto(p: &DimensionlessParams, n_points: usize) -> Result<Self, QuantumError> {
        p.validate()?;
        let x_far = steady_positions(p)?
            .iter()
            .filter(|s| s.stable)
            .fold(0.0f64, |m, s| m.max(s.x_ss.abs()));
        let sigma = width_estimate(p);
        Self::symmetric(x_far + (6.0 * sigma).max(10.0), n_points)
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        if self.n_points < 256 {
            return Err(QuantumError::Grid(format!("{} points, need at least 256", self.n_points)));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(QuantumError::Grid(format!("bad interval [{}, {}]", self.x_min, self.x_max)));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.h()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= 1e-12 * self.x_max.abs().max(1.0)
    }

    /// Angular wavenumbers in FFT order for the period `n h`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * self.h());
        (0..n)
            .map(|m| if m <= n / 2 { m as f64 * dk } else { (m as f64 - n as f64) * dk })
            .collect()
    }
}

fn width_estimate(p: &DimensionlessParams) -> f64 {
    let Ok(mu) = p.mu() else {
        return std::f64::consts::FRAC_1_SQRT_2;
    };
    let harmonic = gaussian_variance(mu).map(f64::sqrt).unwrap_or(f64::INFINITY);
    let quartic = if mu > 0.0 { (p.epsilon0() / mu.powi(4)).powf(1.0 / 6.0) } else { f64::INFINITY };
    harmonic.min(quartic)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagTimeConfig {
    pub dtau: f64,
    /// Energy change per unit imaginary time at convergence.
    pub tol: f64,
    pub check_every: usize,
    pub max_steps: usize,
}

impl Default for ImagTimeConfig {
    fn default() -> Self {
        ImagTimeConfig {
            dtau: 1e-3,
            tol: 1e-12,
            check_every: 100,
            max_steps: 2_000_000,
        }
    }
}

impl ImagTimeConfig {
    pub fn validate(&self) -> Result<(), QuantumError> {
        if !(self.dtau > 0.0 && self.dtau.is_finite() && self.tol > 0.0 && self.check_every > 0 && self.max_steps > 0) {
            return Err(QuantumError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Even projection when grid and potential are mirror symmetric, none otherwise.
    #[default]
    Auto,
    Even,
    /// Odd sector; on `x > 0` this is the ground state with a hard wall at the origin.
    Odd,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveFunction {
    pub grid: Grid1D,
    #[serde(skip)]
    pub psi: Vec<Complex64>,
    /// Energy relative to the minimum of the effective potential.
    pub energy: f64,
    pub steps: usize,
}

pub const WAVEFUNCTION_HEADER: &str = "x,re_psi,im_psi";

impl WaveFunction {
    pub fn norm(&self) -> f64 {
        trapz_norm(&self.psi, self.grid.h())
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `Re <self|other>` on a shared grid.
    pub fn overlap(&self, other: &WaveFunction) -> f64 {
        let h = self.grid.h();
        self.psi.iter().zip(&other.psi).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{WAVEFUNCTION_HEADER}")?;
        for (j, z) in self.psi.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.grid.x(j), z.re, z.im)?;
        }
        Ok(())
    }
}

fn trapz_norm(psi: &[Complex64], h: f64) -> f64 {
    let n = psi.len();
    let s: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    h * (s - 0.5 * (psi[0].norm_sqr() + psi[n - 1].norm_sqr()))
}

fn normalize(psi: &mut [Complex64], h: f64) {
    let s = 1.0 / trapz_norm(psi, h).sqrt();
    psi.iter_mut().for_each(|z| *z *= s);
}

/// Effective potential on the grid, shifted so its global minimum is zero.
pub fn grid_potential(p: &DimensionlessParams, grid: &Grid1D) -> Result<Vec<f64>, QuantumError> {
    p.validate()?;
    let v_min = steady_positions(p)?
        .iter()
        .filter(|s| s.stable)
        .map(|s| effective_potential(p, s.x_ss))
        .fold(f64::INFINITY, f64::min);
    Ok(grid.xs().par_iter().map(|&x| effective_potential(p, x) - v_min).collect())
}

fn mirror_symmetric(v: &[f64]) -> bool {
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let n = v.len();
    (0..n / 2).all(|j| (v[j] - v[n - 1 - j]).abs() <= 1e-9 * scale)
}

fn project(psi: &mut [Complex64], sign: f64) {
    let n = psi.len();
    for j in 0..n / 2 {
        let (a, b) = (psi[j], psi[n - 1 - j]);
        psi[j] = 0.5 * (a + sign * b);
        psi[n - 1 - j] = sign * psi[j];
    }
    if n % 2 == 1 && sign < 0.0 {
        psi[n / 2] = Complex64::new(0.0, 0.0);
    }
}

struct Kinetic {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    half_k2: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Kinetic {
    fn new(grid: &Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n_points;
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Kinetic {
            fwd,
            inv,
            half_k2: grid.wavenumbers().iter().map(|k| 0.5 * k * k).collect(),
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    fn apply_diag(&mut self, psi: &mut [Complex64], diag: &[f64]) {
        self.fwd.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(diag).for_each(|(z, d)| *z *= *d);
        self.inv.process_with_scratch(psi, &mut self.scratch);
    }

    /// `<T>` of a (not necessarily normalized) state.
    fn expectation(&mut self, psi: &[Complex64]) -> f64 {
        let mut phi = psi.to_vec();
        self.fwd.process_with_scratch(&mut phi, &mut self.scratch);
        let num: f64 = phi.iter().zip(&self.half_k2).map(|(z, t)| t * z.norm_sqr()).sum();
        let den: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        num / den
    }
}

fn energy(kin: &mut Kinetic, v: &[f64], psi: &[Complex64]) -> f64 {
    let den: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let pot: f64 = psi.iter().zip(v).map(|(z, v)| v * z.norm_sqr()).sum::<f64>() / den;
    kin.expectation(psi) + pot
}

#[derive(Debug, Clone, Default)]
pub struct GroundStateOptions<'a> {
    pub parity: Parity,
    /// Warm start; must live on the same grid.
    pub init: Option<&'a WaveFunction>,
}

/// Lowest state of `p^2/2 + V_eff` on `grid` by split-step imaginary time.
pub fn ground_state(p: &DimensionlessParams, grid: &Grid1D, itc: &ImagTimeConfig) -> Result<WaveFunction, QuantumError> {
    ground_state_with(p, grid, itc, &GroundStateOptions::default())
}

pub fn ground_state_with(
    p: &DimensionlessParams,
    grid: &Grid1D,
    itc: &ImagTimeConfig,
    opts: &GroundStateOptions,
) -> Result<WaveFunction, QuantumError> {
    grid.validate()?;
    itc.validate()?;
    let v = grid_potential(p, grid)?;
    let symmetric = grid.is_symmetric() && mirror_symmetric(&v);
    let sign = match opts.parity {
        Parity::Auto if symmetric => Some(1.0),
        Parity::Auto | Parity::None => None,
        Parity::Even | Parity::Odd if !symmetric => return Err(QuantumError::Parity),
        Parity::Even => Some(1.0),
        Parity::Odd => Some(-1.0),
    };
    let h = grid.h();
    let n = grid.n_points;
    let mut psi = match opts.init {
        Some(w) if w.grid == *grid => w.psi.clone(),
        Some(_) => return Err(QuantumError::Grid("warm start on a different grid".into())),
        None => initial_guess(p, grid, sign.unwrap_or(0.0)),
    };
    if let Some(s) = sign {
        project(&mut psi, s);
    }
    normalize(&mut psi, h);

    let mut kin = Kinetic::new(grid);
    let half_v: Vec<f64> = v.iter().map(|v| (-0.5 * itc.dtau * v).exp()).collect();
    let prop_k: Vec<f64> = kin.half_k2.iter().map(|t| (-itc.dtau * t).exp() / n as f64).collect();
    let mut e_prev = energy(&mut kin, &v, &psi);
    let mut drift = f64::INFINITY;
    for step in 1..=itc.max_steps {
        psi.iter_mut().zip(&half_v).for_each(|(z, f)| *z *= *f);
        kin.apply_diag(&mut psi, &prop_k);
        psi.iter_mut().zip(&half_v).for_each(|(z, f)| *z *= *f);
        if let Some(s) = sign {
            project(&mut psi, s);
        }
        normalize(&mut psi, h);
        if step % itc.check_every == 0 {
            let e = energy(&mut kin, &v, &psi);
            drift = (e - e_prev).abs() / (itc.check_every as f64 * itc.dtau);
            e_prev = e;
            if drift < itc.tol {
                fix_phase(&mut psi, grid, sign);
                return Ok(WaveFunction {
                    grid: *grid,
                    psi,
                    energy: e,
                    steps: step,
                });
            }
        }
    }
    Err(QuantumError::NotConverged {
        steps: itc.max_steps,
        drift,
    })
}

fn initial_guess(p: &DimensionlessParams, grid: &Grid1D, sign: f64) -> Vec<Complex64> {
    let x0 = steady_positions(p)
        .ok()
        .and_then(|s| s.into_iter().filter(|s| s.stable).map(|s| s.x_ss).reduce(f64::max))
        .unwrap_or(0.0);
    let sigma = width_estimate(p).clamp(0.3, 0.2 * (grid.x_max - grid.x_min));
    let g = |x: f64| (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp();
    grid.xs()
        .iter()
        .map(|&x| {
            let v = if sign < 0.0 && x0 == 0.0 {
                x * g(x)
            } else {
                g(x) + sign * g(-x)
            };
            Complex64::new(v, 0.0)
        })
        .collect()
}

// Real states: global sign chosen so the weight on x > 0 (or everywhere) is positive.
fn fix_phase(psi: &mut [Complex64], grid: &Grid1D, sign: Option<f64>) {
    let s: f64 = if sign == Some(-1.0) {
        psi.iter().enumerate().filter(|(j, _)| grid.x(*j) > 0.0).map(|(_, z)| z.re).sum()
    } else {
        psi.iter().map(|z| z.re).sum()
    };
    if s < 0.0 {
        psi.iter_mut().for_each(|z| *z = -*z);
    }
}

/// Lowest eigenvalue of the dense Hamiltonian with the same Fourier kinetic
/// matrix as the split-step propagator. Intended for grids up to ~1000 points.
pub fn dense_ground_energy(p: &DimensionlessParams, grid: &Grid1D) -> Result<f64, QuantumError> {
    grid.validate()?;
    let v = grid_potential(p, grid)?;
    let n = grid.n_points;
    let h = grid.h();
    let ks = grid.wavenumbers();
    let t: Vec<f64> = (0..n)
        .map(|d| ks.iter().map(|k| 0.5 * k * k * (k * d as f64 * h).cos()).sum::<f64>() / n as f64)
        .collect();
    let m = DMatrix::from_fn(n, n, |j, k| t[j.abs_diff(k)] + if j == k { v[j] } else { 0.0 });
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean_x: f64,
    pub dx: f64,
    pub mean_p: f64,
    pub dp: f64,
}

/// Position and momentum moments; momentum from the spectral derivative.
pub fn moments(wf: &WaveFunction) -> Moments {
    let h = wf.grid.h();
    let rho = wf.density();
    let norm: f64 = rho.iter().sum::<f64>() * h;
    let xs = wf.grid.xs();
    let mx = xs.iter().zip(&rho).map(|(x, r)| x * r).sum::<f64>() * h / norm;
    let mx2 = xs.iter().zip(&rho).map(|(x, r)| x * x * r).sum::<f64>() * h / norm;
    let mut phi = wf.psi.clone();
    FftPlanner::new().plan_fft_forward(phi.len()).process(&mut phi);
    let ks = wf.grid.wavenumbers();
    let w: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
    let mp = phi.iter().zip(&ks).map(|(z, k)| k * z.norm_sqr()).sum::<f64>() / w;
    let mp2 = phi.iter().zip(&ks).map(|(z, k)| k * k * z.norm_sqr()).sum::<f64>() / w;
    Moments {
        mean_x: mx,
        dx: (mx2 - mx * mx).max(0.0).sqrt(),
        mean_p: mp,
        dp: (mp2 - mp * mp).max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major: `w[i * p.len() + k] = W(x[i], p[k])`.
    pub w: Vec<f64>,
    pub max_imag: f64,
}

pub const WIGNER_HEADER: &str = "x,p,w";

fn trapz(y: &[f64], dx: &[f64]) -> f64 {
    y.windows(2).zip(dx.windows(2)).map(|(y, x)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

impl WignerGrid {
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.w[i * self.p.len() + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.p.len()..(i + 1) * self.p.len()]
    }

    /// `int W dp` at `x[i]`.
    pub fn marginal_x(&self, i: usize) -> f64 {
        trapz(self.row(i), &self.p)
    }

    pub fn normalization(&self) -> f64 {
        let m: Vec<f64> = (0..self.x.len()).map(|i| self.marginal_x(i)).collect();
        trapz(&m, &self.x)
    }

    /// Index of the row closest to `x`.
    pub fn nearest_row(&self, x: f64) -> usize {
        (0..self.x.len())
            .min_by(|&a, &b| (self.x[a] - x).abs().total_cmp(&(self.x[b] - x).abs()))
            .unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{WIGNER_HEADER}")?;
        for (i, x) in self.x.iter().enumerate() {
            for (k, p) in self.p.iter().enumerate() {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", x, p, self.value(i, k))?;
            }
        }
        Ok(())
    }
}

pub fn default_p_grid() -> Vec<f64> {
    linspace(-8.0, 8.0, 512)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// `W(x, p) = (1/pi) int dy psi*(x+y) psi(x-y) e^{2ipy}` with `y` on the grid nodes,
/// evaluated on every `x_stride`-th grid row.
pub fn wigner(wf: &WaveFunction, p_grid: &[f64], x_stride: usize) -> Result<WignerGrid, QuantumError> {
    if x_stride == 0 || p_grid.len() < 2 {
        return Err(QuantumError::Config("need x_stride >= 1 and at least two momenta".into()));
    }
    let h = wf.grid.h();
    let n = wf.grid.n_points;
    let psi = &wf.psi;
    let rows: Vec<usize> = (0..n).step_by(x_stride).collect();
    let out: Vec<(Vec<f64>, f64)> = rows
        .par_iter()
        .map(|&j| {
            let m_max = j.min(n - 1 - j);
            let f: Vec<Complex64> = (0..=m_max).map(|m| (psi[j + m].conj(), psi[j - m])).map(|(a, b)| a * b).collect();
            let g: Vec<Complex64> = (0..=m_max).map(|m| psi[j - m].conj() * psi[j + m]).collect();
            let mut row = Vec::with_capacity(p_grid.len());
            let mut imag = 0.0f64;
            for &pk in p_grid {
                let z = Complex64::from_polar(1.0, 2.0 * pk * h);
                let mut ph = z;
                let mut s = f[0];
                for m in 1..=m_max {
                    s += f[m] * ph + g[m] * ph.conj();
                    ph *= z;
                }
                let w = s * h / std::f64::consts::PI;
                imag = imag.max(w.im.abs());
                row.push(w.re);
            }
            (row, imag)
        })
        .collect();
    let max_imag = out.iter().fold(0.0f64, |m, r| m.max(r.1));
    let scale = out.iter().flat_map(|r| r.0.iter()).fold(1.0f64, |m, w| m.max(w.abs()));
    if max_imag > 1e-10 * scale {
        return Err(QuantumError::WignerResidue(max_imag));
    }
    Ok(WignerGrid {
        x: rows.iter().map(|&j| wf.grid.x(j)).collect(),
        p: p_grid.to_vec(),
        w: out.into_iter().flat_map(|r| r.0).collect(),
        max_imag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezingRow {
    pub lambda: f64,
    pub dx: f64,
    pub dp: f64,
}

pub const SQUEEZING_HEADER: &str = "lambda,dx,dp";

pub fn write_squeezing_csv<W: Write>(mut w: W, rows: &[SqueezingRow]) -> io::Result<()> {
    writeln!(w, "{SQUEEZING_HEADER}")?;
    for r in rows {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", r.lambda, r.dx, r.dp)?;
    }
    Ok(())
}

/// Full-domain ground-state uncertainties over a list of couplings.
pub fn squeezing_sweep(
    p: &DimensionlessParams,
    lambdas: &[f64],
    n_points: usize,
    itc: &ImagTimeConfig,
) -> Result<Vec<SqueezingRow>, QuantumError> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let q = p.with_lambda(lambda);
            let grid = Grid1D::auto(&q, n_points)?;
            let m = moments(&ground_state(&q, &grid, itc)?);
            Ok(SqueezingRow {
                lambda,
                dx: m.dx,
                dp: m.dp,
            })
        })
        .collect()
}

/// Gaussian variance of the single-well ground state.
pub fn gaussian_variance(mu: f64) -> Result<f64, QuantumError> {
    if mu == 1.0 {
        return Err(QuantumError::Singular);
    }
    if mu < 1.0 {
        Ok(0.5 / (1.0 - mu * mu).sqrt())
    } else {
        Ok(0.5 / (4.0 * (mu - 1.0) / mu).sqrt())
    }
}

/// Leading-order fidelity susceptibility (closed form, both phases).
pub fn fs_analytic(mu: f64, eps0: f64) -> Result<f64, QuantumError> {
    if mu == 1.0 {
        return Err(QuantumError::Singular);
    }
    if mu < 1.0 {
        Ok(mu * mu / (16.0 * (mu * mu - 1.0).powi(2)))
    } else {
        Ok(fs_position_term(mu, eps0)? + 1.0 / (64.0 * mu * mu * (mu - 1.0).powi(2)))
    }
}

/// The `eps0` (displacement) part of [`fs_analytic`] above threshold.
pub fn fs_position_term(mu: f64, eps0: f64) -> Result<f64, QuantumError> {
    if mu <= 1.0 {
        return Err(QuantumError::Singular);
    }
    Ok(eps0 * mu.sqrt() * (mu - 2.0).powi(2) / (8.0 * mu.powi(5) * (mu - 1.0).sqrt()))
}

/// Susceptibility of a displaced Gaussian with the variance of
/// [`gaussian_variance`]: identical to [`fs_analytic`] below threshold, twice its
/// displacement term above.
pub fn fs_gaussian(mu: f64, eps0: f64) -> Result<f64, QuantumError> {
    if mu < 1.0 {
        return fs_analytic(mu, eps0);
    }
    if mu == 1.0 {
        return Err(QuantumError::Singular);
    }
    let pos = eps0 * (mu - 2.0).powi(2) / (4.0 * mu.powf(4.5) * (mu - 1.0).sqrt());
    Ok(pos + 1.0 / (64.0 * mu * mu * (mu - 1.0).powi(2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FsDomain {
    /// Half-domain (one well) above threshold, full domain below.
    #[default]
    Auto,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsConfig {
    pub delta: f64,
    pub n_points: usize,
    pub domain: FsDomain,
    pub itc: ImagTimeConfig,
}

impl Default for FsConfig {
    fn default() -> Self {
        FsConfig {
            delta: 1e-3,
            n_points: DEFAULT_POINTS,
            domain: FsDomain::Auto,
            itc: ImagTimeConfig::default(),
        }
    }
}

pub const MIN_FS_STEP: f64 = 1e-5;

/// `chi_F = (2 - F(+d) - F(-d)) / (2 d^2)`, `F(d) = Re <psi(mu)|psi(mu + d)>`,
/// with `g, kappa, eta, V` taken from `p`.
pub fn fs_numeric(p: &DimensionlessParams, mu: f64, cfg: &FsConfig) -> Result<f64, QuantumError> {
    let d = cfg.delta;
    if !(MIN_FS_STEP..=0.1).contains(&d) {
        return Err(QuantumError::Config(format!("FS step {d} outside [{MIN_FS_STEP}, 0.1]")));
    }
    let centre = p.with_mu(mu)?;
    let grid = Grid1D::auto(&centre, cfg.n_points)?;
    let parity = if mu > 1.0 && cfg.domain == FsDomain::Auto { Parity::Odd } else { Parity::Even };
    let psi0 = ground_state_with(&centre, &grid, &cfg.itc, &GroundStateOptions { parity, init: None })?;
    let mut f = [0.0; 2];
    for (slot, m) in f.iter_mut().zip([mu + d, mu - d]) {
        let q = p.with_mu(m)?;
        let opts = GroundStateOptions {
            parity,
            init: Some(&psi0),
        };
        *slot = psi0.overlap(&ground_state_with(&q, &grid, &cfg.itc, &opts)?);
    }
    Ok((2.0 - f[0] - f[1]) / (2.0 * d * d))
}

pub const ALPHA_WINDOW_BELOW: (f64, f64) = (0.9, 0.99);
pub const ALPHA_WINDOW_ABOVE: (f64, f64) = (1.01, 1.1);

/// Exponent `alpha` of `chi ~ |mu - 1|^-alpha` from `(mu, chi)` samples, fitted as
/// `ln chi = A - alpha ln|mu - 1| + B |mu - 1|`.
pub fn fit_alpha_side(points: &[(f64, f64)], window: (f64, f64)) -> Result<f64, QuantumError> {
    let eps = 1e-12;
    let sel: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(m, c)| *m >= window.0 - eps && *m <= window.1 + eps && *c > 0.0)
        .collect();
    if sel.len() < 5 {
        return Err(QuantumError::Fit(format!("{} points in [{}, {}], need 5", sel.len(), window.0, window.1)));
    }
    let t: Vec<f64> = sel.iter().map(|(m, _)| (m - 1.0).abs()).collect();
    let cols = vec![vec![1.0; t.len()], t.iter().map(|t| t.ln()).collect(), t.clone()];
    let y: Vec<f64> = sel.iter().map(|(_, c)| c.ln()).collect();
    let c = lstsq(&cols, &y).ok_or_else(|| QuantumError::Fit("degenerate design".into()))?;
    Ok(-c[1])
}

/// `(alpha_minus, alpha_plus)` on the standard windows.
pub fn fit_alpha(below: &[(f64, f64)], above: &[(f64, f64)]) -> Result<(f64, f64), QuantumError> {
    Ok((fit_alpha_side(below, ALPHA_WINDOW_BELOW)?, fit_alpha_side(above, ALPHA_WINDOW_ABOVE)?))
}
