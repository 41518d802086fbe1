//! Operator-level checks in a truncated Fock space.
//!
//! Basis states `|n_a, n_b, n_c>` are ordered lexicographically, `n_c` fastest.
//! Truncated products are only trusted on the exact region: `n_a + n_b` at most
//! `min(n_max_a, n_max_b)` (complete photon-number sectors) and `n_c < n_max_c`.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DimensionlessParams, ModelError};

pub type OperatorMatrix = DMatrix<Complex64>;

pub const DEFAULT_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cutoff {name} = {value} must be at least 2")]
    Cutoff { name: &'static str, value: usize },
    #[error("dimension {dim} exceeds budget {budget}")]
    Dimension { dim: usize, budget: usize },
    #[error("requires zero pumping (eta_a = {0}, eta_b = {1})")]
    Pumped(f64, f64),
    #[error("parity swap requires n_max_a == n_max_b")]
    Unequal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockTruncation {
    pub n_max_a: usize,
    pub n_max_b: usize,
    pub n_max_c: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl FockTruncation {
    pub fn new(n_max_a: usize, n_max_b: usize, n_max_c: usize) -> Result<Self, FockError> {
        let t = FockTruncation {
            n_max_a,
            n_max_b,
            n_max_c,
            budget: DEFAULT_BUDGET,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), FockError> {
        for (name, value) in [("n_max_a", self.n_max_a), ("n_max_b", self.n_max_b), ("n_max_c", self.n_max_c)] {
            if value < 2 {
                return Err(FockError::Cutoff { name, value });
            }
        }
        let dim = (self.n_max_a + 1)
            .checked_mul(self.n_max_b + 1)
            .and_then(|d| d.checked_mul(self.n_max_c + 1))
            .unwrap_or(usize::MAX);
        if dim > self.budget {
            return Err(FockError::Dimension { dim, budget: self.budget });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        (self.n_max_a + 1) * (self.n_max_b + 1) * (self.n_max_c + 1)
    }

    pub fn index(&self, na: usize, nb: usize, nc: usize) -> usize {
        (na * (self.n_max_b + 1) + nb) * (self.n_max_c + 1) + nc
    }

    pub fn state(&self, idx: usize) -> (usize, usize, usize) {
        let nc = idx % (self.n_max_c + 1);
        let rest = idx / (self.n_max_c + 1);
        (rest / (self.n_max_b + 1), rest % (self.n_max_b + 1), nc)
    }

    /// Largest complete photon-number sector.
    pub fn max_exact_photons(&self) -> usize {
        self.n_max_a.min(self.n_max_b)
    }

    pub fn exact_mask(&self) -> Vec<bool> {
        (0..self.dim())
            .map(|i| {
                let (na, nb, nc) = self.state(i);
                na + nb <= self.max_exact_photons() && nc < self.n_max_c
            })
            .collect()
    }

    /// Basis indices with `n_a + n_b = n_tot`, all `n_c`.
    pub fn sector_indices(&self, n_tot: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| {
            let (na, nb, _) = self.state(i);
            na + nb == n_tot
        })
        .collect()
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn lowering(n_max: usize) -> OperatorMatrix {
    let mut m = OperatorMatrix::zeros(n_max + 1, n_max + 1);
    for n in 1..=n_max {
        m[(n - 1, n)] = c((n as f64).sqrt());
    }
    m
}

fn dagger(m: &OperatorMatrix) -> OperatorMatrix {
    m.adjoint()
}

/// Single-mode operators lifted to the three-mode space.
#[derive(Debug, Clone)]
pub struct FockOperators {
    pub t: FockTruncation,
    pub a: OperatorMatrix,
    pub b: OperatorMatrix,
    pub c: OperatorMatrix,
    pub id: OperatorMatrix,
}

impl FockOperators {
    pub fn new(t: &FockTruncation) -> Result<Self, FockError> {
        t.validate()?;
        let (ia, ib, ic) = (
            OperatorMatrix::identity(t.n_max_a + 1, t.n_max_a + 1),
            OperatorMatrix::identity(t.n_max_b + 1, t.n_max_b + 1),
            OperatorMatrix::identity(t.n_max_c + 1, t.n_max_c + 1),
        );
        Ok(FockOperators {
            t: *t,
            a: lowering(t.n_max_a).kronecker(&ib).kronecker(&ic),
            b: ia.kronecker(&lowering(t.n_max_b)).kronecker(&ic),
            c: ia.kronecker(&ib).kronecker(&lowering(t.n_max_c)),
            id: OperatorMatrix::identity(t.dim(), t.dim()),
        })
    }

    pub fn n_a(&self) -> OperatorMatrix {
        dagger(&self.a) * &self.a
    }

    pub fn n_b(&self) -> OperatorMatrix {
        dagger(&self.b) * &self.b
    }

    pub fn n_c(&self) -> OperatorMatrix {
        dagger(&self.c) * &self.c
    }

    pub fn n_tot(&self) -> OperatorMatrix {
        self.n_a() + self.n_b()
    }

    pub fn x(&self) -> OperatorMatrix {
        (&self.c + dagger(&self.c)) * c(std::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn p(&self) -> OperatorMatrix {
        (dagger(&self.c) - &self.c) * Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)
    }
}

fn hermitize(m: OperatorMatrix) -> OperatorMatrix {
    (&m + m.adjoint()) * c(0.5)
}

/// Full Hamiltonian with `x`, `p` built from `c` and squared as matrices.
pub fn build_hamiltonian(p: &DimensionlessParams, t: &FockTruncation) -> Result<OperatorMatrix, FockError> {
    p.validate()?;
    let ops = FockOperators::new(t)?;
    let (x, pm) = (ops.x(), ops.p());
    let (ad, bd) = (dagger(&ops.a), dagger(&ops.b));
    let sv = p.v.sqrt();
    let h = (&pm * &pm + &x * &x) * c(0.5)
        + (&ad * &ops.b + &bd * &ops.a) * c(p.g)
        + &x * (ops.n_a() - ops.n_b()) * c(p.lambda / sv)
        + (&ops.a + &ad) * c(p.eta_a * sv)
        + (&ops.b + &bd) * c(p.eta_b * sv)
        + ops.n_tot() * c(p.delta);
    Ok(hermitize(h))
}

/// `(S_x, S_y, S_z) = (a^dag b + b^dag a, i(a^dag b - b^dag a), (n_a - n_b)/2)`.
pub fn schwinger_operators(t: &FockTruncation) -> Result<(OperatorMatrix, OperatorMatrix, OperatorMatrix), FockError> {
    let ops = FockOperators::new(t)?;
    let ab = dagger(&ops.a) * &ops.b;
    let ba = dagger(&ops.b) * &ops.a;
    Ok((&ab + &ba, (&ab - &ba) * Complex64::i(), (ops.n_a() - ops.n_b()) * c(0.5)))
}

/// `n_c + g S_x + sqrt(2/V) lambda (c + c^dag) S_z + delta N_tot`.
pub fn dicke_hamiltonian(p: &DimensionlessParams, t: &FockTruncation) -> Result<OperatorMatrix, FockError> {
    p.validate()?;
    let ops = FockOperators::new(t)?;
    let (sx, _, sz) = schwinger_operators(t)?;
    let cc = &ops.c + dagger(&ops.c);
    Ok(ops.n_c() + sx * c(p.g) + cc * sz * c((2.0 / p.v).sqrt() * p.lambda) + ops.n_tot() * c(p.delta))
}

/// `U_- = (-1)^{n_c} (-1)^{n_a + n_b} SWAP` for `sign < 0`, `U_+ = (-1)^{n_c} SWAP` otherwise.
pub fn parity_operator(t: &FockTruncation, sign: f64) -> Result<OperatorMatrix, FockError> {
    t.validate()?;
    if t.n_max_a != t.n_max_b {
        return Err(FockError::Unequal);
    }
    let mut u = OperatorMatrix::zeros(t.dim(), t.dim());
    for i in 0..t.dim() {
        let (na, nb, nc) = t.state(i);
        let mut phase = if nc % 2 == 0 { 1.0 } else { -1.0 };
        if sign < 0.0 && (na + nb) % 2 == 1 {
            phase = -phase;
        }
        u[(t.index(nb, na, nc), i)] = c(phase);
    }
    Ok(u)
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a * b - b * a
}

/// Largest entry magnitude over rows and columns in `mask`.
pub fn masked_max_abs(m: &OperatorMatrix, mask: &[bool]) -> f64 {
    let mut worst = 0.0f64;
    for (i, &ri) in mask.iter().enumerate() {
        if !ri {
            continue;
        }
        for (j, &cj) in mask.iter().enumerate() {
            if cj {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// `max |[H, N_tot]|` on the exact region.
pub fn check_number_conservation(p: &DimensionlessParams, t: &FockTruncation) -> Result<f64, FockError> {
    let h = build_hamiltonian(p, t)?;
    let n = FockOperators::new(t)?.n_tot();
    Ok(masked_max_abs(&commutator(&h, &n), &t.exact_mask()))
}

/// `max |H - H_D - I/2|` on the exact region.
pub fn check_dicke_equivalence(p: &DimensionlessParams, t: &FockTruncation) -> Result<f64, FockError> {
    if p.eta_a != 0.0 || p.eta_b != 0.0 {
        return Err(FockError::Pumped(p.eta_a, p.eta_b));
    }
    let h = build_hamiltonian(p, t)?;
    let hd = dicke_hamiltonian(p, t)?;
    let id = OperatorMatrix::identity(t.dim(), t.dim());
    Ok(masked_max_abs(&(h - hd - id * c(0.5)), &t.exact_mask()))
}

/// `max |[H, U_sign]|` on the exact region.
pub fn check_parity(p: &DimensionlessParams, t: &FockTruncation, sign: f64) -> Result<f64, FockError> {
    let h = build_hamiltonian(p, t)?;
    let u = parity_operator(t, sign)?;
    Ok(masked_max_abs(&commutator(&h, &u), &t.exact_mask()))
}

pub const OPERATOR_HEADER: &str = "row,col,re,im";

/// Nonzero entries as `row,col,re,im`, preceded by a `#` line describing the basis.
pub fn write_operator_csv<W: Write>(mut w: W, name: &str, m: &OperatorMatrix, t: &FockTruncation) -> io::Result<()> {
    writeln!(
        w,
        "# {name}; basis index = (n_a*{} + n_b)*{} + n_c, n_max = ({}, {}, {})",
        t.n_max_b + 1,
        t.n_max_c + 1,
        t.n_max_a,
        t.n_max_b,
        t.n_max_c
    )?;
    writeln!(w, "{OPERATOR_HEADER}")?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if z != Complex64::new(0.0, 0.0) {
                writeln!(w, "{i},{j},{:.16e},{:.16e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}
