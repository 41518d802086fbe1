use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mim_dicke::dynamics::{locate_bifurcation, relax_with_observer, write_trajectory_csv, IntegratorConfig, StateVector};
use mim_dicke::experiment::{cat_sensitivity, cat_sensitivity_lab, lab_report};
use mim_dicke::fockcheck::{
    build_hamiltonian, check_dicke_equivalence, check_number_conservation, check_parity, dicke_hamiltonian,
    parity_operator, write_operator_csv, FockOperators, FockTruncation, DEFAULT_BUDGET,
};
use mim_dicke::meanfield::{effective_potential, steady_positions, sweep, GridSpec};
use mim_dicke::quantum1d::{
    fs_analytic, fs_numeric, ground_state_with, linspace, moments, squeezing_sweep, wigner, write_squeezing_csv,
    FsConfig, FsDomain, Grid1D, GroundStateOptions, ImagTimeConfig, Moments, Parity, DEFAULT_POINTS,
};
use mim_dicke::stability::scan_spectrum;
use mim_dicke::{DimensionlessParams, PhysicalParams, SteadyState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ParamSource, Resolved};
use crate::Invalid;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if !ok {
        bail!(Invalid(msg()));
    }
    Ok(())
}

/// Output directory, created during validation so unwritable paths fail early.
pub struct OutDir(PathBuf);

impl OutDir {
    pub fn prepare(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).map_err(|e| Invalid(format!("output directory {}: {e}", path.display())))?;
        Ok(OutDir(path.to_path_buf()))
    }

    fn write_with<F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>>(&self, name: &str, f: F) -> Result<()> {
        let path = self.0.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_with(name, |w| w.write_all(text.as_bytes()))?;
        Ok(text)
    }
}

fn mu_grid(mu_min: f64, mu_max: f64, n: usize) -> Result<Vec<f64>> {
    ensure(n >= 1, || "n_points must be >= 1".into())?;
    ensure(mu_min.is_finite() && mu_max.is_finite(), || "grid bounds must be finite".into())?;
    ensure(n == 1 || mu_min < mu_max, || format!("empty grid [{mu_min}, {mu_max}]"))?;
    Ok(GridSpec::uniform(mu_min, mu_max, n).points())
}

// ---------------------------------------------------------------- potential

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSettings {
    pub lambdas: Vec<f64>,
    pub half_width: Option<f64>,
    pub n_points: usize,
}

impl Default for PotentialSettings {
    fn default() -> Self {
        PotentialSettings {
            lambdas: vec![0.5, 1.0, 2.0, 10.0],
            half_width: None,
            n_points: 801,
        }
    }
}

pub fn potential(r: &Resolved, s: &PotentialSettings, out: &Path) -> Result<()> {
    ensure(!s.lambdas.is_empty(), || "lambdas must not be empty".into())?;
    ensure(s.lambdas.iter().all(|l| l.is_finite()), || "lambdas must be finite".into())?;
    ensure(s.n_points >= 2, || "n_points must be >= 2".into())?;
    if let Some(h) = s.half_width {
        ensure(h.is_finite() && h > 0.0, || format!("half_width = {h} must be > 0"))?;
    }
    let out = OutDir::prepare(out)?;
    let half = match s.half_width {
        Some(h) => h,
        None => {
            let mut widest: f64 = 0.0;
            for &l in &s.lambdas {
                for ss in steady_positions(&r.params.with_lambda(l))? {
                    widest = widest.max(ss.x_ss.abs());
                }
            }
            (1.5 * widest).max(10.0)
        }
    };
    let n = s.n_points;
    let xs: Vec<f64> = (0..n).map(|i| half * (2.0 * i as f64 - (n - 1) as f64) / (n - 1) as f64).collect();
    let curves: Vec<Vec<f64>> = s
        .lambdas
        .par_iter()
        .map(|&l| {
            let q = r.params.with_lambda(l);
            xs.iter().map(|&x| effective_potential(&q, x)).collect()
        })
        .collect();
    for (l, v) in s.lambdas.iter().zip(&curves) {
        out.write_with(&format!("potential_lambda_{l}.csv"), |w| {
            writeln!(w, "x,V_eff")?;
            for (x, v) in xs.iter().zip(v) {
                writeln!(w, "{x:.16e},{v:.16e}")?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_points: usize,
    pub log_near_one: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            mu_min: 0.0,
            mu_max: 3.0,
            n_points: 301,
            log_near_one: false,
        }
    }
}

pub fn sweep_cmd(r: &Resolved, s: &SweepSettings, out: &Path) -> Result<()> {
    mu_grid(s.mu_min, s.mu_max, s.n_points)?;
    if s.log_near_one {
        ensure(s.mu_min > 1.0, || "log_near_one requires mu_min > 1".into())?;
    }
    ensure(r.params.is_balanced_antisymmetric(), || "sweep requires eta_a = -eta_b".into())?;
    let out = OutDir::prepare(out)?;
    let grid = if s.log_near_one {
        GridSpec::log_near_one(s.mu_min, s.mu_max, s.n_points)
    } else {
        GridSpec::uniform(s.mu_min, s.mu_max, s.n_points)
    };
    let table = sweep(&r.params, grid)?;
    out.write_with("sweep.csv", |w| table.write_csv(w))
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSettings {
    pub mu_min: f64,
    pub mu_max: f64,
    pub n_points: usize,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings {
            mu_min: 0.0,
            mu_max: 3.0,
            n_points: 301,
        }
    }
}

pub fn spectrum_cmd(r: &Resolved, s: &SpectrumSettings, out: &Path) -> Result<()> {
    let grid = mu_grid(s.mu_min, s.mu_max, s.n_points)?;
    ensure(s.mu_min >= 0.0, || "mu_min must be >= 0".into())?;
    ensure(r.params.is_balanced_antisymmetric(), || "spectrum requires eta_a = -eta_b".into())?;
    let out = OutDir::prepare(out)?;
    let scan = scan_spectrum(&r.params, &grid)?;
    out.write_with("spectrum.csv", |w| scan.write_csv(w))
}

// ---------------------------------------------------------------- groundstate

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateSettings {
    pub n_points: usize,
    pub half_width: Option<f64>,
    pub parity: Parity,
    pub dtau: f64,
    pub tol: f64,
    pub check_every: usize,
    pub max_steps: usize,
    /// Couplings for the squeezing sweep (`squeezing.csv`).
    pub squeeze: Option<Vec<f64>>,
    /// Couplings `mu` for the fidelity susceptibility (`fs.csv`).
    pub fs_mu: Option<Vec<f64>>,
    pub fs_delta: f64,
    pub fs_domain: FsDomain,
}

impl Default for GroundStateSettings {
    fn default() -> Self {
        let itc = ImagTimeConfig::default();
        GroundStateSettings {
            n_points: DEFAULT_POINTS,
            half_width: None,
            parity: Parity::Auto,
            dtau: itc.dtau,
            tol: itc.tol,
            check_every: itc.check_every,
            max_steps: itc.max_steps,
            squeeze: None,
            fs_mu: None,
            fs_delta: FsConfig::default().delta,
            fs_domain: FsDomain::Auto,
        }
    }
}

impl GroundStateSettings {
    fn itc(&self) -> ImagTimeConfig {
        ImagTimeConfig {
            dtau: self.dtau,
            tol: self.tol,
            check_every: self.check_every,
            max_steps: self.max_steps,
        }
    }

    fn grid(&self, p: &DimensionlessParams) -> Result<Grid1D> {
        let g = match self.half_width {
            Some(h) => Grid1D::symmetric(h, self.n_points)?,
            None => Grid1D::auto(p, self.n_points)?,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Serialize)]
struct GroundStateReport {
    lambda: f64,
    mu: f64,
    energy: f64,
    steps: usize,
    parity: Parity,
    grid: Grid1D,
    moments: Moments,
}

pub fn groundstate(r: &Resolved, s: &GroundStateSettings, out: &Path) -> Result<()> {
    let itc = s.itc();
    itc.validate()?;
    let grid = s.grid(&r.params)?;
    for l in s.squeeze.iter().flatten().chain(s.fs_mu.iter().flatten()) {
        ensure(l.is_finite(), || "coupling lists must be finite".into())?;
    }
    let fs_cfg = FsConfig {
        delta: s.fs_delta,
        n_points: s.n_points,
        domain: s.fs_domain,
        itc,
    };
    ensure(s.fs_delta >= mim_dicke::quantum1d::MIN_FS_STEP && s.fs_delta <= 0.1, || {
        format!("fs_delta = {} outside [1e-5, 0.1]", s.fs_delta)
    })?;
    let out = OutDir::prepare(out)?;
    let opts = GroundStateOptions {
        parity: s.parity,
        init: None,
    };
    let wf = ground_state_with(&r.params, &grid, &itc, &opts)?;
    out.write_with("groundstate.csv", |w| wf.write_csv(w))?;
    out.write_json(
        "groundstate.json",
        &GroundStateReport {
            lambda: r.params.lambda,
            mu: r.params.mu()?,
            energy: wf.energy,
            steps: wf.steps,
            parity: s.parity,
            grid,
            moments: moments(&wf),
        },
    )?;
    if let Some(lambdas) = &s.squeeze {
        let rows = squeezing_sweep(&r.params, lambdas, s.n_points, &itc)?;
        out.write_with("squeezing.csv", |w| write_squeezing_csv(w, &rows))?;
    }
    if let Some(mus) = &s.fs_mu {
        let eps0 = r.params.epsilon0();
        let rows: Vec<(f64, f64)> = mus
            .par_iter()
            .map(|&mu| fs_numeric(&r.params, mu, &fs_cfg).map(|chi| (mu, chi)))
            .collect::<Result<_, _>>()?;
        out.write_with("fs.csv", |w| {
            writeln!(w, "mu,chi_numeric,chi_analytic")?;
            for (mu, chi) in &rows {
                match fs_analytic(*mu, eps0) {
                    Ok(a) => writeln!(w, "{mu:.16e},{chi:.16e},{a:.16e}")?,
                    Err(_) => writeln!(w, "{mu:.16e},{chi:.16e},")?,
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- wigner

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerSettings {
    pub n_points: usize,
    pub half_width: Option<f64>,
    pub parity: Parity,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
    pub x_stride: usize,
}

impl Default for WignerSettings {
    fn default() -> Self {
        WignerSettings {
            n_points: DEFAULT_POINTS,
            half_width: None,
            parity: Parity::Auto,
            p_min: -8.0,
            p_max: 8.0,
            p_points: 512,
            x_stride: 1,
        }
    }
}

pub fn wigner_cmd(r: &Resolved, s: &WignerSettings, out: &Path) -> Result<()> {
    let gs = GroundStateSettings {
        n_points: s.n_points,
        half_width: s.half_width,
        ..Default::default()
    };
    let grid = gs.grid(&r.params)?;
    ensure(s.p_points >= 2 && s.p_min < s.p_max, || "p grid must have >= 2 points and p_min < p_max".into())?;
    ensure(s.x_stride >= 1, || "x_stride must be >= 1".into())?;
    let out = OutDir::prepare(out)?;
    let opts = GroundStateOptions {
        parity: s.parity,
        init: None,
    };
    let wf = ground_state_with(&r.params, &grid, &gs.itc(), &opts)?;
    let w = wigner(&wf, &linspace(s.p_min, s.p_max, s.p_points), s.x_stride)?;
    out.write_with("wigner.csv", |f| w.write_csv(f))
}

// ---------------------------------------------------------------- fock

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockSettings {
    pub n_max_a: usize,
    pub n_max_b: usize,
    pub n_max_c: usize,
    pub budget: usize,
    pub tolerance: f64,
    /// Operators to dump: `H`, `H_D`, `N_tot`, `U_plus`, `U_minus`, `a`, `b`, `c`.
    pub dump: Vec<String>,
}

impl Default for FockSettings {
    fn default() -> Self {
        FockSettings {
            n_max_a: 4,
            n_max_b: 4,
            n_max_c: 6,
            budget: DEFAULT_BUDGET,
            tolerance: 1e-12,
            dump: Vec::new(),
        }
    }
}

const OPERATORS: &[&str] = &["H", "H_D", "N_tot", "U_plus", "U_minus", "a", "b", "c"];

#[derive(Serialize)]
struct FockCheck {
    value: f64,
    pass: bool,
}

#[derive(Serialize)]
struct FockReport {
    truncation: FockTruncation,
    dim: usize,
    eta: f64,
    tolerance: f64,
    number_conservation: FockCheck,
    dicke_equivalence: FockCheck,
    parity_symmetric: FockCheck,
    parity_antisymmetric: FockCheck,
}

pub fn fock(r: &Resolved, s: &FockSettings, out: &Path) -> Result<()> {
    let t = FockTruncation {
        n_max_a: s.n_max_a,
        n_max_b: s.n_max_b,
        n_max_c: s.n_max_c,
        budget: s.budget,
    };
    t.validate()?;
    ensure(s.tolerance.is_finite() && s.tolerance > 0.0, || "tolerance must be > 0".into())?;
    for name in &s.dump {
        ensure(OPERATORS.contains(&name.as_str()), || format!("unknown operator `{name}`; expected one of {OPERATORS:?}"))?;
    }
    let out = OutDir::prepare(out)?;
    let p = r.params;
    let eta = p.eta();
    let free = p.with_pumping(0.0, 0.0);
    let check = |value: f64| FockCheck {
        value,
        pass: value <= s.tolerance,
    };
    let report = FockReport {
        truncation: t,
        dim: t.dim(),
        eta,
        tolerance: s.tolerance,
        number_conservation: check(check_number_conservation(&free, &t)?),
        dicke_equivalence: check(check_dicke_equivalence(&free, &t)?),
        parity_symmetric: check(check_parity(&p.with_pumping(eta, eta), &t, 1.0)?),
        parity_antisymmetric: check(check_parity(&p.with_pumping(eta, -eta), &t, -1.0)?),
    };
    out.write_json("fock.json", &report)?;
    for name in &s.dump {
        let m = match name.as_str() {
            "H" => build_hamiltonian(&p, &t)?,
            "H_D" => dicke_hamiltonian(&free, &t)?,
            "N_tot" => FockOperators::new(&t)?.n_tot(),
            "U_plus" => parity_operator(&t, 1.0)?,
            "U_minus" => parity_operator(&t, -1.0)?,
            "a" => FockOperators::new(&t)?.a,
            "b" => FockOperators::new(&t)?.b,
            _ => FockOperators::new(&t)?.c,
        };
        out.write_with(&format!("operator_{name}.csv"), |w| write_operator_csv(w, name, &m, &t))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- lab / cat

#[derive(Serialize)]
struct LabInput<'a> {
    #[serde(flatten)]
    source: &'a ParamSource,
    physical: PhysicalParams,
    g: f64,
    kappa: f64,
    p_over_pc: f64,
}

fn lab_physical(r: &Resolved) -> PhysicalParams {
    match r.source {
        ParamSource::Physical { physical } => physical,
        ParamSource::Dimensionless => PhysicalParams::sin_membrane_1064nm(0.0),
    }
}

pub fn lab(r: &Resolved, out: &Path) -> Result<String> {
    let pp = lab_physical(r);
    pp.validate()?;
    let out = OutDir::prepare(out)?;
    let est = lab_report(&pp, r.lab.g, r.lab.kappa, r.lab.p_over_pc)?;
    let cat = cat_sensitivity_lab(&pp, r.lab.g, r.lab.kappa, r.lab.p_over_pc);
    let input = LabInput {
        source: &r.source,
        physical: pp,
        g: r.lab.g,
        kappa: r.lab.kappa,
        p_over_pc: r.lab.p_over_pc,
    };
    let mut report = serde_json::json!({ "input": input, "lab": est });
    match cat {
        Ok(c) => report["cat"] = serde_json::to_value(c)?,
        Err(e) => {
            report["cat"] = serde_json::Value::Null;
            report["cat_error"] = e.to_string().into();
        }
    }
    out.write_json("lab.json", &report)
}

pub fn cat(r: &Resolved, out: &Path) -> Result<String> {
    let out = OutDir::prepare(out)?;
    let report = match r.source {
        ParamSource::Physical { physical } => {
            let c = cat_sensitivity_lab(&physical, r.lab.g, r.lab.kappa, r.lab.p_over_pc)?;
            serde_json::json!({ "input": { "source": "physical", "physical": physical, "g": r.lab.g,
                "kappa": r.lab.kappa, "p_over_pc": r.lab.p_over_pc }, "cat": c })
        }
        ParamSource::Dimensionless => {
            let c = cat_sensitivity(&r.params)?;
            serde_json::json!({ "input": { "source": "dimensionless", "dimensionless": r.params }, "cat": c })
        }
    };
    out.write_json("cat.json", &report)
}

// ---------------------------------------------------------------- dynamics

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSettings {
    pub dt: f64,
    pub t_max: f64,
    pub residual_tol: f64,
    /// Keep every `stride`-th integration step in `trajectory.csv`.
    pub stride: usize,
    pub x0: Option<f64>,
    pub p0: Option<f64>,
    /// Bisect for the bifurcation in this `lambda` bracket instead of relaxing.
    pub locate: Option<[f64; 2]>,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        DynamicsSettings {
            dt: c.dt,
            t_max: c.t_max,
            residual_tol: c.residual_tol,
            stride: 100,
            x0: None,
            p0: None,
            locate: None,
        }
    }
}

#[derive(Serialize)]
struct Relaxed {
    lambda: f64,
    mu: f64,
    steady: SteadyState,
    x_ss_closed: Option<f64>,
}

#[derive(Serialize)]
struct Bifurcation {
    lambda_bifurcation: f64,
    lambda_c: f64,
    gamma: f64,
    lambda_threshold: f64,
}

pub fn dynamics(r: &Resolved, s: &DynamicsSettings, out: &Path) -> Result<()> {
    let cfg = IntegratorConfig {
        dt: s.dt,
        t_max: s.t_max,
        residual_tol: s.residual_tol,
    };
    cfg.validate()?;
    ensure(s.stride >= 1, || "stride must be >= 1".into())?;
    for v in [s.x0, s.p0].into_iter().flatten() {
        ensure(v.is_finite(), || "initial state must be finite".into())?;
    }
    if let Some([lo, hi]) = s.locate {
        ensure(lo.is_finite() && hi.is_finite() && lo < hi, || format!("locate bracket [{lo}, {hi}] is empty"))?;
    }
    let p = r.params;
    let out = OutDir::prepare(out)?;
    if let Some([lo, hi]) = s.locate {
        let lam = locate_bifurcation(&p, (lo, hi), &cfg)?;
        let lambda_c = p.lambda_c()?;
        out.write_json(
            "bifurcation.json",
            &Bifurcation {
                lambda_bifurcation: lam,
                lambda_c,
                gamma: p.gamma,
                lambda_threshold: lambda_c * (1.0 + p.gamma * p.gamma).sqrt(),
            },
        )?;
        return Ok(());
    }
    let mut init = StateVector::normal_fixed_point(&p);
    if let Some(x) = s.x0 {
        init.x = x;
    }
    if let Some(v) = s.p0 {
        init.p = v;
    }
    let mut rows = Vec::new();
    let mut k = 0usize;
    let result = relax_with_observer(&p, init, &cfg, |t, st| {
        if k.is_multiple_of(s.stride) {
            rows.push((t, *st));
        }
        k += 1;
    });
    out.write_with("trajectory.csv", |w| write_trajectory_csv(w, &rows))?;
    let steady = result?;
    let mu = p.mu()?;
    let x_ss_closed = (p.is_balanced_antisymmetric() && p.delta == 0.0 && mu > 1.0)
        .then(|| mim_dicke::meanfield::x_ss_closed(mu, p.epsilon0()));
    out.write_json(
        "steady.json",
        &Relaxed {
            lambda: p.lambda,
            mu,
            steady,
            x_ss_closed,
        },
    )?;
    Ok(())
}
