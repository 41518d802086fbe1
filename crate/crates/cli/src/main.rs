mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mim_dicke::dynamics::DynamicsError;
use mim_dicke::experiment::ExperimentError;
use mim_dicke::meanfield::MeanFieldError;
use mim_dicke::quantum1d::QuantumError;
use mim_dicke::stability::StabilityError;
use serde::Serialize;

use config::{resolve, resolve_params, ConfigFile, LabFlags, ParamFlags};

/// Validation failure raised by the front end itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "mimdicke", version, about = "Membrane-in-the-middle Dicke transition simulator")]
struct Cli {
    /// Parameter file (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    params: ParamArgs,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, global = true, allow_negative_numbers = true)]
    g: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    kappa: Option<f64>,
    /// Balanced antisymmetric pumping: eta_a = eta, eta_b = -eta.
    #[arg(long, global = true, allow_negative_numbers = true, conflicts_with_all = ["eta_a", "eta_b"])]
    eta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eta_a: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eta_b: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true, conflicts_with = "mu")]
    lambda: Option<f64>,
    /// Coupling relative to threshold; sets lambda = mu * lambda_c.
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// System size V.
    #[arg(long = "volume", visible_alias = "V", global = true)]
    volume: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Pump power in W (physical parameter source only).
    #[arg(long, global = true)]
    power: Option<f64>,
    /// Laboratory g in rad/s.
    #[arg(long, global = true)]
    lab_g: Option<f64>,
    /// Laboratory kappa in rad/s.
    #[arg(long, global = true)]
    lab_kappa: Option<f64>,
    /// Operating point P / P_c.
    #[arg(long, global = true)]
    p_over_pc: Option<f64>,
}

impl ParamArgs {
    fn split(&self) -> (ParamFlags, LabFlags) {
        (
            ParamFlags {
                g: self.g,
                kappa: self.kappa,
                eta: self.eta,
                eta_a: self.eta_a,
                eta_b: self.eta_b,
                lambda: self.lambda,
                mu: self.mu,
                volume: self.volume,
                delta: self.delta,
                gamma: self.gamma,
                power: self.power,
            },
            LabFlags {
                g: self.lab_g,
                kappa: self.lab_kappa,
                p_over_pc: self.p_over_pc,
            },
        )
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective potential V_eff(x), one CSV per lambda.
    Potential(PotentialArgs),
    /// Mean-field sweep over mu.
    Sweep(SweepArgs),
    /// Excitation spectrum over mu with continuous branch labels.
    Spectrum(SpectrumArgs),
    /// Quantum ground state, optional squeezing and fidelity-susceptibility sweeps.
    Groundstate(GroundStateArgs),
    /// Wigner function of the ground state.
    Wigner(WignerArgs),
    /// Truncated-Fock symmetry checks and operator dumps.
    Fock(FockArgs),
    /// Laboratory feasibility report (JSON).
    Lab,
    /// Cat-state tunnel splitting and imbalance sensitivity (JSON).
    Cat,
    /// Time integration of the mean-field equations.
    Dynamics(DynamicsArgs),
}

#[derive(Args, Debug, Serialize)]
struct PotentialArgs {
    /// Comma-separated couplings.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
    /// Log-spaced points 1 + t (requires mu_min > 1).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    log_near_one: Option<bool>,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct GroundStateArgs {
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    /// auto | even | odd | none
    #[arg(long)]
    parity: Option<String>,
    #[arg(long)]
    dtau: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    check_every: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Comma-separated couplings for squeezing.csv.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    squeeze: Option<Vec<f64>>,
    /// Comma-separated mu values for fs.csv.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    fs_mu: Option<Vec<f64>>,
    #[arg(long)]
    fs_delta: Option<f64>,
    /// auto | full
    #[arg(long)]
    fs_domain: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct WignerArgs {
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    parity: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    p_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p_max: Option<f64>,
    #[arg(long)]
    p_points: Option<usize>,
    #[arg(long)]
    x_stride: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct FockArgs {
    #[arg(long)]
    n_max_a: Option<usize>,
    #[arg(long)]
    n_max_b: Option<usize>,
    #[arg(long)]
    n_max_c: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Comma-separated operator names: H, H_D, N_tot, U_plus, U_minus, a, b, c.
    #[arg(long, value_delimiter = ',')]
    dump: Option<Vec<String>>,
}

#[derive(Args, Debug, Serialize)]
struct DynamicsArgs {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p0: Option<f64>,
    /// LO,HI: bisect for the bifurcation in lambda instead of relaxing.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_negative_numbers = true)]
    locate: Option<Vec<f64>>,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Invalid("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let (pflags, lflags) = cli.params.split();
    let r = resolve_params(&file, &pflags, &lflags)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Command::Potential(a) => commands::potential(&r, &resolve(&file, "potential", a)?, out),
        Command::Sweep(a) => commands::sweep_cmd(&r, &resolve(&file, "sweep", a)?, out),
        Command::Spectrum(a) => commands::spectrum_cmd(&r, &resolve(&file, "spectrum", a)?, out),
        Command::Groundstate(a) => commands::groundstate(&r, &resolve(&file, "groundstate", a)?, out),
        Command::Wigner(a) => commands::wigner_cmd(&r, &resolve(&file, "wigner", a)?, out),
        Command::Fock(a) => commands::fock(&r, &resolve(&file, "fock", a)?, out),
        Command::Lab => commands::lab(&r, out).map(|s| print!("{s}")),
        Command::Cat => commands::cat(&r, out).map(|s| print!("{s}")),
        Command::Dynamics(a) => commands::dynamics(&r, &resolve(&file, "dynamics", a)?, out),
    }
}

fn meanfield_numeric(e: &MeanFieldError) -> bool {
    matches!(e, MeanFieldError::Bracket { .. })
}

/// Numerical non-convergence maps to exit code 2, everything else to 1.
fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        if let Some(e) = e.downcast_ref::<DynamicsError>() {
            return matches!(e, DynamicsError::NotConverged { .. } | DynamicsError::Diverged { .. });
        }
        if let Some(e) = e.downcast_ref::<QuantumError>() {
            return match e {
                QuantumError::NotConverged { .. } | QuantumError::WignerResidue(_) => true,
                QuantumError::MeanField(m) => meanfield_numeric(m),
                _ => false,
            };
        }
        if let Some(e) = e.downcast_ref::<StabilityError>() {
            return matches!(e, StabilityError::NoConvergence | StabilityError::Residual { .. });
        }
        if let Some(e) = e.downcast_ref::<ExperimentError>() {
            return matches!(e, ExperimentError::MeanField(m) if meanfield_numeric(m));
        }
        if let Some(e) = e.downcast_ref::<MeanFieldError>() {
            return meanfield_numeric(e);
        }
        false
    })
}

fn emit_error(kind: &str, message: &str, usage: Option<&str>, code: u8) {
    let mut v = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    if let Some(u) = usage {
        v["usage"] = u.into();
    }
    eprintln!("{v}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            emit_error("usage", first, Some(&rendered), 1);
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = if is_numerical(&e) {
                ("nonconvergence", 2)
            } else {
                ("validation", 1)
            };
            emit_error(kind, &format!("{e:#}"), None, code);
            ExitCode::from(code)
        }
    }
}
