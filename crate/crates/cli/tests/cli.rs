use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimdicke")).args(args).output().expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    run(&all)
}

fn stderr_json(o: &Output) -> Value {
    let s = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(s.lines().last().unwrap_or("")).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {s}"))
}

fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn col(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = run(&["sweep", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "usage");
    assert!(e["usage"].as_str().unwrap().contains("Usage:"));
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["potential", "sweep", "spectrum", "groundstate", "wigner", "fock", "lab", "cat", "dynamics"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn potential_progression() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["potential", "--lambdas", "0,0.5,1,2,10", "--n-points", "2001"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut minima = Vec::new();
    for lam in ["0", "0.5", "1", "2", "10"] {
        let (header, rows) = read_csv(&dir.path().join(format!("potential_lambda_{lam}.csv")));
        assert_eq!(header, "x,V_eff");
        let (x, v) = (col(&rows, 0), col(&rows, 1));
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        let n = x.len();
        for i in 0..n {
            assert_eq!(x[i], -x[n - 1 - i]);
        }
        let i0 = n / 2;
        assert_eq!(x[i0], 0.0);
        if lam == "0" {
            for i in 0..n {
                assert!((v[i] - v[i0] - 0.5 * x[i] * x[i]).abs() <= 1e-9 * v[i].abs().max(1.0));
            }
        }
        let imin = (0..n).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        minima.push(x[imin].abs());
    }
    assert_eq!(minima[0], 0.0);
    assert_eq!(minima[1], 0.0);
    assert!(minima[3] > 0.0);
    assert!(minima[3] > minima[4], "well separation at lambda=2 {} vs lambda=10 {}", minima[3], minima[4]);
}

#[test]
fn sweep_phonon_peak_at_mu_two() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["sweep", "--g", "3", "--kappa", "2", "--eta", "4", "--n-points", "301"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, "mu,x_ss_plus,n_a,n_b,n_diff,n_c,E0_over_eps0");
    let (mu, nc) = (col(&rows, 0), col(&rows, 5));
    let imax = (0..mu.len()).max_by(|&a, &b| nc[a].total_cmp(&nc[b])).unwrap();
    assert!((mu[imax] - 2.0).abs() < 1e-9, "n_c peaks at mu = {}", mu[imax]);
}

#[test]
fn spectrum_branch_structure() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["spectrum", "--g", "2", "--kappa", "1", "--n-points", "61"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("spectrum.csv"));
    assert_eq!(header, "mu,branch,re_omega,im_omega");
    assert_eq!(rows.len(), 61 * 6);
    let at0: Vec<_> = rows.iter().filter(|r| r[0].parse::<f64>().unwrap() == 0.0).collect();
    let find = |b: &str| at0.iter().find(|r| r[1] == b).map(|r| (r[2].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap())).unwrap();
    let (re, im) = find("membrane+");
    assert!((re - 1.0).abs() < 1e-9 && im.abs() < 1e-9);
    let (re, im) = find("light1-");
    assert!((re + 2.0).abs() < 1e-9 && (im + 1.0).abs() < 1e-9);
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn outputs_identical_across_thread_counts() {
    let jobs: &[&[&str]] = &[
        &["potential"],
        &["sweep"],
        &["spectrum", "--n-points", "41"],
        &["groundstate", "--mu", "1.2", "--n-points", "256", "--squeeze", "0.5,1,1.5", "--fs-mu", "0.5,0.8"],
        &["fock", "--n-max-a", "2", "--n-max-b", "2", "--n-max-c", "3", "--dump", "H"],
        &["cat", "--mu", "1.5"],
        &["lab"],
    ];
    for job in jobs {
        let runs: Vec<_> = ["1", "4", "4"]
            .iter()
            .map(|t| {
                let dir = TempDir::new().unwrap();
                let mut args = job.to_vec();
                args.extend(["--threads", t]);
                let o = run_in(dir.path(), &args);
                assert!(o.status.success(), "{job:?}: {}", String::from_utf8_lossy(&o.stderr));
                (dir_bytes(dir.path()), o.stdout)
            })
            .collect();
        assert!(!runs[0].0.is_empty());
        assert_eq!(runs[0], runs[1], "{job:?}");
        assert_eq!(runs[1], runs[2], "{job:?}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[dimensionless]\ng = 3.0\nkappa = 2.0\neta_a = 4.0\neta_b = -4.0\nlambda = 1.0\nV = 100.0\n\n[sweep]\nmu_min = 0.5\nmu_max = 2.5\nn_points = 5\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = run_in(&out, &["sweep", "--config", cfg.to_str().unwrap(), "--n-points", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(col(&rows, 0), vec![0.5, 1.5, 2.5]);

    let json = dir.path().join("run.json");
    fs::write(&json, r#"{"dimensionless": {"g": 3, "kappa": 2, "eta_a": 4, "eta_b": -4, "lambda": 1, "V": 100}, "sweep": {"mu_min": 0.5, "mu_max": 2.5, "n_points": 3}}"#).unwrap();
    let out2 = dir.path().join("b");
    let o = run_in(&out2, &["sweep", "--config", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("sweep.csv")).unwrap(), fs::read(out2.join("sweep.csv")).unwrap());
}

#[test]
fn config_validation_errors() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("both.toml", "[dimensionless]\ng=1.0\nkappa=1.0\neta_a=1.0\neta_b=-1.0\nlambda=1.0\nV=100.0\n[physical]\nL=0.067\n"),
        ("neither.toml", "[sweep]\nn_points = 3\n"),
        ("unknown.toml", "[dimensionless]\ng=1.0\nkappa=1.0\neta_a=1.0\neta_b=-1.0\nlambda=1.0\nV=100.0\n[plot]\nx=1\n"),
        ("field.toml", "[dimensionless]\ng=1.0\nkappa=1.0\neta_a=1.0\neta_b=-1.0\nlambda=1.0\nV=100.0\nfoo=2.0\n"),
        ("negative.toml", "[dimensionless]\ng=-1.0\nkappa=1.0\neta_a=1.0\neta_b=-1.0\nlambda=1.0\nV=100.0\n"),
    ];
    for (name, text) in cases {
        let cfg = dir.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = dir.path().join(format!("out_{name}"));
        let o = run_in(&out, &["sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert_eq!(stderr_json(&o)["error"], "validation", "{name}");
        assert!(!out.exists(), "{name}: output written despite invalid config");
    }
}

#[test]
fn physical_source_rejects_dimensionless_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("phys.toml");
    fs::write(
        &cfg,
        "[physical]\nL = 0.067\nm = 5e-14\nomega = 628318.5307179586\nomega_centre = 1.7703492173955385e15\nR_membrane = 0.5\nP = 1e-3\nQ = 1e6\nV = 1.0\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["cat", "--config", cfg.to_str().unwrap(), "--g", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run_in(dir.path(), &["lab", "--config", cfg.to_str().unwrap(), "--power", "2e-3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["input"]["source"], "physical");
    assert_eq!(v["input"]["physical"]["P"], 2e-3);
}

#[test]
fn fail_fast_before_output() {
    let dir = TempDir::new().unwrap();
    let bad: &[&[&str]] = &[
        &["sweep", "--n-points", "0"],
        &["sweep", "--mu-min", "2", "--mu-max", "1"],
        &["groundstate", "--n-points", "64"],
        &["groundstate", "--parity", "sideways"],
        &["wigner", "--x-stride", "0"],
        &["fock", "--n-max-a", "1"],
        &["fock", "--dump", "Q"],
        &["dynamics", "--dt", "-1"],
        &["dynamics", "--locate", "2,1"],
        &["potential", "--lambdas", "1", "--n-points", "1"],
        &["sweep", "--threads", "0"],
        &["lab", "--p-over-pc", "-1"],
    ];
    for (k, args) in bad.iter().enumerate() {
        let out = dir.path().join(k.to_string());
        let o = run_in(&out, args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{args:?} created output");
    }
}

#[test]
fn lab_report_fields_and_echo() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["lab"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let file: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("lab.json")).unwrap()).unwrap();
    assert_eq!(v, file);
    for key in ["lambda", "lambda_c", "P_c", "P", "mu_p", "r_snr", "n_tot", "n_diff", "n_c", "mech_loss_W", "opt_loss_W"] {
        assert!(v["lab"][key].is_number(), "lab.{key}");
    }
    for key in ["mu", "eps0", "Omega", "E_well", "a_turn", "ln_dE_split", "dE_split", "dE_imb", "critical", "power"] {
        assert!(v["cat"].get(key).is_some(), "cat.{key}");
    }
    assert_eq!(v["input"]["p_over_pc"], 1.1);
    let r = v["lab"]["r_snr"].as_f64().unwrap();
    assert!((r - 625.0).abs() < 0.05 * 625.0);
    let log10 = v["cat"]["power"]["log10_dP"].as_f64().unwrap();
    assert!((log10 + 2.1e6).abs() < 0.05 * 2.1e6);
}

#[test]
fn lab_below_threshold_reports_cat_error() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["lab", "--p-over-pc", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["lab"]["n_diff"], 0.0);
    assert!(v["cat"].is_null());
    assert!(v["cat_error"].is_string());
}

#[test]
fn fock_checks_pass() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["fock", "--lambda", "1.3", "--dump", "N_tot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fock.json")).unwrap()).unwrap();
    assert_eq!(v["dim"], 175);
    for k in ["number_conservation", "dicke_equivalence", "parity_symmetric", "parity_antisymmetric"] {
        assert_eq!(v[k]["pass"], true, "{k}");
    }
    let (header, rows) = read_csv(&dir.path().join("operator_N_tot.csv"));
    assert_eq!(header, "row,col,re,im");
    assert!(rows.iter().all(|r| r[0] == r[1]));
}

#[test]
fn groundstate_outputs() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["groundstate", "--mu", "0.5", "--n-points", "256"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("groundstate.csv"));
    assert_eq!(header, "x,re_psi,im_psi");
    assert_eq!(rows.len(), 256);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("groundstate.json")).unwrap()).unwrap();
    let m = &v["moments"];
    assert!(m["dx"].as_f64().unwrap() * m["dp"].as_f64().unwrap() >= 0.5 - 1e-6);
}

#[test]
fn wigner_output() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["wigner", "--n-points", "256", "--p-points", "16", "--x-stride", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("wigner.csv"));
    assert_eq!(header, "x,p,w");
    assert_eq!(rows.len(), 64 * 16);
}

#[test]
fn dynamics_relaxes_and_reports_nonconvergence() {
    let dir = TempDir::new().unwrap();
    let ok = dir.path().join("ok");
    let o = run_in(&ok, &["dynamics", "--mu", "1.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(ok.join("steady.json")).unwrap()).unwrap();
    let x = v["steady"]["x_ss"].as_f64().unwrap();
    let closed = v["x_ss_closed"].as_f64().unwrap();
    assert!((x - closed).abs() < 1e-6);
    let (header, _) = read_csv(&ok.join("trajectory.csv"));
    assert_eq!(header, "t,x,p,re_a,im_a,re_b,im_b");

    let bad = dir.path().join("bad");
    let o = run_in(&bad, &["dynamics", "--mu", "2", "--t-max", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "nonconvergence");
    assert!(bad.join("trajectory.csv").exists());
}

#[test]
fn dynamics_locates_damped_bifurcation() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["dynamics", "--gamma", "0.5", "--locate", "1.0,1.3", "--dt", "1e-2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bifurcation.json")).unwrap()).unwrap();
    let lam = v["lambda_bifurcation"].as_f64().unwrap();
    let expect = v["lambda_threshold"].as_f64().unwrap();
    assert!((lam / expect - 1.0).abs() < 0.01, "{lam} vs {expect}");
}
