//! Batch front end: `direct`, `inverse`, `verify` and `sweep` runs driven by a TOML config.
//!
//! Exit codes: 0 when every check passes, 1 when a mathematical check fails,
//! 2 when the configuration (or its files) is invalid.

pub mod config;
mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::direct::{lattice_stepper_oracle, max_relative_gap, solve_direct, DirectProblem, Source};
use crate::error::QHeatError;
use crate::growth::CoefficientProfile;
use crate::inverse::{solve_inverse, InverseProblem};
use crate::qlattice::{ln_big_e_q, QLattice};
use crate::spectral::{CoeffTrajectory, CoeffVec, Spectrum};

pub use config::{Command, RunConfig, Setup};
pub use verify::run_verify;

/// Closed-form solution and residual tolerance.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Agreement between the closed form and the stepper.
pub const ORACLE_TOL: f64 = 1e-10;
/// Round-trip tolerance of the inverse solver.
pub const ROUNDTRIP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver failed: {0}")]
    Solve(#[from] QHeatError),

    #[error("check failed: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub(crate) fn config(e: QHeatError) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Solve(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

/// One named check with its worst observed value and the threshold it must not exceed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub threshold: f64,
    pub margin: f64,
}

impl CheckResult {
    pub fn new(name: &str, worst: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: worst <= threshold,
            worst,
            threshold,
            margin: threshold - worst,
        }
    }

    pub fn flag(name: &str, passed: bool, worst: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            passed,
            worst,
            threshold,
            margin: threshold - worst,
        }
    }
}

/// `ChecksFailed` naming every failed check, if any.
pub fn failures(checks: &[CheckResult]) -> Result<(), CliError> {
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

fn create_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t, k, u_k` rows in increasing time, `k` 1-based.
fn trajectory_csv(tr: &CoeffTrajectory) -> Vec<u8> {
    let lattice = tr.lattice();
    let rows = (0..lattice.len()).rev().flat_map(|idx| {
        let t = lattice.point(idx);
        tr.at(idx)
            .as_slice()
            .iter()
            .enumerate()
            .map(move |(k, &u)| vec![num(t), (k + 1).to_string(), num(u)])
            .collect::<Vec<_>>()
    });
    csv_bytes(&["t", "k", "u_k"], rows)
}

fn run_header(setup: &Setup, command: Command) -> serde_json::Value {
    json!({
        "command": command.name(),
        "q": setup.params.q(),
        "T": setup.horizon,
        "lattice_depth": setup.lattice.depth(),
        "n_terms": setup.params.n_terms(),
        "modes": setup.spectrum.len(),
        "d": setup.d,
        "eigenvalues": setup.spectrum.eigenvalues(),
        "labels": setup.spectrum.labels(),
    })
}

fn merge(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (Some(b), serde_json::Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn apriori_ratio(lhs: f64, rhs: f64, constant: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / (constant * rhs)
    }
}

/// Direct solve; writes `trajectory.csv` and `diagnostics.json`.
pub fn run_direct(setup: &Setup, out: &Path) -> Result<Vec<CheckResult>, CliError> {
    let problem = setup.direct_problem(setup.validated_profile()?)?;
    let sol = solve_direct(&problem)?;
    let stepper = lattice_stepper_oracle(&problem)?;
    let gap = max_relative_gap(&sol.trajectory, &stepper)?;
    let diag = sol.diagnostics;
    let checks = vec![
        CheckResult::new("ode_residual", diag.ode_residual, RESIDUAL_TOL),
        CheckResult::new("oracle_agreement", gap, ORACLE_TOL),
        CheckResult::flag(
            "apriori_estimate",
            diag.apriori.holds,
            apriori_ratio(diag.apriori.lhs, diag.apriori.rhs, diag.apriori.constant),
            1.0,
        ),
    ];
    create_out(out)?;
    write_file(&out.join("trajectory.csv"), &trajectory_csv(&sol.trajectory))?;
    let report = merge(
        run_header(setup, Command::Direct),
        json!({
            "ode_residual": diag.ode_residual,
            "oracle_gap": gap,
            "apriori": diag.apriori,
            "jackson_tail": diag.jackson_tail,
            "product_tail": diag.product_tail,
            "mode_tail": diag.mode_tail,
            "checks": checks,
            "passed": checks.iter().all(|c| c.passed),
        }),
    );
    write_json(&out.join("diagnostics.json"), &report)?;
    Ok(checks)
}

/// Inverse solve; writes `source.csv`, `trajectory.csv` and `diagnostics.json`.
pub fn run_inverse(setup: &Setup, out: &Path) -> Result<Vec<CheckResult>, CliError> {
    let problem = setup.inverse_problem(setup.validated_profile()?)?;
    let sol = solve_inverse(&problem)?;
    let diag = sol.diagnostics;
    let stab = diag.stability;
    let modes = per_mode_margins(&problem, &sol.f)?;
    let worst_bound = modes.iter().map(|m| m.ratio).fold(0.0, f64::max);
    let checks = vec![
        CheckResult::new("roundtrip", diag.roundtrip_error, ROUNDTRIP_TOL),
        CheckResult::new("ode_residual", diag.ode_residual, RESIDUAL_TOL),
        CheckResult::flag("source_bound", stab.source_bound_holds, worst_bound, 1.0),
        CheckResult::flag(
            "denominator_bound",
            stab.denominator_bound_holds,
            modes.iter().map(|m| m.denominator_ratio).fold(0.0, f64::max),
            1.0,
        ),
        CheckResult::flag(
            "stability_estimate",
            stab.lhs <= stab.constant * stab.rhs * (1.0 + 1e-9),
            apriori_ratio(stab.lhs, stab.rhs, stab.constant),
            1.0,
        ),
    ];
    create_out(out)?;
    let rows = sol
        .f
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &f)| vec![(k + 1).to_string(), num(f)]);
    write_file(&out.join("source.csv"), &csv_bytes(&["k", "f_k"], rows))?;
    write_file(&out.join("trajectory.csv"), &trajectory_csv(&sol.trajectory))?;
    let report = merge(
        run_header(setup, Command::Inverse),
        json!({
            "roundtrip_error": diag.roundtrip_error,
            "ode_residual": diag.ode_residual,
            "stability": stab,
            "modes": modes,
            "checks": checks,
            "passed": checks.iter().all(|c| c.passed),
        }),
    );
    write_json(&out.join("diagnostics.json"), &report)?;
    Ok(checks)
}

#[derive(Debug, Clone, Serialize)]
struct ModeMargin {
    k: usize,
    f_k: f64,
    /// `(E_q(beta lambda_k T) / alpha0) (|eta_k| + |phi_k|)`.
    bound: f64,
    /// `|f_k| / bound`.
    ratio: f64,
    /// `bound - |f_k|` against the mode-independent factor `E_q(beta T) / alpha0`.
    uniform_margin: f64,
    /// Growth ratio over `E_q(beta lambda_k T) / alpha0`.
    denominator_ratio: f64,
}

fn per_mode_margins(p: &InverseProblem, f: &CoeffVec) -> Result<Vec<ModeMargin>, CliError> {
    let params = *p.qparams();
    let beta = p.profile().beta();
    let alpha0 = p.shape().alpha0();
    let horizon = p.horizon();
    let uniform = (ln_big_e_q(beta * horizon, &params)? - alpha0.ln()).exp();
    p.spectrum()
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let factor = (ln_big_e_q(beta * lambda * horizon, &params)? - alpha0.ln()).exp();
            let data = p.eta().get(k).abs() + p.phi().get(k).abs();
            let bound = factor * data;
            let f_k = f.get(k);
            let ratio = if f_k == 0.0 { 0.0 } else { f_k.abs() / bound };
            Ok(ModeMargin {
                k: k + 1,
                f_k,
                bound,
                ratio,
                uniform_margin: uniform * data - f_k.abs(),
                denominator_ratio: crate::inverse::growth_ratio(p, k)? / factor,
            })
        })
        .collect()
}

/// Homogeneous single-mode solves across the configured `q` values, tabulating
/// `|u(T) - phi exp(-lambda int_0^T upsilon)|`; writes `sweep.csv`.
pub fn run_sweep(config: &RunConfig, out: &Path) -> Result<Vec<CheckResult>, CliError> {
    config::check_horizon(config)?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing field `sweep`".into()))?;
    if sweep.q_values.is_empty() {
        return Err(CliError::Config("`sweep.q_values` is empty".into()));
    }
    if !(sweep.lambda > 0.0 && sweep.lambda.is_finite() && sweep.phi.is_finite()) {
        return Err(CliError::Config("`sweep.lambda` must be positive and `sweep.phi` finite".into()));
    }
    let (upsilon, alpha, beta) = config::upsilon_for(config)?;
    let u = config.upsilon;
    let horizon = config.horizon;
    let exact = sweep.phi * (-sweep.lambda * (u.a * horizon + u.b * horizon * horizon / 2.0)).exp();
    let setups = sweep
        .q_values
        .iter()
        .map(|&q| {
            let params = config::params_for(q, config)?;
            let profile = CoefficientProfile::new(upsilon.clone(), alpha, beta, horizon, &params)
                .map_err(CliError::config)?;
            let spectrum = Spectrum::new(vec![sweep.lambda], sweep.lambda / 2.0).map_err(CliError::config)?;
            let lattice = QLattice::new(horizon, q, 1).map_err(CliError::config)?;
            DirectProblem::on_lattice(
                spectrum,
                profile,
                CoeffVec::from(vec![sweep.phi]),
                Source::Zero,
                lattice,
                params,
                config.d,
            )
            .map_err(CliError::config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (problem, &q) in setups.iter().zip(&sweep.q_values) {
        let sol = solve_direct(problem)?;
        let u_t = sol.trajectory.at_horizon().get(0);
        rows.push((q, u_t, (u_t - exact).abs()));
    }
    // the error column must shrink strictly from row to row
    let worst = rows
        .windows(2)
        .map(|w| w[1].2 - w[0].2)
        .fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![CheckResult::flag(
        "classical_limit_monotone",
        rows.windows(2).all(|w| w[1].2 < w[0].2),
        if worst.is_finite() { worst } else { 0.0 },
        0.0,
    )];
    create_out(out)?;
    let csv = csv_bytes(
        &["q", "u_T", "exact", "error"],
        rows.iter().map(|&(q, u_t, err)| vec![num(q), num(u_t), num(exact), num(err)]),
    );
    write_file(&out.join("sweep.csv"), &csv)?;
    Ok(checks)
}

/// Loads the config at `path` and runs `command`, writing artifacts under `out`.
/// Returns every check, passed or not; see [`failures`].
pub fn run(command: Command, path: &Path, out: &Path, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let config = RunConfig::load(path)?;
    config.check_command(command)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let checks = match command {
        Command::Sweep => run_sweep(&config, out)?,
        Command::Direct => run_direct(&Setup::new(config, &base)?, out)?,
        Command::Inverse => run_inverse(&Setup::new(config, &base)?, out)?,
        Command::Verify => run_verify(&Setup::new(config, &base)?, out, seed)?,
    };
    Ok(checks)
}

/// Writes a one-line summary per check to `w`.
pub fn summarize(checks: &[CheckResult], mut w: impl Write) -> std::io::Result<()> {
    for c in checks {
        writeln!(
            w,
            "{} {}: worst {:.3e}, threshold {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.threshold
        )?;
    }
    Ok(())
}
