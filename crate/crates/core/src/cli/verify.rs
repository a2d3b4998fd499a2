//! The `verify` command: every identity and bound, evaluated on the configured problem.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    apriori_ratio, create_out, merge, run_header, write_json, CheckResult, CliError, Command, Setup, ORACLE_TOL,
    RESIDUAL_TOL, ROUNDTRIP_TOL,
};
use crate::direct::{lattice_stepper_oracle, max_relative_gap, solve_direct};
use crate::growth::GrowthEvaluator;
use crate::inverse::{growth_ratio, solve_inverse};
use crate::operators::{apply_involution, eigenfunction, inverse_transform};
use crate::qlattice::{big_e_q, dq, e_q, jackson_integral, ln_big_e_q, LatticeFn, QParams};
use crate::spectral::{plancherel_norm, CoeffVec};

const IDENTITY_TOL: f64 = 1e-12;
const CALCULUS_TOL: f64 = 1e-10;
const POLYNOMIALS: usize = 10;
const EXP_POINTS: usize = 20;

/// Random polynomial of degree at most 5 with coefficients in `[-1, 1]`.
fn random_poly(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let degree = rng.random_range(0..=5);
    (0..=degree).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn dq_fn(c: &[f64], q: f64, x: f64) -> f64 {
    if x == 0.0 {
        // limit from above: the linear coefficient
        return c.get(1).copied().unwrap_or(0.0);
    }
    (eval_poly(c, x) - eval_poly(c, q * x)) / ((1.0 - q) * x)
}

fn calculus_checks(setup: &Setup, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>, CliError> {
    let params = setup.params;
    let q = params.q();
    let lattice = &setup.lattice;
    let b = setup.horizon;
    let mut product = 0.0f64;
    let mut fundamental = 0.0f64;
    let mut parts = 0.0f64;
    for _ in 0..POLYNOMIALS {
        let f = random_poly(rng);
        let g = random_poly(rng);
        let ff = LatticeFn::sample(lattice, |x| eval_poly(&f, x))?;
        let gg = LatticeFn::sample(lattice, |x| eval_poly(&g, x))?;
        let fg = LatticeFn::sample(lattice, |x| eval_poly(&f, x) * eval_poly(&g, x))?;
        for idx in lattice.interior() {
            let x = lattice.point(idx);
            let lhs = dq(&fg, idx)?;
            let rhs = eval_poly(&f, q * x) * dq(&gg, idx)? + dq(&ff, idx)? * eval_poly(&g, x);
            product = product.max((lhs - rhs).abs() / (1.0 + fg.values()[idx].abs()));
        }
        let integral = jackson_integral(|x| dq_fn(&f, q, x), b, &params)?;
        let exact = eval_poly(&f, b) - eval_poly(&f, 0.0);
        fundamental = fundamental.max((integral - exact).abs() / (1.0 + eval_poly(&f, b).abs()));

        let left = jackson_integral(|x| eval_poly(&f, x) * dq_fn(&g, q, x), b, &params)?;
        let right = jackson_integral(|x| eval_poly(&g, q * x) * dq_fn(&f, q, x), b, &params)?;
        let boundary = eval_poly(&f, b) * eval_poly(&g, b) - eval_poly(&f, 0.0) * eval_poly(&g, 0.0);
        parts = parts.max((left - boundary + right).abs());
    }

    let reach = 0.9 / (1.0 - q);
    let mut pair = 0.0f64;
    for i in 0..EXP_POINTS {
        let x = -reach + 2.0 * reach * i as f64 / (EXP_POINTS - 1) as f64;
        let v = e_q(x, &params)? * big_e_q(-x, &params)?;
        pair = pair.max((v - 1.0).abs());
    }
    Ok(vec![
        CheckResult::new("q_product_rule", product, IDENTITY_TOL),
        CheckResult::new("q_fundamental_theorem", fundamental, CALCULUS_TOL),
        CheckResult::new("q_integration_by_parts", parts, CALCULUS_TOL),
        CheckResult::new("q_exponential_pair", pair, CALCULUS_TOL),
    ])
}

fn growth_checks(setup: &Setup, ev: &GrowthEvaluator) -> Result<Vec<CheckResult>, CliError> {
    let lattice = &setup.lattice;
    let mut sandwich = 0.0f64;
    let mut identity = 0.0f64;
    let mut integral = 0.0f64;
    for &lambda in setup.spectrum.eigenvalues() {
        for idx in 0..=lattice.depth() {
            let t = lattice.point(idx);
            let (low, high) = ev.sandwich_margins(lambda, t)?;
            sandwich = sandwich.max(-low).max(-high);
            integral = integral.max(ev.integral_bounds(lambda, t)?.violation());
            if idx < lattice.depth() {
                identity = identity.max(ev.dq_gamma_inv_relative_residual(lambda, t)?);
            }
        }
    }
    Ok(vec![
        CheckResult::new("growth_sandwich", sandwich, IDENTITY_TOL),
        CheckResult::new("growth_identity", identity, IDENTITY_TOL),
        CheckResult::new("growth_integral_bounds", integral, IDENTITY_TOL),
    ])
}

fn solver_checks(setup: &Setup) -> Result<Vec<CheckResult>, CliError> {
    let problem = setup.direct_problem(setup.declared_profile()?)?;
    let sol = solve_direct(&problem)?;
    let stepper = lattice_stepper_oracle(&problem)?;
    let gap = max_relative_gap(&sol.trajectory, &stepper)?;
    let a = sol.diagnostics.apriori;
    let mut checks = vec![
        CheckResult::new("direct_ode_residual", sol.diagnostics.ode_residual, RESIDUAL_TOL),
        CheckResult::new("direct_oracle_agreement", gap, ORACLE_TOL),
        CheckResult::flag("apriori_estimate", a.holds, apriori_ratio(a.lhs, a.rhs, a.constant), 1.0),
    ];
    let config = setup.config();
    if config.eta.is_some() && config.g.is_some() {
        let inverse = setup.inverse_problem(setup.declared_profile()?)?;
        let isol = solve_inverse(&inverse)?;
        let stab = isol.diagnostics.stability;
        let params: QParams = *inverse.qparams();
        let beta = inverse.profile().beta();
        let alpha0 = inverse.shape().alpha0();
        let mut source = 0.0f64;
        let mut denominator = 0.0f64;
        for (k, &lambda) in inverse.spectrum().eigenvalues().iter().enumerate() {
            let factor = (ln_big_e_q(beta * lambda * inverse.horizon(), &params)? - alpha0.ln()).exp();
            let data = inverse.eta().get(k).abs() + inverse.phi().get(k).abs();
            let f = isol.f.get(k).abs();
            if f > 0.0 {
                source = source.max(f / (factor * data));
            }
            denominator = denominator.max(growth_ratio(&inverse, k)? / factor);
        }
        checks.extend([
            CheckResult::new("inverse_roundtrip", isol.diagnostics.roundtrip_error, ROUNDTRIP_TOL),
            CheckResult::new("inverse_ode_residual", isol.diagnostics.ode_residual, RESIDUAL_TOL),
            CheckResult::flag("source_bound", stab.source_bound_holds, source, 1.0),
            CheckResult::flag("denominator_bound", stab.denominator_bound_holds, denominator, 1.0),
            CheckResult::flag(
                "stability_estimate",
                stab.lhs <= stab.constant * stab.rhs * (1.0 + 1e-9),
                apriori_ratio(stab.lhs, stab.rhs, stab.constant),
                1.0,
            ),
        ]);
    }
    Ok(checks)
}

fn operator_checks(setup: &Setup, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>, CliError> {
    let Some(op) = &setup.operator else {
        return Ok(Vec::new());
    };
    let coeffs: Vec<f64> = (0..op.modes()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let c = CoeffVec::new(coeffs)?;
    let f = inverse_transform(&c, op)?;
    let spatial = f.l2_norm()?;
    let spectral = plancherel_norm(&c);
    let bridge = (spatial - spectral).abs() / spectral.max(1.0);

    let h = std::f64::consts::PI / op.grid() as f64;
    let mut eigen = 0.0f64;
    let mut n_max = 0usize;
    for (&l, &n) in op.spectrum().eigenvalues().iter().zip(op.spectrum().labels()) {
        let u = op.sample(|x| eigenfunction(n, x));
        let lu = apply_involution(&u, op.epsilon())?;
        let err = (1..op.grid())
            .map(|i| (lu.values()[i] - l * u.values()[i]).abs())
            .fold(0.0, f64::max);
        eigen = eigen.max(err / l);
        n_max = n_max.max(n);
    }
    // leading term of the central-difference error for sin(n x), relative to lambda_n
    let fd_bound = (n_max as f64 * h).powi(2) / 12.0;
    Ok(vec![
        CheckResult::new("plancherel_bridge", bridge, 1e-8),
        CheckResult::new("eigenpair_consistency", eigen, fd_bound),
    ])
}

/// Runs every applicable check; writes `verify_report.json`.
pub fn run_verify(setup: &Setup, out: &Path, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ev = GrowthEvaluator::new(setup.declared_profile()?, setup.params, setup.horizon).map_err(CliError::config)?;
    let mut checks = calculus_checks(setup, &mut rng)?;
    checks.extend(growth_checks(setup, &ev)?);
    checks.extend(solver_checks(setup)?);
    checks.extend(operator_checks(setup, &mut rng)?);
    create_out(out)?;
    let report = merge(
        run_header(setup, Command::Verify),
        json!({
            "seed": seed,
            "checks": checks,
            "passed": checks.iter().all(|c| c.passed),
        }),
    );
    write_json(&out.join("verify_report.json"), &report)?;
    Ok(checks)
}
