//! Inverse source problem: recover the amplitudes `f_k` of a separable source `g(t) f`
//! from the initial datum `phi` and the final datum `eta = u(T)`.

use std::sync::Arc;

use serde::Serialize;

use crate::direct::{ode_residual, DirectProblem, Source};
use crate::error::{check_finite, QHeatError, Result};
use crate::growth::{CoefficientProfile, GrowthEvaluator, TimeFn};
use crate::qlattice::{big_e_q, jackson_integral, ln_big_e_q, QLattice, QParams};
use crate::spectral::{sobolev_norm, trajectory_norms, CoeffTrajectory, CoeffVec, Spectrum};

/// Time shape `g` of the source, positive on the open interval, with
/// `alpha0 <= int_0^T g d_q s <= beta0`.
#[derive(Clone)]
pub struct SourceProfile {
    g: TimeFn,
    alpha0: f64,
    beta0: f64,
    integral: f64,
}

impl std::fmt::Debug for SourceProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceProfile")
            .field("alpha0", &self.alpha0)
            .field("beta0", &self.beta0)
            .field("integral", &self.integral)
            .finish_non_exhaustive()
    }
}

impl SourceProfile {
    /// Checks `g > 0` at the Jackson nodes `T q^j`, `1 <= j <= n_terms`, `g(T) >= 0`,
    /// and the bounds on the Jackson integral of `g`.
    pub fn new(g: TimeFn, alpha0: f64, beta0: f64, horizon: f64, params: &QParams) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 <= beta0 && beta0.is_finite()) {
            return Err(QHeatError::SourceShape(format!(
                "need 0 < alpha0 <= beta0 < inf, got alpha0 = {alpha0}, beta0 = {beta0}"
            )));
        }
        let end = g(horizon);
        if !(end >= 0.0 && end.is_finite()) {
            return Err(QHeatError::SourceShape(format!("g(T) = {end} at T = {horizon}")));
        }
        let mut s = horizon;
        for _ in 0..params.n_terms() {
            s *= params.q();
            let v = g(s);
            if !(v > 0.0 && v.is_finite()) {
                return Err(QHeatError::SourceShape(format!("g({s}) = {v} is not positive")));
            }
        }
        let integral = jackson_integral(|s| g(s), horizon, params)?;
        if integral < alpha0 || integral > beta0 {
            return Err(QHeatError::SourceShape(format!(
                "int_0^T g = {integral} lies outside [{alpha0}, {beta0}]"
            )));
        }
        Ok(Self {
            g,
            alpha0,
            beta0,
            integral,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.g)(t)
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// Jackson integral of `g` over `[0, T]`.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn function(&self) -> &TimeFn {
        &self.g
    }
}

/// Data of the inverse problem, in coefficient space.
#[derive(Debug)]
pub struct InverseProblem {
    spectrum: Spectrum,
    phi: CoeffVec,
    eta: CoeffVec,
    shape: SourceProfile,
    d: f64,
    lattice: QLattice,
    growth: GrowthEvaluator,
}

impl InverseProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spectrum: Spectrum,
        profile: CoefficientProfile,
        phi: CoeffVec,
        eta: CoeffVec,
        shape: SourceProfile,
        horizon: f64,
        qparams: QParams,
        d: f64,
    ) -> Result<Self> {
        let lattice = QLattice::with_default_depth(horizon, qparams.q())?;
        Self::on_lattice(spectrum, profile, phi, eta, shape, lattice, qparams, d)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn on_lattice(
        spectrum: Spectrum,
        profile: CoefficientProfile,
        phi: CoeffVec,
        eta: CoeffVec,
        shape: SourceProfile,
        lattice: QLattice,
        qparams: QParams,
        d: f64,
    ) -> Result<Self> {
        phi.check_len(&spectrum)?;
        eta.check_len(&spectrum)?;
        if lattice.q() != qparams.q() {
            return Err(QHeatError::InvalidParameter {
                name: "lattice",
                reason: format!("lattice q = {} differs from q = {}", lattice.q(), qparams.q()),
            });
        }
        if !d.is_finite() {
            return Err(QHeatError::InvalidParameter {
                name: "d",
                reason: format!("Sobolev order must be finite, got {d}"),
            });
        }
        check_finite(sobolev_norm(&phi, d + 2.0, &spectrum)?, "||phi||_{H^{d+2}}", 0.0)?;
        check_finite(sobolev_norm(&eta, d + 2.0, &spectrum)?, "||eta||_{H^{d+2}}", lattice.scale())?;
        let growth = GrowthEvaluator::new(profile, qparams, lattice.scale())?;
        Ok(Self {
            spectrum,
            phi,
            eta,
            shape,
            d,
            lattice,
            growth,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn phi(&self) -> &CoeffVec {
        &self.phi
    }

    pub fn eta(&self) -> &CoeffVec {
        &self.eta
    }

    pub fn shape(&self) -> &SourceProfile {
        &self.shape
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        self.lattice.scale()
    }

    pub fn lattice(&self) -> &QLattice {
        &self.lattice
    }

    pub fn growth(&self) -> &GrowthEvaluator {
        &self.growth
    }

    pub fn profile(&self) -> &CoefficientProfile {
        self.growth.profile()
    }

    pub fn qparams(&self) -> &QParams {
        self.growth.params()
    }

    /// The direct problem with source `g(t) f_k` and this problem's `phi`.
    pub fn as_direct(&self, f: &CoeffVec) -> Result<DirectProblem> {
        f.check_len(&self.spectrum)?;
        let g = self.shape.function().clone();
        DirectProblem::on_lattice(
            self.spectrum.clone(),
            self.profile().clone(),
            self.phi.clone(),
            Source::separable(f.as_slice().to_vec(), g),
            self.lattice.clone(),
            *self.qparams(),
            self.d,
        )
    }

    /// `sup g` over every time sampled by the solution formula.
    fn shape_sup(&self) -> f64 {
        let q = self.lattice.q();
        let n = self.lattice.depth() + self.qparams().n_terms() + 1;
        let mut t = self.horizon();
        let mut sup: f64 = 0.0;
        for _ in 0..=n {
            sup = sup.max(self.shape.eval(t));
            t *= q;
        }
        sup
    }
}

/// `gamma(lambda, T) * int_0^T gamma_inv(lambda, q s) g(s) d_q s`, the denominator
/// after dividing through by `gamma_inv(lambda, T)`.
fn damped_denominator(p: &InverseProblem, k: usize) -> Result<f64> {
    let lambda = p.spectrum().eigenvalues()[k];
    let horizon = p.horizon();
    let ev = p.growth();
    let value = if ev.needs_log_space(lambda, horizon)? {
        ev.damped_weighted_integral(lambda, horizon, |s| p.shape().eval(s))?
    } else {
        ev.weighted_integral(lambda, horizon, |s| p.shape().eval(s))? * ev.gamma(lambda, horizon)?
    };
    if !(value > p.qparams().tol() * ev.gamma(lambda, horizon)?) || !value.is_finite() {
        return Err(QHeatError::DegenerateDenominator { mode: k + 1, value });
    }
    Ok(value)
}

/// `gamma_inv(lambda_k, T) / int_0^T gamma_inv(lambda_k, q s) g(s) d_q s` for mode `k` (0-based).
pub fn growth_ratio(p: &InverseProblem, k: usize) -> Result<f64> {
    Ok(1.0 / damped_denominator(p, k)?)
}

/// `f_k = (gamma_inv(lambda_k, T) eta_k - phi_k) / int_0^T gamma_inv(lambda_k, q s) g(s) d_q s`,
/// evaluated as `(eta_k - gamma(lambda_k, T) phi_k) / (gamma(lambda_k, T) int ...)`.
pub fn recover_source(p: &InverseProblem) -> Result<CoeffVec> {
    let horizon = p.horizon();
    let f = p
        .spectrum()
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let phi_k = p.phi().get(k);
            let eta_k = p.eta().get(k);
            let ev = p.growth();
            let denom = damped_denominator(p, k)?;
            let value = if ev.needs_log_space(lambda, horizon)? {
                (eta_k - ev.gamma(lambda, horizon)? * phi_k) / denom
            } else {
                let big = ev.gamma_inv(lambda, horizon)?;
                (big * eta_k - phi_k) / (denom * big)
            };
            check_finite(value, "recovered source", horizon)
        })
        .collect::<Result<Vec<_>>>()?;
    CoeffVec::new(f)
}

/// `u_k(t) = gamma(lambda_k, t) (phi_k + f_k int_0^t gamma_inv(lambda_k, q s) g(s) d_q s)`
/// on the problem's lattice.
pub fn reconstruct_state(p: &InverseProblem, f: &CoeffVec) -> Result<CoeffTrajectory> {
    f.check_len(p.spectrum())?;
    let lattice = p.lattice();
    let origin = lattice.origin_index();
    let modes = p
        .spectrum()
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            lattice
                .points()
                .iter()
                .enumerate()
                .map(|(idx, &t)| {
                    if idx == origin {
                        Ok(p.phi().get(k))
                    } else {
                        p.growth()
                            .propagate(lambda, t, p.phi().get(k), f.get(k), |s| p.shape().eval(s))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    CoeffTrajectory::from_modes(lattice.clone(), &modes)
}

/// Outcome of the stability check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub holds: bool,
    /// `sup_t ||u(t)||^2_{H^{d+2}} + sup_t ||D_q u(t)||^2_{H^d}`.
    pub lhs: f64,
    /// `||phi||^2_{H^{d+2}} + ||eta||^2_{H^{d+2}}`.
    pub rhs: f64,
    pub constant: f64,
    /// Whether every `|f_k| <= (E_q(beta lambda_k T) / alpha0) (|eta_k| + |phi_k|)`.
    pub source_bound_holds: bool,
    /// `max_k (|f_k| - bound_k)`; nonpositive when the per-mode bound holds.
    pub source_margin: f64,
    /// Same margin against the mode-independent factor `E_q(beta T) / alpha0`.
    /// Informational: that factor undercounts the growth of high modes.
    pub uniform_source_margin: f64,
    /// Whether every `growth_ratio(k) <= E_q(beta lambda_k T) / alpha0`.
    pub denominator_bound_holds: bool,
    /// First 1-based mode violating a per-mode bound.
    pub failed_mode: Option<usize>,
}

/// Checks the per-mode source bounds and the energy estimate
/// `LHS <= C (||phi||^2 + ||eta||^2)` with
/// `C = 2 (C_u^2 + (beta C_u + K_d)^2)`, `C_u = 1 + max_k R_k min{beta0, g_sup/(lambda_k alpha)}`,
/// `K_d = g_sup max_k R_k / lambda_k` and `R_k` the growth ratio of mode `k`.
pub fn stability_check(sol: &InverseSolution, p: &InverseProblem) -> Result<StabilityReport> {
    let params = *p.qparams();
    let tol = params.tol();
    let horizon = p.horizon();
    let beta = p.profile().beta();
    let alpha = p.profile().alpha();
    let alpha0 = p.shape().alpha0();
    let g_sup = p.shape_sup();

    let uniform = match big_e_q(beta * horizon, &params) {
        Ok(e) => e / alpha0,
        Err(_) => f64::INFINITY,
    };
    let mut source_margin = f64::NEG_INFINITY;
    let mut uniform_source_margin = f64::NEG_INFINITY;
    let mut source_bound_holds = true;
    let mut denominator_bound_holds = true;
    let mut failed_mode = None;
    let mut max_state = 0.0f64;
    let mut max_rate = 0.0f64;
    for (k, &lambda) in p.spectrum().eigenvalues().iter().enumerate() {
        let ratio = growth_ratio(p, k)?;
        let ln_bound = ln_big_e_q(beta * lambda * horizon, &params)? - alpha0.ln();
        let factor = ln_bound.exp();
        let data = p.eta().get(k).abs() + p.phi().get(k).abs();
        let f_abs = sol.f.get(k).abs();
        let margin = f_abs - factor * data;
        source_margin = source_margin.max(margin);
        uniform_source_margin = uniform_source_margin.max(f_abs - uniform * data);
        let mode_ok = margin <= tol * (1.0 + factor * data);
        let ratio_ok = ratio <= factor * (1.0 + tol);
        if !mode_ok {
            source_bound_holds = false;
        }
        if !ratio_ok {
            denominator_bound_holds = false;
        }
        if (!mode_ok || !ratio_ok) && failed_mode.is_none() {
            failed_mode = Some(k + 1);
        }
        let damping = p.shape().beta0().min(g_sup / (lambda * alpha));
        max_state = max_state.max(ratio * damping);
        max_rate = max_rate.max(g_sup * ratio / lambda);
    }

    let d = p.d();
    let spectrum = p.spectrum();
    let state = trajectory_norms(&sol.trajectory, d + 2.0, spectrum)?.sup_norm;
    let rate = trajectory_norms(&sol.trajectory, d, spectrum)?.sup_dq_norm;
    let lhs = check_finite(state * state + rate * rate, "stability LHS", 0.0)?;
    let phi = sobolev_norm(p.phi(), d + 2.0, spectrum)?;
    let eta = sobolev_norm(p.eta(), d + 2.0, spectrum)?;
    let rhs = phi * phi + eta * eta;
    let c_u = 1.0 + max_state;
    let constant = 2.0 * (c_u * c_u + (beta * c_u + max_rate).powi(2));
    let energy_ok = lhs <= constant * rhs * (1.0 + 1e-9);
    Ok(StabilityReport {
        holds: energy_ok && source_bound_holds && denominator_bound_holds,
        lhs,
        rhs,
        constant,
        source_bound_holds,
        source_margin,
        uniform_source_margin,
        denominator_bound_holds,
        failed_mode,
    })
}

/// Diagnostics attached to an inverse solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseDiagnostics {
    /// `max_k |u_k(T) - eta_k| / (1 + |eta_k|)`.
    pub roundtrip_error: f64,
    pub ode_residual: f64,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseSolution {
    pub f: CoeffVec,
    pub trajectory: CoeffTrajectory,
    pub diagnostics: InverseDiagnostics,
}

/// Recovers `f`, reconstructs `u` and evaluates the diagnostics.
pub fn solve_inverse(p: &InverseProblem) -> Result<InverseSolution> {
    let f = recover_source(p)?;
    let trajectory = reconstruct_state(p, &f)?;
    let roundtrip_error = trajectory
        .at_horizon()
        .as_slice()
        .iter()
        .zip(p.eta().as_slice())
        .map(|(u, e)| (u - e).abs() / (1.0 + e.abs()))
        .fold(0.0, f64::max);
    let ode = ode_residual(&trajectory, &p.as_direct(&f)?)?;
    let mut sol = InverseSolution {
        f,
        trajectory,
        diagnostics: InverseDiagnostics {
            roundtrip_error,
            ode_residual: ode,
            stability: StabilityReport {
                holds: false,
                lhs: 0.0,
                rhs: 0.0,
                constant: 0.0,
                source_bound_holds: false,
                source_margin: 0.0,
                uniform_source_margin: 0.0,
                denominator_bound_holds: false,
                failed_mode: None,
            },
        },
    };
    sol.diagnostics.stability = stability_check(&sol, p)?;
    Ok(sol)
}

/// Convenience constructor for `g(t) = a + b t`.
pub fn affine_shape(a: f64, b: f64) -> TimeFn {
    Arc::new(move |t| a + b * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::solve_direct;

    fn unit_problem(lambdas: &[f64], phi: Vec<f64>, eta: Vec<f64>, q: f64) -> InverseProblem {
        let params = QParams::new(q).unwrap();
        let spectrum = Spectrum::new(lambdas.to_vec(), lambdas[0] / 2.0).unwrap();
        let profile = CoefficientProfile::constant(1.0).unwrap();
        let shape = SourceProfile::new(Arc::new(|_| 1.0), 0.5, 2.0, 1.0, &params).unwrap();
        InverseProblem::new(spectrum, profile, phi.into(), eta.into(), shape, 1.0, params, 0.0).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_source() {
        let p = unit_problem(&[1.0, 4.0], vec![0.0, 0.0], vec![0.0, 0.0], 0.5);
        let sol = solve_inverse(&p).unwrap();
        assert!(sol.f.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(sol.diagnostics.stability.lhs, 0.0);
        assert!(sol.diagnostics.stability.holds);
    }

    #[test]
    fn single_mode_matches_closed_form() {
        let lambda = 3.0;
        let (phi, eta) = (0.7, 0.2);
        let p = unit_problem(&[lambda], vec![phi], vec![eta], 0.5);
        let f = recover_source(&p).unwrap().get(0);
        let e = big_e_q(lambda, p.qparams()).unwrap();
        let expected = (e * eta - phi) * lambda / (e - 1.0);
        assert!((f - expected).abs() <= 1e-12 * expected.abs(), "{f} {expected}");
        let sol = solve_inverse(&p).unwrap();
        assert!(sol.diagnostics.roundtrip_error < 1e-12);
        assert!(sol.diagnostics.stability.holds);
    }

    #[test]
    fn origin_is_phi_exactly() {
        let p = unit_problem(&[1.0, 2.0], vec![0.3, -0.1], vec![0.5, 0.25], 0.6);
        let sol = solve_inverse(&p).unwrap();
        assert_eq!(sol.trajectory.at_origin().as_slice(), p.phi().as_slice());
    }

    #[test]
    fn round_trip_through_direct_solver() {
        let params = QParams::new(0.5).unwrap();
        let lambdas: Vec<f64> = (1..=6).map(|n| (n * n) as f64).collect();
        let spectrum = Spectrum::new(lambdas, 0.5).unwrap();
        let upsilon: TimeFn = Arc::new(|t| 1.0 + t / 2.0);
        let profile = CoefficientProfile::new(upsilon, 1.0, 1.5, 1.0, &params).unwrap();
        let g = affine_shape(1.0, 1.0);
        let shape = SourceProfile::new(g.clone(), 0.5, 3.0, 1.0, &params).unwrap();
        let f_star = vec![1.0, -0.5, 0.25, 2.0, 0.0, -1.0];
        let phi: Vec<f64> = (0..6).map(|k| 0.5 / (k as f64 + 1.0)).collect();
        let direct = DirectProblem::new(
            spectrum.clone(),
            profile.clone(),
            phi.clone().into(),
            Source::separable(f_star.clone(), g),
            1.0,
            params,
            0.0,
        )
        .unwrap();
        let forward = solve_direct(&direct).unwrap();
        let eta = forward.trajectory.at_horizon().clone();
        let p = InverseProblem::new(spectrum, profile, phi.into(), eta, shape, 1.0, params, 0.0).unwrap();
        let sol = solve_inverse(&p).unwrap();
        for (got, want) in sol.f.as_slice().iter().zip(&f_star) {
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} {want}");
        }
        let gap = crate::direct::max_relative_gap(&sol.trajectory, &forward.trajectory).unwrap();
        assert!(gap <= 1e-8);
        assert!(sol.diagnostics.ode_residual <= 1e-10);
        assert!(sol.diagnostics.stability.holds);
    }

    #[test]
    fn recovery_is_linear_in_data() {
        let a = unit_problem(&[1.0, 4.0], vec![1.0, 0.5], vec![0.2, 0.1], 0.5);
        let b = unit_problem(&[1.0, 4.0], vec![-0.3, 2.0], vec![0.7, -0.4], 0.5);
        let sum = unit_problem(&[1.0, 4.0], vec![0.7, 2.5], vec![0.9, -0.3], 0.5);
        let fa = recover_source(&a).unwrap();
        let fb = recover_source(&b).unwrap();
        let fs = recover_source(&sum).unwrap();
        for k in 0..2 {
            let expect = fa.get(k) + fb.get(k);
            assert!((fs.get(k) - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn uniform_source_factor_fails_for_high_modes() {
        // E_q(beta T)/alpha0 ignores lambda_k, so a high mode with eta != 0 exceeds it
        let p = unit_problem(&[1.0, 400.0], vec![0.0, 0.0], vec![0.0, 1.0], 0.5);
        let sol = solve_inverse(&p).unwrap();
        assert!(sol.diagnostics.stability.uniform_source_margin > 0.0);
        assert!(sol.diagnostics.stability.source_bound_holds);
        assert!(sol.diagnostics.stability.holds);
    }

    #[test]
    fn large_modes_use_log_space() {
        let lambdas: Vec<f64> = vec![1.0, 1e3, 1e5];
        let p = unit_problem(&lambdas, vec![1.0, 1.0, 1.0], vec![0.1, 0.1, 0.1], 0.99);
        assert!(p.growth().needs_log_space(1e5, 1.0).unwrap());
        let sol = solve_inverse(&p).unwrap();
        assert!(sol.f.as_slice().iter().all(|x| x.is_finite()));
        assert!(sol.diagnostics.roundtrip_error < 1e-8, "{}", sol.diagnostics.roundtrip_error);
    }

    #[test]
    fn shape_validation() {
        let params = QParams::new(0.5).unwrap();
        assert!(SourceProfile::new(Arc::new(|t| t * (1.0 - t)), 0.01, 1.0, 1.0, &params).is_ok());
        assert!(matches!(
            SourceProfile::new(Arc::new(|t| t - 0.25), 0.01, 1.0, 1.0, &params),
            Err(QHeatError::SourceShape(_))
        ));
        assert!(matches!(
            SourceProfile::new(Arc::new(|_| 1.0), 2.0, 3.0, 1.0, &params),
            Err(QHeatError::SourceShape(_))
        ));
    }

    #[test]
    fn degenerate_denominator_names_mode() {
        let params = QParams::new(0.5).unwrap();
        let spectrum = Spectrum::new(vec![1.0, 2.0], 0.5).unwrap();
        let profile = CoefficientProfile::constant(1.0).unwrap();
        let shape = SourceProfile::new(Arc::new(|_| 1e-14), 1e-15, 1.0, 1.0, &params).unwrap();
        let p = InverseProblem::new(
            spectrum,
            profile,
            vec![1.0, 1.0].into(),
            vec![0.5, 0.5].into(),
            shape,
            1.0,
            params,
            0.0,
        )
        .unwrap();
        assert!(matches!(
            recover_source(&p),
            Err(QHeatError::DegenerateDenominator { mode: 1, .. })
        ));
    }
}
