//! Direct Cauchy problem `D_q u + upsilon(t) L u = f`, `u(0) = phi`, solved mode by mode.
//!
//! The main path is the closed form
//! `u_k(t) = gamma(lambda_k, t) [phi_k + int_0^t gamma_inv(lambda_k, q s) f_k(s) d_q s]`.
//! [`lattice_stepper_oracle`] solves the same lattice equations by forward recursion
//! without touching `gamma`, and serves as the independent check.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_finite, QHeatError, Result};
use crate::growth::{CoefficientProfile, GrowthEvaluator, TimeFn};
use crate::qlattice::{QLattice, QParams};
use crate::spectral::{sobolev_norm, tail_proxy, trajectory_norms, CoeffTrajectory, CoeffVec, Spectrum};

/// Per-mode source `f_k(t)` with 0-based mode index `k`.
pub type ModeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Stepper seeding point: `t_S lambda_K beta` drops below this.
const SEED_SCALE: f64 = 1e-17;

/// Source term in coefficient space.
#[derive(Clone)]
pub enum Source {
    Zero,
    Modes(ModeFn),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => f.write_str("Source::Zero"),
            Source::Modes(_) => f.write_str("Source::Modes(..)"),
        }
    }
}

impl Source {
    /// `f_k(t) = amplitudes[k] * shape(t)`.
    pub fn separable(amplitudes: Vec<f64>, shape: TimeFn) -> Self {
        Source::Modes(Arc::new(move |k, t| amplitudes[k] * shape(t)))
    }

    pub fn eval(&self, k: usize, t: f64) -> f64 {
        match self {
            Source::Zero => 0.0,
            Source::Modes(f) => f(k, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

/// Data of the direct problem, in coefficient space.
#[derive(Debug)]
pub struct DirectProblem {
    spectrum: Spectrum,
    phi: CoeffVec,
    source: Source,
    d: f64,
    lattice: QLattice,
    growth: GrowthEvaluator,
}

impl DirectProblem {
    /// Uses the default output lattice [`QLattice::with_default_depth`].
    pub fn new(
        spectrum: Spectrum,
        profile: CoefficientProfile,
        phi: CoeffVec,
        source: Source,
        horizon: f64,
        qparams: QParams,
        d: f64,
    ) -> Result<Self> {
        let lattice = QLattice::with_default_depth(horizon, qparams.q())?;
        Self::on_lattice(spectrum, profile, phi, source, lattice, qparams, d)
    }

    pub fn on_lattice(
        spectrum: Spectrum,
        profile: CoefficientProfile,
        phi: CoeffVec,
        source: Source,
        lattice: QLattice,
        qparams: QParams,
        d: f64,
    ) -> Result<Self> {
        phi.check_len(&spectrum)?;
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
        let growth = GrowthEvaluator::new(profile, qparams, lattice.scale())?;
        let problem = Self {
            spectrum,
            phi,
            source,
            d,
            lattice,
            growth,
        };
        problem.source_sup_sq()?;
        Ok(problem)
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn phi(&self) -> &CoeffVec {
        &self.phi
    }

    pub fn source(&self) -> &Source {
        &self.source
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

    /// Every time at which the solution formula samples the source:
    /// `T q^j` for `j <= M + n_terms + 1`.
    fn sample_times(&self) -> impl Iterator<Item = f64> {
        let q = self.lattice.q();
        let n = self.lattice.depth() + self.qparams().n_terms() + 1;
        (0..=n).scan(self.horizon(), move |t, _| {
            let cur = *t;
            *t *= q;
            Some(cur)
        })
    }

    /// `sum_k sup_s lambda_k^{d+2} |f_k(s)|^2` over the sampled times.
    pub fn source_sup_sq(&self) -> Result<f64> {
        if self.source.is_zero() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (k, &l) in self.spectrum.eigenvalues().iter().enumerate() {
            let mut sup: f64 = 0.0;
            for t in self.sample_times() {
                let f = check_finite(self.source.eval(k, t), "source", t)?;
                sup = sup.max(f.abs());
            }
            total += l.powf(self.d + 2.0) * sup * sup;
        }
        check_finite(total, "source norm", 0.0)
    }
}

/// Diagnostics attached to a direct solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectDiagnostics {
    pub ode_residual: f64,
    pub apriori: AprioriReport,
    /// Bound on the discarded Jackson-sum tail, `T q^{n+1} max|f|`.
    pub jackson_tail: f64,
    /// Relative bound on the discarded product tail, `lambda_K beta T q^{n+1}`.
    pub product_tail: f64,
    /// Last-mode contribution `lambda_K^{(d+2)/2} |phi_K|`.
    pub mode_tail: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution {
    pub trajectory: CoeffTrajectory,
    pub diagnostics: DirectDiagnostics,
}

fn closed_form_modes(p: &DirectProblem) -> Result<Vec<Vec<f64>>> {
    let lattice = p.lattice();
    let origin = lattice.origin_index();
    p.spectrum()
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let phi_k = p.phi().get(k);
            let amplitude = if p.source().is_zero() { 0.0 } else { 1.0 };
            lattice
                .points()
                .iter()
                .enumerate()
                .map(|(idx, &t)| {
                    if idx == origin {
                        Ok(phi_k)
                    } else {
                        p.growth()
                            .propagate(lambda, t, phi_k, amplitude, |s| p.source().eval(k, s))
                    }
                })
                .collect()
        })
        .collect()
}

/// Closed-form solution on the problem's lattice, with diagnostics.
pub fn solve_direct(p: &DirectProblem) -> Result<DirectSolution> {
    let modes = closed_form_modes(p)?;
    let trajectory = CoeffTrajectory::from_modes(p.lattice().clone(), &modes)?;
    let ode_residual = ode_residual(&trajectory, p)?;
    let apriori = apriori_bound(&trajectory, p)?;
    let q = p.qparams().q();
    let tail_factor = p.horizon() * q.powi(p.qparams().n_terms() as i32 + 1);
    let mut fmax: f64 = 0.0;
    if !p.source().is_zero() {
        for k in 0..p.spectrum().len() {
            for t in p.sample_times() {
                fmax = fmax.max(p.source().eval(k, t).abs());
            }
        }
    }
    let mode_tail = *tail_proxy(p.phi(), p.d() + 2.0, p.spectrum(), 1)?
        .last()
        .expect("spectrum is never empty");
    Ok(DirectSolution {
        trajectory,
        diagnostics: DirectDiagnostics {
            ode_residual,
            apriori,
            jackson_tail: tail_factor * fmax,
            product_tail: tail_factor * p.spectrum().max() * p.profile().beta(),
            mode_tail,
        },
    })
}

/// Forward recursion `u(t) = (u(q t) + (1-q) t f(t)) / (1 + (1-q) t lambda upsilon(t))`,
/// seeded with `phi_k` at a point deep enough that `t lambda_K beta < 1e-17`.
pub fn lattice_stepper_oracle(p: &DirectProblem) -> Result<CoeffTrajectory> {
    let lattice = p.lattice();
    let q = lattice.q();
    let depth = lattice.depth();
    let horizon = p.horizon();
    let reach = SEED_SCALE / (horizon * p.spectrum().max() * p.profile().beta());
    let seed = ((reach.ln() / q.ln()).ceil().max(0.0) as usize).max(depth + 1);

    let mut times = Vec::with_capacity(seed + 1);
    let mut t = horizon;
    for _ in 0..=seed {
        times.push(t);
        t *= q;
    }

    let modes = p
        .spectrum()
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let phi_k = p.phi().get(k);
            let mut values = vec![0.0; lattice.len()];
            let mut u = phi_k;
            for j in (0..seed).rev() {
                let t = times[j];
                let step = (1.0 - q) * t;
                let f = p.source().eval(k, t);
                let v = p.profile().eval(t);
                u = (u + step * f) / (1.0 + step * lambda * v);
                if j <= depth {
                    values[j] = u;
                }
            }
            values[lattice.origin_index()] = phi_k;
            check_finite(u, "stepper", horizon)?;
            Ok(values)
        })
        .collect::<Result<Vec<_>>>()?;
    CoeffTrajectory::from_modes(lattice.clone(), &modes)
}

/// `max_{k, t interior} |D_q u_k(t) + lambda_k upsilon(t) u_k(t) - f_k(t)| / (1 + |f_k(t)|)`.
pub fn ode_residual(tr: &CoeffTrajectory, p: &DirectProblem) -> Result<f64> {
    if tr.modes() != p.spectrum().len() {
        return Err(QHeatError::DimensionMismatch {
            expected: p.spectrum().len(),
            found: tr.modes(),
        });
    }
    let lattice = tr.lattice();
    let mut worst: f64 = 0.0;
    for idx in lattice.interior() {
        let t = lattice.point(idx);
        let rate = tr.dq_at(idx)?;
        let v = p.profile().eval(t);
        for (k, &lambda) in p.spectrum().eigenvalues().iter().enumerate() {
            let f = p.source().eval(k, t);
            let r = (rate.get(k) + lambda * v * tr.at(idx).get(k) - f).abs() / (1.0 + f.abs());
            worst = worst.max(r);
        }
    }
    check_finite(worst, "ODE residual", 0.0)
}

/// Outcome of the a-priori estimate check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriReport {
    /// `sup_t ||u(t)||^2_{H^{d+2}} + sup_t ||D_q u(t)||^2_{H^d}`.
    pub lhs: f64,
    /// `||phi||^2_{H^{d+2}} + sum_k sup_s lambda_k^{d+2} |f_k(s)|^2`.
    pub rhs: f64,
    /// `2 A^2 + 2 B^2 (A + 1)^2` with `A = max{1, T}`, `B = max{beta, 1/lambda0}`.
    pub constant: f64,
    pub holds: bool,
}

fn apriori_bound(tr: &CoeffTrajectory, p: &DirectProblem) -> Result<AprioriReport> {
    let d = p.d();
    let spectrum = p.spectrum();
    let state = trajectory_norms(tr, d + 2.0, spectrum)?.sup_norm;
    let rate = trajectory_norms(tr, d, spectrum)?.sup_dq_norm;
    let lhs = check_finite(state * state + rate * rate, "a-priori LHS", 0.0)?;
    let phi = sobolev_norm(p.phi(), d + 2.0, spectrum)?;
    let rhs = phi * phi + p.source_sup_sq()?;

    // per mode: lambda^{d/2+1}|u_k| <= A (a_k + b_k), and
    // lambda^{d/2}|D_q u_k| <= beta lambda^{d/2+1}|u_k| + lambda0^{-1} b_k <= B (A + 1)(a_k + b_k)
    let a = p.horizon().max(1.0);
    let b = p.profile().beta().max(1.0 / spectrum.lambda0());
    let constant = 2.0 * a * a + 2.0 * b * b * (a + 1.0).powi(2);
    let holds = lhs <= constant * rhs * (1.0 + 1e-9);
    Ok(AprioriReport {
        lhs,
        rhs,
        constant,
        holds,
    })
}

/// Evaluates the a-priori estimate on a computed solution.
pub fn apriori_check(sol: &DirectSolution, p: &DirectProblem) -> Result<AprioriReport> {
    apriori_bound(&sol.trajectory, p)
}

/// Largest entrywise gap between two trajectories, relative to each mode's
/// sup-in-time magnitude.
pub fn max_relative_gap(a: &CoeffTrajectory, b: &CoeffTrajectory) -> Result<f64> {
    if a.modes() != b.modes() || a.lattice().len() != b.lattice().len() {
        return Err(QHeatError::DimensionMismatch {
            expected: a.modes(),
            found: b.modes(),
        });
    }
    let mut worst: f64 = 0.0;
    for k in 0..a.modes() {
        let scale = a
            .states()
            .iter()
            .zip(b.states())
            .map(|(x, y)| x.get(k).abs().max(y.get(k).abs()))
            .fold(0.0, f64::max);
        for (x, y) in a.states().iter().zip(b.states()) {
            let gap = (x.get(k) - y.get(k)).abs();
            worst = worst.max(if scale > 0.0 { gap / scale } else { gap });
        }
    }
    Ok(worst)
}
