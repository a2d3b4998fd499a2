//! The q-analogue integrating factor `gamma(lambda, t)` and its Jackson-integral companions.
//!
//! `gamma_inv(lambda, t) = prod_{i=0}^{n} (1 + (1-q) lambda t q^i upsilon(q^i t))` is the
//! stored primitive; every factor is at least 1, so the product never cancels.
//! `gamma` is its reciprocal. Because the time argument of `upsilon` is not scaled by
//! `lambda`, the identity `D_q gamma_inv(lambda, t) = lambda upsilon(t) gamma_inv(lambda, q t)`
//! holds exactly for any profile, up to the truncation tail.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{check_finite, QHeatError, Result};
use crate::qlattice::{ln_big_e_q, try_jackson_integral, QParams};

/// Shared scalar time function.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Above this magnitude of `gamma_inv` the solvers switch to log-ratio evaluation.
pub const LOG_SPACE_THRESHOLD: f64 = 1e100;

/// Extra lattice levels sampled below the truncation depth when validating a profile.
const VALIDATION_MARGIN: usize = 64;

/// The diffusion coefficient `upsilon(t)` with its declared bounds `alpha <= upsilon <= beta`.
#[derive(Clone)]
pub struct CoefficientProfile {
    upsilon: TimeFn,
    alpha: f64,
    beta: f64,
}

impl fmt::Debug for CoefficientProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientProfile")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl CoefficientProfile {
    /// Builds a profile and checks `0 < alpha <= upsilon(t) <= beta` on every lattice
    /// point `T q^m` that the growth products and Jackson sums can reach, and at `t = 0`.
    pub fn new(upsilon: TimeFn, alpha: f64, beta: f64, horizon: f64, params: &QParams) -> Result<Self> {
        let profile = Self::declared(upsilon, alpha, beta)?;
        profile.validate(horizon, params)?;
        Ok(profile)
    }

    /// Builds a profile trusting the declared bounds; only `0 < alpha <= beta` is checked.
    pub fn declared(upsilon: TimeFn, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
            return Err(QHeatError::InvalidParameter {
                name: "upsilon bounds",
                reason: format!("need 0 < alpha <= beta < inf, got alpha = {alpha}, beta = {beta}"),
            });
        }
        Ok(Self { upsilon, alpha, beta })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::declared(Arc::new(move |_| a), a, a)
    }

    /// Sampled check of the declared bounds; returns the first violation.
    pub fn validate(&self, horizon: f64, params: &QParams) -> Result<()> {
        for t in validation_points(horizon, params) {
            let v = check_finite((self.upsilon)(t), "upsilon", t)?;
            if !(v >= self.alpha && v <= self.beta) {
                return Err(QHeatError::ProfileBound {
                    t,
                    value: v,
                    alpha: self.alpha,
                    beta: self.beta,
                });
            }
        }
        Ok(())
    }

    /// Worst violation of the declared bounds over the validation points (0 when none).
    pub fn bound_violation(&self, horizon: f64, params: &QParams) -> f64 {
        validation_points(horizon, params)
            .map(|t| {
                let v = (self.upsilon)(t);
                if v.is_finite() {
                    (self.alpha - v).max(v - self.beta).max(0.0)
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.upsilon)(t)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn function(&self) -> &TimeFn {
        &self.upsilon
    }
}

fn validation_points(horizon: f64, params: &QParams) -> impl Iterator<Item = f64> {
    let q = params.q();
    let levels = params.n_terms() + VALIDATION_MARGIN;
    (0..=levels)
        .scan(horizon, move |t, _| {
            let cur = *t;
            *t *= q;
            Some(cur)
        })
        .chain(std::iter::once(0.0))
}

type MemoKey = (u64, u64);

/// Damped integral of `gamma_inv` with its two-sided bound, all scaled by `gamma(lambda, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralBounds {
    pub integral: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntegralBounds {
    /// Largest relative violation of either bound (nonpositive when both hold).
    pub fn violation(&self) -> f64 {
        if self.upper == 0.0 {
            return self.integral.abs();
        }
        ((self.lower - self.integral) / self.lower).max((self.integral - self.upper) / self.upper)
    }
}

/// Evaluates `gamma_inv`, `gamma` and the weighted q-integrals for one profile.
///
/// Values are cached per exact `(lambda, t)` bit pattern. Cached and uncached
/// evaluations run the same code path, so they agree bit-for-bit.
pub struct GrowthEvaluator {
    profile: CoefficientProfile,
    params: QParams,
    horizon: f64,
    memoize: bool,
    products: Mutex<HashMap<MemoKey, f64>>,
    logs: Mutex<HashMap<MemoKey, f64>>,
}

impl fmt::Debug for GrowthEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthEvaluator")
            .field("profile", &self.profile)
            .field("params", &self.params)
            .field("horizon", &self.horizon)
            .field("memoize", &self.memoize)
            .finish_non_exhaustive()
    }
}

impl GrowthEvaluator {
    pub fn new(profile: CoefficientProfile, params: QParams, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(QHeatError::InvalidParameter {
                name: "horizon",
                reason: format!("T must be positive and finite, got {horizon}"),
            });
        }
        Ok(Self {
            profile,
            params,
            horizon,
            memoize: true,
            products: Mutex::new(HashMap::new()),
            logs: Mutex::new(HashMap::new()),
        })
    }

    /// Same evaluator without the cache.
    pub fn without_memo(mut self) -> Self {
        self.memoize = false;
        self
    }

    pub fn profile(&self) -> &CoefficientProfile {
        &self.profile
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_args(&self, lambda: f64, t: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(QHeatError::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive and finite, got {lambda}"),
            });
        }
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) {
            return Err(QHeatError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn cached(
        &self,
        map: &Mutex<HashMap<MemoKey, f64>>,
        lambda: f64,
        t: f64,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if !self.memoize {
            return compute();
        }
        let key = (lambda.to_bits(), t.to_bits());
        if let Some(&v) = map.lock().expect("growth memo poisoned").get(&key) {
            return Ok(v);
        }
        let v = compute()?;
        map.lock().expect("growth memo poisoned").insert(key, v);
        Ok(v)
    }

    /// Visits the factor increments `a_i = (1-q) lambda s_i upsilon(s_i)`, `s_i = t q^i`.
    fn for_each_increment(&self, lambda: f64, t: f64, mut visit: impl FnMut(f64) -> Result<()>) -> Result<()> {
        let q = self.params.q();
        let c = (1.0 - q) * lambda;
        let mut s = t;
        for _ in 0..=self.params.n_terms() {
            let v = check_finite(self.profile.eval(s), "upsilon", s)?;
            visit(c * s * v)?;
            s *= q;
        }
        Ok(())
    }

    /// `gamma_inv(lambda, t)`, the truncated product. Fails with `NonFinite` on overflow.
    pub fn gamma_inv(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_args(lambda, t)?;
        if t == 0.0 {
            return Ok(1.0);
        }
        self.cached(&self.products, lambda, t, || {
            let mut prod = 1.0;
            self.for_each_increment(lambda, t, |a| {
                prod *= 1.0 + a;
                Ok(())
            })?;
            check_finite(prod, "gamma_inv", t)
        })
    }

    /// `ln gamma_inv(lambda, t)` as a sum of `ln(1 + a_i)`; never overflows.
    pub fn ln_gamma_inv(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_args(lambda, t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        self.cached(&self.logs, lambda, t, || {
            let mut acc = 0.0;
            self.for_each_increment(lambda, t, |a| {
                acc += a.ln_1p();
                Ok(())
            })?;
            Ok(acc)
        })
    }

    /// `ln gamma_inv(lambda, t) - ln gamma_inv(lambda, q t)`, summed factor by factor so the
    /// shared factors cancel pairwise instead of through two large totals.
    fn ln_step_ratio(&self, lambda: f64, t: f64) -> Result<f64> {
        let q = self.params.q();
        let mut upper = Vec::with_capacity(self.params.n_terms() + 1);
        self.for_each_increment(lambda, t, |a| {
            upper.push(a);
            Ok(())
        })?;
        let mut acc = 0.0;
        let mut i = 0;
        self.for_each_increment(lambda, t * q, |b| {
            acc += upper[i].ln_1p() - b.ln_1p();
            i += 1;
            Ok(())
        })?;
        Ok(acc)
    }

    /// `gamma(lambda, t) = 1 / gamma_inv(lambda, t)`, in `(0, 1]`.
    pub fn gamma(&self, lambda: f64, t: f64) -> Result<f64> {
        match self.gamma_inv(lambda, t) {
            Ok(p) => Ok(1.0 / p),
            Err(QHeatError::NonFinite { what: "gamma_inv", .. }) => {
                Ok((-self.ln_gamma_inv(lambda, t)?).exp())
            }
            Err(e) => Err(e),
        }
    }

    /// Whether `gamma_inv(lambda, t)` is beyond [`LOG_SPACE_THRESHOLD`].
    pub fn needs_log_space(&self, lambda: f64, t: f64) -> Result<bool> {
        match self.gamma_inv(lambda, t) {
            Ok(p) => Ok(p > LOG_SPACE_THRESHOLD),
            Err(QHeatError::NonFinite { what: "gamma_inv", .. }) => Ok(true),
            Err(e) => Err(e),
        }
    }

    /// `D_q` of `gamma_inv(lambda, .)` at `t > 0`, from the independently evaluated
    /// products at `t` and `q t`. The difference is formed as
    /// `gamma_inv(q t) * expm1(ln gamma_inv(t) - ln gamma_inv(q t))`, which stays accurate
    /// when both products are close to 1.
    pub fn dq_gamma_inv(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_args(lambda, t)?;
        if t == 0.0 {
            return Err(QHeatError::InvalidParameter {
                name: "t",
                reason: "D_q is not evaluated at t = 0".into(),
            });
        }
        let q = self.params.q();
        let lower = self.gamma_inv(lambda, t * q)?;
        Ok(lower * self.ln_step_ratio(lambda, t)?.exp_m1() / ((1.0 - q) * t))
    }

    /// `|D_q gamma_inv(lambda, t) - lambda upsilon(t) gamma_inv(lambda, q t)|`.
    pub fn dq_gamma_inv_identity_residual(&self, lambda: f64, t: f64) -> Result<f64> {
        let lhs = self.dq_gamma_inv(lambda, t)?;
        let rhs = lambda * self.profile.eval(t) * self.gamma_inv(lambda, t * self.params.q())?;
        Ok((lhs - rhs).abs())
    }

    /// The identity residual divided by `gamma_inv(lambda, t)`, formed from log ratios so
    /// that it stays finite for overflowing modes.
    pub fn dq_gamma_inv_relative_residual(&self, lambda: f64, t: f64) -> Result<f64> {
        self.check_args(lambda, t)?;
        if t == 0.0 {
            return Err(QHeatError::InvalidParameter {
                name: "t",
                reason: "D_q is not evaluated at t = 0".into(),
            });
        }
        let q = self.params.q();
        let gap = self.ln_step_ratio(lambda, t)?;
        let rate = gap.exp_m1() / ((1.0 - q) * t);
        Ok((-gap).exp() * (rate - lambda * self.profile.eval(t)).abs())
    }

    /// `(ln gamma_inv - ln E_q(alpha lambda t), ln E_q(beta lambda t) - ln gamma_inv)`.
    /// Both margins are nonnegative exactly when
    /// `E_q(alpha lambda t) <= gamma_inv(lambda, t) <= E_q(beta lambda t)`.
    pub fn sandwich_margins(&self, lambda: f64, t: f64) -> Result<(f64, f64)> {
        let mid = self.ln_gamma_inv(lambda, t)?;
        let low = ln_big_e_q(self.profile.alpha * lambda * t, &self.params)?;
        let high = ln_big_e_q(self.profile.beta * lambda * t, &self.params)?;
        Ok((mid - low, high - mid))
    }

    /// The damped integral `gamma(lambda, t) int_0^t gamma_inv(lambda, q s) d_q s` with its
    /// bounds `(1 - gamma) / (lambda beta)` and `(1 - gamma) / (lambda alpha)`.
    pub fn integral_bounds(&self, lambda: f64, t: f64) -> Result<IntegralBounds> {
        let integral = self.damped_weighted_integral(lambda, t, |_| 1.0)?;
        let decay = -(-self.ln_gamma_inv(lambda, t)?).exp_m1();
        Ok(IntegralBounds {
            integral,
            lower: decay / (lambda * self.profile.beta),
            upper: decay / (lambda * self.profile.alpha),
        })
    }

    /// `int_0^t gamma_inv(lambda, q s) weight(s) d_q s`. Samples with zero weight skip
    /// the product evaluation.
    pub fn weighted_integral(&self, lambda: f64, t: f64, weight: impl Fn(f64) -> f64) -> Result<f64> {
        self.check_args(lambda, t)?;
        let q = self.params.q();
        try_jackson_integral(
            |s| {
                let w = check_finite(weight(s), "weight", s)?;
                if w == 0.0 {
                    Ok(0.0)
                } else {
                    Ok(self.gamma_inv(lambda, s * q)? * w)
                }
            },
            t,
            &self.params,
        )
        .map(|j| j.value)
    }

    /// `gamma(lambda, t) * weighted_integral(lambda, t, weight)` evaluated through log
    /// ratios `exp(ln gamma_inv(q s) - ln gamma_inv(t))`, for modes whose products overflow.
    pub fn damped_weighted_integral(
        &self,
        lambda: f64,
        t: f64,
        weight: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        self.check_args(lambda, t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let q = self.params.q();
        let top = self.ln_gamma_inv(lambda, t)?;
        try_jackson_integral(
            |s| {
                let w = check_finite(weight(s), "weight", s)?;
                if w == 0.0 {
                    Ok(0.0)
                } else {
                    Ok((self.ln_gamma_inv(lambda, s * q)? - top).exp() * w)
                }
            },
            t,
            &self.params,
        )
        .map(|j| j.value)
    }

    /// `gamma(lambda, t) * (initial + amplitude * int_0^t gamma_inv(lambda, q s) weight(s) d_q s)`,
    /// switching to log ratios above [`LOG_SPACE_THRESHOLD`].
    pub fn propagate(
        &self,
        lambda: f64,
        t: f64,
        initial: f64,
        amplitude: f64,
        weight: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        if self.needs_log_space(lambda, t)? {
            let gamma = self.gamma(lambda, t)?;
            let damped = if amplitude == 0.0 {
                0.0
            } else {
                self.damped_weighted_integral(lambda, t, weight)?
            };
            Ok(gamma * initial + amplitude * damped)
        } else {
            let integral = if amplitude == 0.0 {
                0.0
            } else {
                self.weighted_integral(lambda, t, weight)?
            };
            Ok(self.gamma(lambda, t)? * (initial + amplitude * integral))
        }
    }
}
