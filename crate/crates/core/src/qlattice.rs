//! q-calculus on the geometric time lattice `{T q^m}`.
//!
//! Everything here is a pure function of its inputs. Infinite sums and
//! products are cut after `n_terms` terms; the discarded tail is geometric
//! with ratio `q` and is reported where it matters.

use crate::error::{check_finite, check_q, QHeatError, Result};

/// Truncated-tail target used to pick the default truncation depth.
const DEFAULT_TAIL: f64 = 1e-17;

/// Smallest truncation depth ever used by default.
pub const MIN_DEFAULT_TERMS: usize = 64;

/// Hard ceiling on adaptive series evaluation (`e_q`).
const SERIES_CAP: usize = 1_000_000;

/// Deformation parameter together with truncation controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParams {
    q: f64,
    n_terms: usize,
    tol: f64,
}

impl QParams {
    /// `q` with the default truncation depth [`default_terms`] and `tol = 1e-12`.
    pub fn new(q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(Self {
            q,
            n_terms: default_terms(q),
            tol: 1e-12,
        })
    }

    pub fn with_terms(q: f64, n_terms: usize) -> Result<Self> {
        check_q(q)?;
        if n_terms == 0 {
            return Err(QHeatError::InvalidParameter {
                name: "n_terms",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { q, n_terms, tol: 1e-12 })
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(QHeatError::InvalidParameter {
                name: "tol",
                reason: format!("must be positive and finite, got {tol}"),
            });
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Mixed absolute/relative comparison `|a - b| <= tol + tol * max(|a|, |b|)`.
    pub fn approx_eq(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.tol + self.tol * a.abs().max(b.abs())
    }
}

/// Default truncation depth: at least 64 and large enough that `q^n <= 1e-17`.
///
/// For `q <= 0.5` this is 64; it grows like `1/(1-q)` as `q -> 1`.
pub fn default_terms(q: f64) -> usize {
    let needed = (DEFAULT_TAIL.ln() / q.ln()).ceil();
    if needed.is_finite() && needed > MIN_DEFAULT_TERMS as f64 {
        needed as usize
    } else {
        MIN_DEFAULT_TERMS
    }
}

/// Default number of positive lattice points below `T` kept on an output lattice.
///
/// The deepest point satisfies `(1-q) t_M >= 1e-3`, so difference quotients
/// taken on the lattice keep at least 12 significant digits. Clamped to `[1, 64]`.
pub fn default_depth(scale: f64, q: f64) -> usize {
    let ratio = 1e-3 / ((1.0 - q) * scale);
    if ratio >= 1.0 {
        return 1;
    }
    let m = (ratio.ln() / q.ln()).floor();
    if m.is_finite() {
        (m as usize).clamp(1, 64)
    } else {
        1
    }
}

/// `[alpha]_q = (1 - q^alpha) / (1 - q)`.
pub fn q_number(alpha: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok((1.0 - q.powf(alpha)) / (1.0 - q))
}

/// `[n]_q! = [1]_q [2]_q ... [n]_q`, with `[0]_q! = 1`.
pub fn q_factorial(n: u32, q: f64) -> Result<f64> {
    check_q(q)?;
    let mut acc = 1.0;
    for k in 1..=n {
        acc *= q_number(k as f64, q)?;
    }
    Ok(acc)
}

/// The descending point set `{T q^m : 0 <= m <= M}` followed by a terminal 0.
///
/// Points are generated by repeated multiplication so that `points[m+1] == q * points[m]`
/// holds bit-for-bit; code that walks `x, q x, q^2 x, ...` from a lattice point
/// lands on the same floating-point values.
#[derive(Debug, Clone, PartialEq)]
pub struct QLattice {
    scale: f64,
    q: f64,
    depth: usize,
    points: Vec<f64>,
}

impl QLattice {
    pub fn new(scale: f64, q: f64, depth: usize) -> Result<Self> {
        check_q(q)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QHeatError::InvalidParameter {
                name: "scale",
                reason: format!("lattice scale must be positive and finite, got {scale}"),
            });
        }
        if depth == 0 {
            return Err(QHeatError::InvalidParameter {
                name: "depth",
                reason: "lattice depth must be at least 1".into(),
            });
        }
        let mut points = Vec::with_capacity(depth + 2);
        let mut t = scale;
        for _ in 0..=depth {
            points.push(t);
            t *= q;
        }
        points.push(0.0);
        Ok(Self {
            scale,
            q,
            depth,
            points,
        })
    }

    pub fn with_default_depth(scale: f64, q: f64) -> Result<Self> {
        check_q(q)?;
        Self::new(scale, q, default_depth(scale, q))
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Index `M` of the smallest positive point.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of points including the terminal 0 (`M + 2`).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> f64 {
        self.points[idx]
    }

    /// Index of the terminal point `t = 0`.
    pub fn origin_index(&self) -> usize {
        self.depth + 1
    }

    /// Indices at which `D_q` is defined: `t > 0` with `q t` also a positive lattice point.
    pub fn interior(&self) -> std::ops::Range<usize> {
        0..self.depth
    }

    /// Exact (bitwise) lookup of a lattice point.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == t)
    }
}

/// Samples of a function on every point of a [`QLattice`], including `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    lattice: QLattice,
    values: Vec<f64>,
}

impl LatticeFn {
    pub fn new(lattice: QLattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(QHeatError::DimensionMismatch {
                expected: lattice.len(),
                found: values.len(),
            });
        }
        for (v, &t) in values.iter().zip(lattice.points()) {
            check_finite(*v, "lattice sample", t)?;
        }
        Ok(Self { lattice, values })
    }

    pub fn sample(lattice: &QLattice, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = lattice.points().iter().map(|&t| f(t)).collect();
        Self::new(lattice.clone(), values)
    }

    pub fn lattice(&self) -> &QLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// q-derivative `(f(t) - f(q t)) / (t (1 - q))` at the interior lattice point `idx`.
pub fn dq(f: &LatticeFn, idx: usize) -> Result<f64> {
    let lattice = f.lattice();
    if idx >= lattice.depth() {
        return Err(QHeatError::NotInterior {
            index: idx,
            depth: lattice.depth(),
        });
    }
    let t = lattice.point(idx);
    let v = f.values();
    Ok((v[idx] - v[idx + 1]) / (t * (1.0 - lattice.q())))
}

/// A truncated sum or product together with a bound on the discarded tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

/// Jackson integral `(1-q) x sum_{m=0}^{n_terms} q^m f(x q^m)`.
pub fn jackson_integral(f: impl Fn(f64) -> f64, x: f64, params: &QParams) -> Result<f64> {
    jackson_integral_detailed(f, x, params).map(|j| j.value)
}

/// [`jackson_integral`] plus the tail estimate `x q^{n+1} max|f|` over the retained samples.
pub fn jackson_integral_detailed(
    f: impl Fn(f64) -> f64,
    x: f64,
    params: &QParams,
) -> Result<Truncated> {
    try_jackson_integral(|s| Ok(f(s)), x, params)
}

/// Jackson integral of a fallible integrand; the first integrand error is returned as is.
pub fn try_jackson_integral(
    f: impl Fn(f64) -> Result<f64>,
    x: f64,
    params: &QParams,
) -> Result<Truncated> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(QHeatError::InvalidParameter {
            name: "x",
            reason: format!("Jackson integral upper limit must be finite and nonnegative, got {x}"),
        });
    }
    let q = params.q();
    let mut sum = 0.0;
    let mut weight = 1.0;
    let mut s = x;
    let mut sup: f64 = 0.0;
    for _ in 0..=params.n_terms() {
        let fs = check_finite(f(s)?, "Jackson integrand", s)?;
        sup = sup.max(fs.abs());
        sum += weight * fs;
        weight *= q;
        s *= q;
    }
    Ok(Truncated {
        value: (1.0 - q) * x * sum,
        tail_bound: x * weight * sup,
        terms: params.n_terms() + 1,
    })
}

fn check_convergence(x: f64, q: f64) -> Result<()> {
    if (1.0 - q) * x.abs() < 1.0 {
        Ok(())
    } else {
        Err(QHeatError::OutsideConvergence { x, q })
    }
}

/// Sums `sum_k term_k` where `term_k = term_{k-1} * ratio(k)`, taking at least
/// `n_terms` terms and continuing until the geometric remainder bound drops below
/// `tol * max(1, |sum|)`.
fn q_series(params: &QParams, x: f64, ratio: impl Fn(usize) -> f64) -> Truncated {
    let q = params.q();
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut k = 0;
    loop {
        k += 1;
        term *= ratio(k);
        sum += term;
        // consecutive-term ratios are bounded by (1-q)|x| / (1 - q^{k+1}) from here on
        let r = (1.0 - q) * x.abs() / (1.0 - q.powi(k as i32 + 1));
        let tail = if r < 1.0 {
            term.abs() * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        let done = k >= params.n_terms() && tail <= params.tol() * sum.abs().max(1.0) * 1e-4;
        if done || k >= SERIES_CAP || term == 0.0 {
            return Truncated {
                value: sum,
                tail_bound: tail,
                terms: k + 1,
            };
        }
    }
}

/// Small q-exponential `e_q(x) = sum_k x^k / [k]_q!`, for `(1-q)|x| < 1`.
///
/// The series is summed past `n_terms` until its remainder bound is negligible,
/// since its term ratio tends to `(1-q)|x|` independently of `q`.
pub fn e_q(x: f64, params: &QParams) -> Result<f64> {
    e_q_detailed(x, params).map(|t| t.value)
}

/// For `x < 0` the series alternates and cancels heavily near the edge of the
/// convergence region, so terms and partial sums are carried in double-double.
pub fn e_q_detailed(x: f64, params: &QParams) -> Result<Truncated> {
    let q = params.q();
    check_convergence(x, q)?;
    if x < 0.0 {
        return Ok(alternating_e_q(x, params));
    }
    Ok(q_series(params, x, |k| {
        x * (1.0 - q) / (1.0 - q.powi(k as i32))
    }))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn new(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn quick(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        Self::quick(s.hi, s.lo + self.lo + o.lo)
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::quick(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Self::new(-q1)));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Self::new(-q2)));
        let q3 = r.hi / o.hi;
        Self::quick(q1, q2).add(Self::new(q3))
    }
}

fn alternating_e_q(x: f64, params: &QParams) -> Truncated {
    let q = params.q();
    let one = DoubleDouble::new(1.0);
    let c = DoubleDouble::two_sum(1.0, -q).mul(DoubleDouble::new(x));
    let mut qk = one;
    let mut term = one;
    let mut sum = one;
    let mut k = 0usize;
    loop {
        k += 1;
        qk = qk.mul(DoubleDouble::new(q));
        term = term.mul(c).div(one.add(DoubleDouble::new(-qk.hi)).add(DoubleDouble::new(-qk.lo)));
        sum = sum.add(term);
        let r = (1.0 - q) * x.abs() / (1.0 - q.powi(k as i32 + 1));
        let tail = if r < 1.0 {
            term.hi.abs() * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        let done = k >= params.n_terms() && tail <= params.tol() * sum.hi.abs() * 1e-4;
        if done || k >= SERIES_CAP || term.hi == 0.0 {
            return Truncated {
                value: sum.hi + sum.lo,
                tail_bound: tail,
                terms: k + 1,
            };
        }
    }
}

/// Big q-exponential `E_q(x) = prod_{i=0}^{n_terms} (1 + (1-q) q^i x)`.
pub fn big_e_q(x: f64, params: &QParams) -> Result<f64> {
    big_e_q_detailed(x, params).map(|t| t.value)
}

pub fn big_e_q_detailed(x: f64, params: &QParams) -> Result<Truncated> {
    let q = params.q();
    let c = (1.0 - q) * x;
    let mut prod = 1.0;
    let mut qi = 1.0;
    for i in 0..=params.n_terms() {
        let factor = 1.0 + c * qi;
        if !(factor > 0.0) {
            return Err(QHeatError::NonPositiveFactor {
                x,
                index: i,
                value: factor,
            });
        }
        prod *= factor;
        qi *= q;
    }
    // remaining factors multiply the product by at most exp(|x| q^{n+1})
    let tail = prod.abs() * (x.abs() * qi).exp_m1();
    Ok(Truncated {
        value: prod,
        tail_bound: tail,
        terms: params.n_terms() + 1,
    })
}

/// `ln E_q(x)` as a sum of `ln(1 + (1-q) q^i x)`; finite where `E_q` overflows.
pub fn ln_big_e_q(x: f64, params: &QParams) -> Result<f64> {
    let q = params.q();
    let c = (1.0 - q) * x;
    let mut acc = 0.0;
    let mut qi = 1.0;
    for i in 0..=params.n_terms() {
        let a = c * qi;
        if !(1.0 + a > 0.0) {
            return Err(QHeatError::NonPositiveFactor {
                x,
                index: i,
                value: 1.0 + a,
            });
        }
        acc += a.ln_1p();
        qi *= q;
    }
    Ok(acc)
}

/// Series form `E_q(x) = sum_k q^{k(k-1)/2} x^k / [k]_q!`.
pub fn big_e_q_series(x: f64, params: &QParams) -> Result<f64> {
    let q = params.q();
    check_convergence(x, q)?;
    Ok(q_series(params, x, |k| {
        q.powi(k as i32 - 1) * x * (1.0 - q) / (1.0 - q.powi(k as i32))
    })
    .value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(q: f64) -> QParams {
        QParams::new(q).unwrap()
    }

    #[test]
    fn q_numbers() {
        assert_eq!(q_number(2.0, 0.5).unwrap(), 1.5);
        assert_eq!(q_number(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(q_number(3.0, 0.5).unwrap(), 1.75);
        assert!(matches!(q_number(1.0, 1.0), Err(QHeatError::InvalidQ(_))));
        assert!(q_number(1.0, 0.0).is_err());
        assert!(q_number(1.0, -0.2).is_err());
    }

    #[test]
    fn q_factorials() {
        assert_eq!(q_factorial(0, 0.5).unwrap(), 1.0);
        assert_eq!(q_factorial(2, 0.5).unwrap(), 1.5);
        assert_eq!(q_factorial(3, 0.5).unwrap(), 2.625);
    }

    #[test]
    fn params_reject_bad_q() {
        assert!(QParams::new(1.0).is_err());
        assert!(QParams::new(0.0).is_err());
        assert!(QParams::new(1.2).is_err());
        assert!(QParams::with_terms(0.5, 0).is_err());
        assert_eq!(p(0.5).n_terms(), 64);
        assert!(p(0.9).n_terms() > 64);
    }

    #[test]
    fn lattice_layout() {
        let l = QLattice::new(1.0, 0.5, 4).unwrap();
        assert_eq!(l.points(), &[1.0, 0.5, 0.25, 0.125, 0.0625, 0.0]);
        assert_eq!(l.origin_index(), 5);
        assert_eq!(l.interior(), 0..4);
        for m in 0..l.depth() {
            assert_eq!(l.point(m + 1), 0.5 * l.point(m));
        }
        assert_eq!(l.index_of(0.25), Some(2));
        assert_eq!(l.index_of(0.3), None);
    }

    #[test]
    fn dq_of_monomials() {
        let l = QLattice::new(1.0, 0.5, 6).unwrap();
        let sq = LatticeFn::sample(&l, |x| x * x).unwrap();
        assert!((dq(&sq, 0).unwrap() - 1.5).abs() < 1e-15);
        let cube = LatticeFn::sample(&l, |x| x * x * x).unwrap();
        assert!((dq(&cube, 0).unwrap() - 1.75).abs() < 1e-15);
        let c = LatticeFn::sample(&l, |_| 3.0).unwrap();
        for i in l.interior() {
            assert_eq!(dq(&c, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn dq_rejects_non_interior() {
        let l = QLattice::new(1.0, 0.5, 3).unwrap();
        let f = LatticeFn::sample(&l, |x| x).unwrap();
        assert!(matches!(dq(&f, 3), Err(QHeatError::NotInterior { .. })));
        assert!(dq(&f, l.origin_index()).is_err());
    }

    #[test]
    fn lattice_fn_validates() {
        let l = QLattice::new(1.0, 0.5, 3).unwrap();
        assert!(LatticeFn::new(l.clone(), vec![0.0; 2]).is_err());
        assert!(LatticeFn::sample(&l, |x| 1.0 / (x - 0.5)).is_err());
    }

    #[test]
    fn jackson_examples() {
        let params = p(0.5);
        assert!((jackson_integral(|_| 1.0, 1.0, &params).unwrap() - 1.0).abs() < 1e-15);
        assert!((jackson_integral(|t| t, 1.0, &params).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let q = params.q();
        let dq_sq = |t: f64| (t * t - (q * t) * (q * t)) / ((1.0 - q) * t);
        assert!((jackson_integral(dq_sq, 1.0, &params).unwrap() - 1.0).abs() < 1e-14);
        assert!(jackson_integral(|_| 1.0, -1.0, &params).is_err());
        assert!(matches!(
            jackson_integral(|_| f64::NAN, 1.0, &params),
            Err(QHeatError::NonFinite { .. })
        ));
        let j = jackson_integral_detailed(|_| 1.0, 1.0, &params).unwrap();
        assert!(j.tail_bound < 1e-18);
    }

    #[test]
    fn exponentials_at_zero() {
        let params = p(0.5);
        assert_eq!(e_q(0.0, &params).unwrap(), 1.0);
        assert_eq!(big_e_q(0.0, &params).unwrap(), 1.0);
    }

    #[test]
    fn exponential_inverse_pair() {
        let params = p(0.5);
        let prod = e_q(0.3, &params).unwrap() * big_e_q(-0.3, &params).unwrap();
        assert!((prod - 1.0).abs() < 1e-12);
    }

    /// 64-term partial sum with explicit factorials, independent of the
    /// ratio recursion used by `e_q`.
    fn e_q_oracle(x: f64, q: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut last = 0.0;
        for k in 0..64u32 {
            let term = x.powi(k as i32) / q_factorial(k, q).unwrap();
            sum += term;
            last = term;
        }
        // remainder bounded by a geometric series with ratio (1-q)|x|/(1-q^65)
        let r = (1.0 - q) * x / (1.0 - q.powi(65));
        (sum, last * r / (1.0 - r))
    }

    #[test]
    fn e_q_at_one_matches_partial_sum_oracle() {
        let (oracle, remainder) = e_q_oracle(1.0, 0.5);
        assert!(remainder < 1e-17);
        // frozen from a 40-digit evaluation of the same partial sum
        assert!((oracle - 3.462_746_619_455_064).abs() < 1e-14, "{oracle}");
        let v = e_q(1.0, &p(0.5)).unwrap();
        assert!((v - oracle).abs() < 1e-14);
    }

    #[test]
    fn big_e_q_product_vs_series() {
        let params = p(0.5);
        let prod = big_e_q(1.0, &params).unwrap();
        let series = big_e_q_series(1.0, &params).unwrap();
        assert!((prod - series).abs() < 1e-12);
    }

    #[test]
    fn big_e_q_at_two_matches_product_oracle() {
        // 64 factors of (1 + 0.5^{i+1} * 2) = (1 + 0.5^i)
        let mut oracle = 1.0;
        for i in 0..64 {
            oracle *= 1.0 + 0.5f64.powi(i);
        }
        assert!((oracle - 4.768_462_058_062_743).abs() < 1e-13, "{oracle}");
        let v = big_e_q(2.0, &p(0.5)).unwrap();
        assert!((v - oracle).abs() < 1e-13);
        assert!((ln_big_e_q(2.0, &p(0.5)).unwrap() - oracle.ln()).abs() < 1e-14);
    }

    #[test]
    fn convergence_region_enforced() {
        let params = p(0.5);
        assert!(matches!(
            e_q(2.5, &params),
            Err(QHeatError::OutsideConvergence { .. })
        ));
        assert!(matches!(
            big_e_q(-2.5, &params),
            Err(QHeatError::NonPositiveFactor { .. })
        ));
        assert!(big_e_q(50.0, &params).is_ok());
    }

    #[test]
    fn default_depth_rule() {
        assert_eq!(default_depth(1.0, 0.5), 8);
        let m = default_depth(1.0, 0.9);
        assert!((1.0 - 0.9) * 0.9f64.powi(m as i32) >= 1e-3);
        assert!((1.0 - 0.9) * 0.9f64.powi(m as i32 + 1) < 1e-3);
        assert_eq!(default_depth(1.0, 0.999), 1);
    }

    #[test]
    fn alternating_small_exponential_keeps_relative_accuracy() {
        for q in [0.3, 0.5, 0.9] {
            let params = p(q);
            let x = 0.9 / (1.0 - q);
            let v = e_q(-x, &params).unwrap() * big_e_q(x, &params).unwrap();
            assert!((v - 1.0).abs() <= 1e-12, "q = {q}: {v}");
        }
    }
}
