//! The abstract diagonal operator `L`: spectra, coefficient vectors and the norms
//! built from them.

use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{QHeatError, Result};
use crate::qlattice::{dq, LatticeFn, QLattice};

/// Scalar type of an expansion coefficient.
pub trait Coefficient: Copy + PartialEq + std::fmt::Debug + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn norm_sqr(&self) -> f64;
    fn is_finite(&self) -> bool;
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn norm_sqr(&self) -> f64 {
        self * self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Coefficient for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm_sqr(&self) -> f64 {
        Complex64::norm_sqr(self)
    }
    fn is_finite(&self) -> bool {
        Complex64::is_finite(*self)
    }
}

/// Ascending eigenvalues `lambda_1 <= ... <= lambda_K` with a strict lower bound `lambda0 > 0`.
///
/// Any countable index set is flattened into this single ascending enumeration.
/// `labels` carries the operator's own index for each mode (e.g. the sine
/// frequency `n` of the involution operator).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    labels: Vec<usize>,
    lambda0: f64,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>, lambda0: f64) -> Result<Self> {
        let labels = (1..=eigenvalues.len()).collect();
        Self::with_labels(eigenvalues, labels, lambda0)
    }

    pub fn with_labels(eigenvalues: Vec<f64>, labels: Vec<usize>, lambda0: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(QHeatError::Spectrum {
                index: 0,
                reason: format!("lambda0 must be positive and finite, got {lambda0}"),
            });
        }
        if eigenvalues.is_empty() {
            return Err(QHeatError::Spectrum {
                index: 0,
                reason: "at least one eigenvalue is required".into(),
            });
        }
        if labels.len() != eigenvalues.len() {
            return Err(QHeatError::DimensionMismatch {
                expected: eigenvalues.len(),
                found: labels.len(),
            });
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            // reported indices are 1-based
            if !l.is_finite() || l <= lambda0 {
                return Err(QHeatError::Spectrum {
                    index: i + 1,
                    reason: format!("eigenvalue {l} must exceed lambda0 = {lambda0}"),
                });
            }
            if i > 0 && l < eigenvalues[i - 1] {
                return Err(QHeatError::Spectrum {
                    index: i + 1,
                    reason: format!("eigenvalue {l} is smaller than its predecessor {}", eigenvalues[i - 1]),
                });
            }
        }
        Ok(Self {
            eigenvalues,
            labels,
            lambda0,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is never empty")
    }
}

/// Coefficients `<u, phi_k>` of one state, one entry per retained mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVec<S = f64> {
    coeffs: Vec<S>,
}

impl<S: Coefficient> CoeffVec<S> {
    pub fn new(coeffs: Vec<S>) -> Result<Self> {
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(QHeatError::NonFinite {
                what: "coefficient",
                at: k as f64,
            });
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            coeffs: vec![S::zero(); k],
        }
    }

    /// Unit vector at the 0-based mode `k`.
    pub fn unit(len: usize, k: usize, one: S) -> Self {
        let mut v = Self::zeros(len);
        v.coeffs[k] = one;
        v
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.coeffs
    }

    pub fn get(&self, k: usize) -> S {
        self.coeffs[k]
    }

    pub fn into_vec(self) -> Vec<S> {
        self.coeffs
    }

    pub fn check_len(&self, spectrum: &Spectrum) -> Result<()> {
        if self.len() != spectrum.len() {
            return Err(QHeatError::DimensionMismatch {
                expected: spectrum.len(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<f64>> for CoeffVec<f64> {
    fn from(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }
}

/// `(sum_k |c_k|^2)^{1/2}`.
pub fn plancherel_norm<S: Coefficient>(c: &CoeffVec<S>) -> f64 {
    c.as_slice().iter().map(Coefficient::norm_sqr).sum::<f64>().sqrt()
}

/// `(sum_k lambda_k^d |c_k|^2)^{1/2}`; the `H^d_L` norm.
pub fn sobolev_norm<S: Coefficient>(c: &CoeffVec<S>, d: f64, spectrum: &Spectrum) -> Result<f64> {
    c.check_len(spectrum)?;
    Ok(c.as_slice()
        .iter()
        .zip(spectrum.eigenvalues())
        .map(|(ck, &l)| l.powf(d) * ck.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Entrywise `lambda_k c_k`.
pub fn apply_l<S: Coefficient>(c: &CoeffVec<S>, spectrum: &Spectrum) -> Result<CoeffVec<S>> {
    c.check_len(spectrum)?;
    Ok(CoeffVec {
        coeffs: c
            .as_slice()
            .iter()
            .zip(spectrum.eigenvalues())
            .map(|(&ck, &l)| ck * l)
            .collect(),
    })
}

/// Largest of the last-mode contributions `lambda_k^{d/2} |c_k|` over the final
/// `window` modes; a proxy for the truncation tail.
pub fn tail_proxy<S: Coefficient>(c: &CoeffVec<S>, d: f64, spectrum: &Spectrum, window: usize) -> Result<Vec<f64>> {
    c.check_len(spectrum)?;
    let start = c.len().saturating_sub(window);
    Ok((start..c.len())
        .map(|k| spectrum.eigenvalues()[k].powf(d / 2.0) * c.get(k).norm_sqr().sqrt())
        .collect())
}

/// Coefficient vectors at every lattice point (including `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTrajectory {
    lattice: QLattice,
    states: Vec<CoeffVec<f64>>,
}

impl CoeffTrajectory {
    pub fn new(lattice: QLattice, states: Vec<CoeffVec<f64>>) -> Result<Self> {
        if states.len() != lattice.len() {
            return Err(QHeatError::DimensionMismatch {
                expected: lattice.len(),
                found: states.len(),
            });
        }
        let k = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != k) {
            return Err(QHeatError::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        Ok(Self { lattice, states })
    }

    /// Builds a trajectory from per-mode time series `modes[k][idx]`.
    pub fn from_modes(lattice: QLattice, modes: &[Vec<f64>]) -> Result<Self> {
        let states = (0..lattice.len())
            .map(|i| CoeffVec::new(modes.iter().map(|m| m[i]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(lattice, states)
    }

    pub fn lattice(&self) -> &QLattice {
        &self.lattice
    }

    pub fn states(&self) -> &[CoeffVec<f64>] {
        &self.states
    }

    pub fn modes(&self) -> usize {
        self.states[0].len()
    }

    pub fn at(&self, idx: usize) -> &CoeffVec<f64> {
        &self.states[idx]
    }

    pub fn at_origin(&self) -> &CoeffVec<f64> {
        &self.states[self.lattice.origin_index()]
    }

    pub fn at_horizon(&self) -> &CoeffVec<f64> {
        &self.states[0]
    }

    /// Time series of mode `k` as a [`LatticeFn`].
    pub fn mode(&self, k: usize) -> Result<LatticeFn> {
        LatticeFn::new(self.lattice.clone(), self.states.iter().map(|s| s.get(k)).collect())
    }

    /// `D_q` in time of every mode at the interior point `idx`.
    pub fn dq_at(&self, idx: usize) -> Result<CoeffVec<f64>> {
        let coeffs = (0..self.modes())
            .map(|k| dq(&self.mode(k)?, idx))
            .collect::<Result<Vec<_>>>()?;
        CoeffVec::new(coeffs)
    }
}

/// Sup-in-time norms of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryNorms {
    /// `max_t ||u(t)||_{H^d}` over all lattice points.
    pub sup_norm: f64,
    /// `max_t ||D_q u(t)||_{H^d}` over interior lattice points.
    pub sup_dq_norm: f64,
}

pub fn trajectory_norms(tr: &CoeffTrajectory, d: f64, spectrum: &Spectrum) -> Result<TrajectoryNorms> {
    if tr.lattice().len() < 2 {
        return Err(QHeatError::InvalidParameter {
            name: "trajectory",
            reason: "at least two lattice points are required".into(),
        });
    }
    let mut sup_norm: f64 = 0.0;
    for s in tr.states() {
        sup_norm = sup_norm.max(sobolev_norm(s, d, spectrum)?);
    }
    let mut sup_dq_norm: f64 = 0.0;
    for idx in tr.lattice().interior() {
        sup_dq_norm = sup_dq_norm.max(sobolev_norm(&tr.dq_at(idx)?, d, spectrum)?);
    }
    Ok(TrajectoryNorms { sup_norm, sup_dq_norm })
}
