//! Spectral solvers for the q-deformed heat equation `D_q u + upsilon(t) L u = f`:
//! the direct Cauchy problem and the inverse source problem with final overdetermination.
// Negated comparisons below are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod direct;
pub mod error;
pub mod growth;
pub mod inverse;
pub mod operators;
pub mod qlattice;
pub mod spectral;

pub use direct::{solve_direct, DirectProblem, DirectSolution, Source};
pub use error::{QHeatError, Result};
pub use growth::{CoefficientProfile, GrowthEvaluator};
pub use inverse::{solve_inverse, InverseProblem, InverseSolution, SourceProfile};
pub use operators::{InvolutionOperator, SpatialFn};
pub use qlattice::{QLattice, QParams};
pub use spectral::{CoeffTrajectory, CoeffVec, Spectrum};
