//! Numerical laboratory for time operators of `f(N)` on `l^2(N)`.
//!
//! Builds finite truncations of the Galapon-type operator `T_f` (entries
//! `i / (f(m) - f(n))`), its partial sums, `T_{f^2}` and the symmetrized
//! operator `f(N) T_{f^2} + T_{f^2} f(N) + gamma f(N)^beta`, then checks
//! commutation residuals, norm growth and relative-bound premises.

// Negated comparisons deliberately reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ccr;
pub mod config;
pub mod numeric;
pub mod operators;
pub mod run;
pub mod spectrum;

pub use operators::{OperatorKind, OperatorMatrix, C64};
pub use spectrum::{SpectralFunction, SpectralRecord};
