//! Implicit general solutions of modified eikonal equations `u_a u_a = F(u_t)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: a small expression language with second-order forward-mode
//!   dual numbers ([`DualScalar`]), used for every user-supplied function.
//! - [`funcs`]: the right-hand side families `F` with branch-resolved
//!   inverses `Φ`.
//! - [`solutions`]: linear (rank 0) solutions and the implicit rank-k
//!   solutions, evaluated point-wise by damped multistart Newton.
//! - [`verify`]: finite-difference jets, PDE residuals and Hessian rank.
//! - [`symmetry`]: first prolongation, the classification table as a
//!   generator registry, and finite flows of affine generators.
//!
//! All numerical code is generic over the scalar type through [`Real`];
//! the aliases at the crate root fix it to `f64`, which is what the
//! verification tolerances are calibrated for.

pub mod expr;
pub mod funcs;
pub mod linalg;
pub mod solutions;
pub mod symmetry;
pub mod verify;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub use expr::{DualScalar, EvalError, Expr, ExprError};
pub use funcs::{BranchSelector, FFamily, FamilySpec, FuncError, Interval, PsiFunction, WFunctions};
pub use solutions::{ImplicitSolution, LinearSolution, NewtonConfig, Root, SolveError};
pub use symmetry::{SymmetryError, VectorField};
pub use verify::{Field, FieldError, JetPoint, ResidualReport};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeExamples;

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant; every `Real` can represent (a rounding of) any finite `f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

pub type Dual = DualScalar<f64>;
pub type Family = FFamily<f64>;
pub type Solution = ImplicitSolution<f64>;
pub type Linear = LinearSolution<f64>;
pub type Newton = NewtonConfig<f64>;
pub type Jet = JetPoint<f64>;
pub type Row = symmetry::TableRow<f64>;
