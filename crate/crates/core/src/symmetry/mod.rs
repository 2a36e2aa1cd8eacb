//! Lie point symmetries of `u_a u_a = F(t, u, u_t)`.
//!
//! A generator `X = ξ^t ∂_t + ξ^a ∂_a + η ∂_u` is a symmetry when its first
//! prolongation annihilates `Δ = u_a u_a − F` on the solution manifold. The
//! check here is point-wise: jets are sampled directly on `Δ = 0` and the
//! prolonged action
//!
//! ```text
//! 2 u_a η¹_a − F_{u_t} η¹_t − F_t ξ^t − F_u η
//! ```
//!
//! is evaluated, with `η¹_μ = D_μ η − u_ν D_μ ξ^ν` and `D_μ = ∂_μ + u_μ ∂_u`.

pub mod flow;
pub mod table;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, ExprError};
use crate::funcs::{FFamily, FuncError};
use crate::verify::JetPoint;
use crate::Real;

pub use flow::{flow_transform, AffineFlow, TransformedField};
pub use table::{verify_generator, verify_table, GeneratorReport, Row7Functions, RowParams, TableReport, TableRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Parse(#[from] ExprError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error("generator {generator} failed at {jet}: {message}")]
    AtJet { generator: String, jet: String, message: String },
    #[error("no on-manifold sample found in {attempts} attempts (F < 0 or undefined on the sample box)")]
    Sampling { attempts: usize },
    #[error("generator {0} is not affine in (t, x, u)")]
    NonAffineGenerator(String),
    #[error("generator {0} moves (t, x) depending on u, so it does not map graphs to graphs")]
    NotProjectable(String),
    #[error("invalid table row: {0}")]
    InvalidRow(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Coordinate names `t, x1 … xn, u` used by generator coefficients.
pub fn coordinate_names(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=n).map(|a| format!("x{a}")))
        .chain(std::iter::once("u".to_string()))
        .collect()
}

/// `ξ^t ∂_t + ξ^a ∂_a + η ∂_u` with coefficients in `(t, x1 … xn, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    n: usize,
    xi_t: Expr,
    xi_x: Vec<Expr>,
    eta: Expr,
}

/// Serialized form of a generator: coefficient strings in `t, x1 … xn, u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub xi_t: String,
    pub xi_x: Vec<String>,
    pub eta: String,
}

impl VectorField {
    pub fn parse<S: AsRef<str>>(n: usize, xi_t: &str, xi_x: &[S], eta: &str) -> Result<Self, SymmetryError> {
        if xi_x.len() != n {
            return Err(SymmetryError::Dimension(format!("{} space coefficients for n = {n}", xi_x.len())));
        }
        let vars = coordinate_names(n);
        Ok(Self {
            n,
            xi_t: Expr::parse(xi_t, &vars)?,
            xi_x: xi_x.iter().map(|s| Expr::parse(s.as_ref(), &vars)).collect::<Result<_, _>>()?,
            eta: Expr::parse(eta, &vars)?,
        })
    }

    pub fn from_spec(n: usize, spec: &GeneratorSpec) -> Result<Self, SymmetryError> {
        Self::parse(n, &spec.xi_t, &spec.xi_x, &spec.eta)
    }

    pub fn to_spec(&self, id: &str) -> GeneratorSpec {
        GeneratorSpec {
            id: id.to_string(),
            xi_t: self.xi_t.to_string(),
            xi_x: self.xi_x.iter().map(Expr::to_string).collect(),
            eta: self.eta.to_string(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi_t(&self) -> &Expr {
        &self.xi_t
    }

    pub fn xi_x(&self) -> &[Expr] {
        &self.xi_x
    }

    pub fn eta(&self) -> &Expr {
        &self.eta
    }

    /// All coefficients in the order `ξ^t, ξ^1 … ξ^n, η`.
    pub fn components(&self) -> impl Iterator<Item = &Expr> {
        std::iter::once(&self.xi_t).chain(&self.xi_x).chain(std::iter::once(&self.eta))
    }
}

/// Value and gradient in `(t, x, u)` of every coefficient at the jet's base point.
fn coefficient_grads<T: Real>(field: &VectorField, jet: &JetPoint<T>) -> Result<Vec<(T, Vec<T>)>, SymmetryError> {
    if jet.x.len() != field.n || jet.u_x.len() != field.n {
        return Err(SymmetryError::Dimension(format!("jet of dimension {} for a field in n = {}", jet.x.len(), field.n)));
    }
    let point: Vec<T> = std::iter::once(jet.t).chain(jet.x.iter().copied()).chain(std::iter::once(jet.u)).collect();
    field.components().map(|e| e.eval_grad(&point).map_err(SymmetryError::from)).collect()
}

/// First prolongation coefficients `(η¹_t, η¹_x)` at a jet.
pub fn prolong1<T: Real>(field: &VectorField, jet: &JetPoint<T>) -> Result<(T, Vec<T>), SymmetryError> {
    let n = field.n;
    let coeffs = coefficient_grads(field, jet)?;
    let iu = n + 1;
    // derivatives u_ν for ν = t, x1 … xn
    let du: Vec<T> = std::iter::once(jet.u_t).chain(jet.u_x.iter().copied()).collect();
    let total = |grad: &[T], mu: usize| grad[mu] + du[mu] * grad[iu];
    let (_, eta_grad) = &coeffs[n + 1];
    let prolong = |mu: usize| {
        (0..=n).fold(total(eta_grad, mu), |acc, nu| acc - du[nu] * total(&coeffs[nu].1, mu))
    };
    Ok((prolong(0), (1..=n).map(prolong).collect()))
}

/// Signed prolonged action of the generator on `Δ` at an on-manifold jet.
pub fn symmetry_action<T: Real>(field: &VectorField, family: &FFamily<T>, jet: &JetPoint<T>) -> Result<T, SymmetryError> {
    let (eta_t, eta_x) = prolong1(field, jet)?;
    let (_, [f_t, f_u, f_ut]) = family.f_eval_full(jet.t, jet.u, jet.u_t)?;
    let point: Vec<T> = std::iter::once(jet.t).chain(jet.x.iter().copied()).chain(std::iter::once(jet.u)).collect();
    let xi_t = field.xi_t.eval(&point)?;
    let eta = field.eta.eval(&point)?;
    let two = T::lit(2.0);
    let lhs = jet.u_x.iter().zip(&eta_x).map(|(&ua, &ea)| ua * ea).sum::<T>() * two;
    Ok(lhs - f_ut * eta_t - f_t * xi_t - f_u * eta)
}

/// `|2 u_a η¹_a − F_{u_t} η¹_t − F_t ξ^t − F_u η|`; zero for symmetries.
pub fn symmetry_defect<T: Real>(field: &VectorField, family: &FFamily<T>, jet: &JetPoint<T>) -> Result<T, SymmetryError> {
    symmetry_action(field, family, jet).map(T::abs)
}

/// Sampling box for on-manifold jets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRanges {
    pub t: [f64; 2],
    pub x: [f64; 2],
    pub u: [f64; 2],
    pub ut: [f64; 2],
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self { t: [-1.0, 1.0], x: [-2.0, 2.0], u: [-1.0, 1.0], ut: [-2.0, 2.0] }
    }
}

/// Draws jets with `u_x = √F · (random unit vector)`, so that each one lies
/// on `u_a u_a = F(t, u, u_t)` up to rounding.
pub struct OnManifoldSampler<'a, T> {
    family: &'a FFamily<T>,
    n: usize,
    ranges: SampleRanges,
    rng: ChaCha8Rng,
    max_attempts: usize,
}

impl<'a, T: Real> OnManifoldSampler<'a, T> {
    pub fn new(family: &'a FFamily<T>, n: usize, ranges: SampleRanges, seed: u64) -> Self {
        Self::with_rng(family, n, ranges, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(family: &'a FFamily<T>, n: usize, ranges: SampleRanges, rng: ChaCha8Rng) -> Self {
        Self { family, n, ranges, rng, max_attempts: 10_000 }
    }

    fn uniform(&mut self, [lo, hi]: [f64; 2]) -> T {
        T::lit(if lo < hi { self.rng.gen_range(lo..hi) } else { lo })
    }

    fn unit_vector(&mut self) -> Vec<T> {
        loop {
            let v: Vec<f64> = (0..self.n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 0.1 && norm <= 1.0 {
                return v.iter().map(|a| T::lit(a / norm)).collect();
            }
        }
    }

    pub fn sample(&mut self) -> Result<JetPoint<T>, SymmetryError> {
        for _ in 0..self.max_attempts {
            let t = self.uniform(self.ranges.t);
            let x: Vec<T> = (0..self.n).map(|_| self.uniform(self.ranges.x)).collect();
            let u = self.uniform(self.ranges.u);
            let u_t = self.uniform(self.ranges.ut);
            let dir = self.unit_vector();
            let f = match self.family.f_eval_full(t, u, u_t) {
                Ok((f, grad)) if f.is_finite() && grad.iter().all(|g| g.is_finite()) => f,
                _ => continue,
            };
            if f < T::zero() {
                continue;
            }
            let r = f.sqrt();
            return Ok(JetPoint { t, x, u, u_t, u_x: dir.into_iter().map(|d| r * d).collect() });
        }
        Err(SymmetryError::Sampling { attempts: self.max_attempts })
    }
}
