//! Right-hand sides `F(u_t)` of the equation class, their branch-resolved
//! inverses `Φ`, and the user functions `Ψ(τ)` and `w_m(τ)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{DualScalar, EvalError, Expr, ExprError};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuncError {
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain { what: &'static str, value: f64, domain: String },
    #[error("custom family has no inverse expression")]
    NoInverse,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid branch: {0}")]
    InvalidBranch(String),
    #[error("a general F(t, u, u_t) cannot be evaluated as a function of u_t alone")]
    GeneralFamily,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ExprError),
}

/// Real interval with independently open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<T: Real> Interval<T> {
    pub fn all() -> Self {
        Self { lo: T::neg_infinity(), hi: T::infinity(), lo_closed: false, hi_closed: false }
    }

    pub fn above(lo: T, closed: bool) -> Self {
        Self { lo, hi: T::infinity(), lo_closed: closed, hi_closed: false }
    }

    pub fn below(hi: T, closed: bool) -> Self {
        Self { lo: T::neg_infinity(), hi, lo_closed: false, hi_closed: closed }
    }

    pub fn contains(&self, v: T) -> bool {
        let lo_ok = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let hi_ok = if self.hi_closed { v <= self.hi } else { v < self.hi };
        lo_ok && hi_ok && !v.is_nan()
    }
}

impl<T: Real> std::fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BranchSelector {
    #[default]
    Principal,
    Negative,
    /// `0` is the principal branch, `1` the negative one.
    Index(usize),
}

/// A selected inverse branch of `F` together with the interval of `σ`
/// values on which it is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseBranch<T> {
    pub selector: BranchSelector,
    pub domain: Interval<T>,
}

impl<T> InverseBranch<T> {
    fn sign(&self) -> i8 {
        match self.selector {
            BranchSelector::Negative | BranchSelector::Index(1) => -1,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind<T> {
    /// `F = e^{u_t}`
    Exp,
    /// `F = |u_t|^β`
    Power { beta: T },
    /// `F = ε₂ u_t² + ε₁`
    Quadratic { eps1: i8, eps2: i8 },
    /// `F = h(u_t)` with a user-supplied inverse in `sigma`.
    CustomUt { expr: Expr, inverse: Option<Expr>, domain: Interval<T> },
    /// `F(t, u, u_t)`; only meaningful for symmetry checks.
    General { expr: Expr },
}

/// A right-hand side `F` with the classification-table row it instantiates.
#[derive(Debug, Clone, PartialEq)]
pub struct FFamily<T> {
    kind: FamilyKind<T>,
    row: Option<usize>,
}

pub const UT_VARS: [&str; 1] = ["ut"];
pub const SIGMA_VARS: [&str; 1] = ["sigma"];
pub const GENERAL_VARS: [&str; 3] = ["t", "u", "ut"];

impl<T: Real> FFamily<T> {
    pub fn exp() -> Self {
        Self { kind: FamilyKind::Exp, row: Some(5) }
    }

    pub fn power(beta: T) -> Result<Self, FuncError> {
        if !beta.is_finite() || beta == T::zero() {
            return Err(FuncError::InvalidParameter(format!("power exponent {beta} makes F constant or undefined")));
        }
        let b = beta.as_f64();
        let row = (![0.0, 1.0, 2.0].contains(&b)).then_some(6);
        Ok(Self { kind: FamilyKind::Power { beta }, row })
    }

    /// Power family that must sit in table row 6 (`β ∉ {0, 1, 2}`).
    pub fn power_row6(beta: T) -> Result<Self, FuncError> {
        let f = Self::power(beta)?;
        if f.row != Some(6) {
            return Err(FuncError::InvalidParameter(format!("β = {beta} is excluded from row 6 (β ≠ 0, 1, 2)")));
        }
        Ok(f)
    }

    pub fn quadratic(eps1: i8, eps2: i8) -> Result<Self, FuncError> {
        if eps1.abs() != 1 || eps2.abs() != 1 {
            return Err(FuncError::InvalidParameter(format!("ε1 = {eps1}, ε2 = {eps2} must be ±1")));
        }
        if (eps1, eps2) == (-1, -1) {
            return Err(FuncError::InvalidParameter("(ε1, ε2) = (-1, -1) is excluded".into()));
        }
        Ok(Self { kind: FamilyKind::Quadratic { eps1, eps2 }, row: Some(8) })
    }

    /// `F = expr(ut)` with optional inverse `inverse(sigma)` valid on `domain`.
    pub fn custom_ut(expr: &str, inverse: Option<&str>, domain: Option<Interval<T>>) -> Result<Self, FuncError> {
        let expr = Expr::parse(expr, &UT_VARS)?;
        let inverse = inverse.map(|s| Expr::parse(s, &SIGMA_VARS)).transpose()?;
        if let Some((coeffs, _)) = expr.as_affine() {
            if coeffs[0] == 0.0 {
                return Err(FuncError::InvalidParameter("F is constant".into()));
            }
        }
        Ok(Self {
            kind: FamilyKind::CustomUt { expr, inverse, domain: domain.unwrap_or_else(Interval::all) },
            row: Some(4),
        })
    }

    pub fn general(expr: &str) -> Result<Self, FuncError> {
        Ok(Self { kind: FamilyKind::General { expr: Expr::parse(expr, &GENERAL_VARS)? }, row: Some(0) })
    }

    pub fn with_row(mut self, row: Option<usize>) -> Self {
        self.row = row;
        self
    }

    pub fn kind(&self) -> &FamilyKind<T> {
        &self.kind
    }

    /// Classification-table row this family instantiates, if any.
    pub fn row(&self) -> Option<usize> {
        self.row
    }

    pub fn is_general(&self) -> bool {
        matches!(self.kind, FamilyKind::General { .. })
    }

    /// `F(s)` and `F′(s)`.
    pub fn f_eval(&self, s: T) -> Result<(T, T), FuncError> {
        let out = match &self.kind {
            FamilyKind::Exp => {
                let e = s.exp();
                (e, e)
            }
            FamilyKind::Power { beta } => {
                let beta = *beta;
                if s == T::zero() {
                    if beta > T::one() {
                        (T::zero(), T::zero())
                    } else {
                        return Err(self.domain_err("u_t", s, "u_t ≠ 0".into()));
                    }
                } else {
                    let a = s.abs();
                    (a.powf(beta), beta * a.powf(beta - T::one()) * s.signum())
                }
            }
            FamilyKind::Quadratic { eps1, eps2 } => {
                let (e1, e2) = (T::from_i8(*eps1).unwrap(), T::from_i8(*eps2).unwrap());
                (e2 * s * s + e1, T::lit(2.0) * e2 * s)
            }
            FamilyKind::CustomUt { expr, .. } => {
                let d = expr.eval_jet2(&[s])?;
                (d.value(), d.grad()[0])
            }
            FamilyKind::General { .. } => return Err(FuncError::GeneralFamily),
        };
        Ok(out)
    }

    /// `F(t, u, u_t)` with its gradient in `(t, u, u_t)`. Works for every kind.
    pub fn f_eval_full(&self, t: T, u: T, ut: T) -> Result<(T, [T; 3]), FuncError> {
        match &self.kind {
            FamilyKind::General { expr } => {
                let d = expr.eval_jet2(&[t, u, ut])?;
                Ok((d.value(), [d.grad()[0], d.grad()[1], d.grad()[2]]))
            }
            _ => {
                let (f, df) = self.f_eval(ut)?;
                Ok((f, [T::zero(), T::zero(), df]))
            }
        }
    }

    /// Resolves an inverse branch and its domain.
    pub fn branch(&self, selector: BranchSelector) -> Result<InverseBranch<T>, FuncError> {
        let negative = match selector {
            BranchSelector::Principal | BranchSelector::Index(0) => false,
            BranchSelector::Negative | BranchSelector::Index(1) => true,
            BranchSelector::Index(i) => {
                return Err(FuncError::InvalidBranch(format!("branch index {i} does not exist")))
            }
        };
        let domain = match &self.kind {
            FamilyKind::Exp if !negative => Interval::above(T::zero(), false),
            FamilyKind::Power { beta } => {
                if *beta > T::zero() && *beta <= T::one() {
                    Interval::above(T::zero(), true)
                } else {
                    Interval::above(T::zero(), false)
                }
            }
            FamilyKind::Quadratic { eps1, eps2 } => {
                let e1 = T::from_i8(*eps1).unwrap();
                if *eps2 > 0 {
                    Interval::above(e1, true)
                } else {
                    Interval::below(e1, true)
                }
            }
            FamilyKind::CustomUt { inverse: Some(_), domain, .. } if !negative => *domain,
            FamilyKind::CustomUt { inverse: None, .. } => return Err(FuncError::NoInverse),
            FamilyKind::General { .. } => return Err(FuncError::GeneralFamily),
            _ => {
                return Err(FuncError::InvalidBranch(
                    "only the principal branch exists for an injective F".into(),
                ))
            }
        };
        Ok(InverseBranch { selector, domain })
    }

    /// `Φ(σ)`, `Φ′(σ)` and `Φ″(σ)` on `branch`.
    fn phi_derivs(&self, branch: &InverseBranch<T>, sigma: T) -> Result<(T, T, T), FuncError> {
        if !branch.domain.contains(sigma) {
            return Err(self.domain_err("σ", sigma, branch.domain.to_string()));
        }
        let s = T::from_i8(branch.sign()).unwrap();
        let one = T::one();
        let out = match &self.kind {
            FamilyKind::Exp => (sigma.ln(), sigma.recip(), -(sigma * sigma).recip()),
            FamilyKind::Power { beta } => {
                let p = beta.recip();
                (
                    s * sigma.powf(p),
                    s * p * sigma.powf(p - one),
                    s * p * (p - one) * sigma.powf(p - one - one),
                )
            }
            FamilyKind::Quadratic { eps1, eps2 } => {
                let (e1, e2) = (T::from_i8(*eps1).unwrap(), T::from_i8(*eps2).unwrap());
                let q = (sigma - e1) / e2;
                let r = q.sqrt();
                let two = T::lit(2.0);
                (s * r, s / (two * e2 * r), -s / (two * two * e2 * e2 * q * r))
            }
            FamilyKind::CustomUt { inverse: Some(inv), .. } => {
                let d = inv.eval_jet2(&[sigma])?;
                (d.value(), d.grad()[0], d.hess()[0])
            }
            FamilyKind::CustomUt { inverse: None, .. } => return Err(FuncError::NoInverse),
            FamilyKind::General { .. } => return Err(FuncError::GeneralFamily),
        };
        Ok(out)
    }

    /// `Φ(σ)` and `Φ′(σ)` on `branch`, with `F(Φ(σ)) = σ`.
    pub fn phi_eval(&self, branch: &InverseBranch<T>, sigma: T) -> Result<(T, T), FuncError> {
        let (p, dp, _) = self.phi_derivs(branch, sigma)?;
        if !p.is_finite() || !dp.is_finite() {
            return Err(self.domain_err("σ", sigma, format!("{} (singular at the branch point)", branch.domain)));
        }
        Ok((p, dp))
    }

    /// `Φ` applied to a dual number, carrying first and second derivatives.
    pub fn phi_dual(&self, branch: &InverseBranch<T>, sigma: &DualScalar<T>) -> Result<DualScalar<T>, FuncError> {
        let (p, dp, ddp) = self.phi_derivs(branch, sigma.value())?;
        if !(p.is_finite() && dp.is_finite() && ddp.is_finite()) {
            return Err(self.domain_err(
                "σ",
                sigma.value(),
                format!("{} (singular at the branch point)", branch.domain),
            ));
        }
        Ok(sigma.chain(p, dp, ddp))
    }

    fn domain_err(&self, what: &'static str, value: T, domain: String) -> FuncError {
        FuncError::Domain { what, value: value.as_f64(), domain }
    }
}

/// JSON encoding of a family, e.g. `{"family":"power","beta":3.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Exp,
    Power {
        beta: f64,
    },
    Quadratic {
        eps1: i8,
        eps2: i8,
    },
    CustomUt {
        expr: String,
        #[serde(default)]
        inverse: Option<String>,
        /// `[lo, hi]` closed interval of valid σ for the inverse.
        #[serde(default)]
        domain: Option<[f64; 2]>,
    },
    General {
        expr: String,
    },
}

impl FamilySpec {
    pub fn build<T: Real>(&self) -> Result<FFamily<T>, FuncError> {
        match self {
            FamilySpec::Exp => Ok(FFamily::exp()),
            FamilySpec::Power { beta } => FFamily::power(T::lit(*beta)),
            FamilySpec::Quadratic { eps1, eps2 } => FFamily::quadratic(*eps1, *eps2),
            FamilySpec::CustomUt { expr, inverse, domain } => {
                let domain = domain.map(|[lo, hi]| Interval {
                    lo: T::lit(lo),
                    hi: T::lit(hi),
                    lo_closed: lo.is_finite(),
                    hi_closed: hi.is_finite(),
                });
                FFamily::custom_ut(expr, inverse.as_deref(), domain)
            }
            FamilySpec::General { expr } => FFamily::general(expr),
        }
    }
}

fn tau_vars(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("tau{i}")).collect()
}

/// `Ψ(τ_1, …, τ_k)`, written in variables `tau1 … tauk`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    expr: Expr,
}

impl PsiFunction {
    pub fn parse(source: &str, k: usize) -> Result<Self, FuncError> {
        Ok(Self { expr: Expr::parse(source, &tau_vars(k))? })
    }

    pub fn arity(&self) -> usize {
        self.expr.vars().len()
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

/// `w_1(τ) … w_{n-k}(τ)`, each written in `tau1 … tauk`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WFunctions {
    exprs: Vec<Expr>,
}

impl WFunctions {
    pub fn parse<S: AsRef<str>>(sources: &[S], k: usize) -> Result<Self, FuncError> {
        let vars = tau_vars(k);
        let exprs = sources.iter().map(|s| Expr::parse(s.as_ref(), &vars)).collect::<Result<_, _>>()?;
        Ok(Self { exprs })
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }
}
