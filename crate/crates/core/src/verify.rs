//! Independent numerical checks of evaluated solutions: central-difference
//! jets, PDE residuals and the numerical rank of the space Hessian.

use thiserror::Error;

use crate::funcs::{FFamily, FuncError};
use crate::linalg::{norm_inf, singular_values};
use crate::solutions::{ImplicitSolution, LinearSolution, NewtonConfig, Root, SolveError};
use crate::Real;

/// A point of first-order jet space.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint<T> {
    pub t: T,
    pub x: Vec<T>,
    pub u: T,
    pub u_t: T,
    pub u_x: Vec<T>,
}

impl<T: Real> JetPoint<T> {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.u.is_finite()
            && self.u_t.is_finite()
            && self.x.iter().chain(&self.u_x).all(|v| v.is_finite())
    }

    /// `∞`-norm distance between the derivative parts `(u_t, u_x)` of two jets.
    pub fn derivative_mismatch(&self, other: &Self) -> T {
        self.u_x
            .iter()
            .zip(&other.u_x)
            .map(|(&a, &b)| (a - b).abs())
            .fold((self.u_t - other.u_t).abs(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("root tracking left the sheet: τ moved {moved:.3e}, allowed {allowed:.3e}")]
    BranchJump { moved: f64, allowed: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// A scalar function of `(t, x)`.
pub trait Field<T: Real> {
    /// Number of space coordinates.
    fn dim(&self) -> usize;

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError>;

    /// `u(t + dt, x + dx) − u(t, x)`. Fields that can form the difference
    /// without cancellation should override this.
    fn increment(&self, t: T, x: &[T], dt: T, dx: &[T]) -> Result<T, FieldError> {
        let shifted: Vec<T> = x.iter().zip(dx).map(|(&a, &b)| a + b).collect();
        Ok(self.value(t + dt, &shifted)? - self.value(t, x)?)
    }
}

impl<T: Real> Field<T> for LinearSolution<T> {
    fn dim(&self) -> usize {
        self.n()
    }

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError> {
        Ok(LinearSolution::value(self, t, x))
    }

    fn increment(&self, _t: T, _x: &[T], dt: T, dx: &[T]) -> Result<T, FieldError> {
        Ok(self.c0 * dt + self.c.iter().zip(dx).map(|(&c, &d)| c * d).sum::<T>())
    }
}

/// Wraps a closure as a [`Field`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Real, F: Fn(T, &[T]) -> Result<T, FieldError>> Field<T> for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError> {
        (self.f)(t, x)
    }
}

/// One sheet of an implicit solution near a converged root, evaluated by
/// Newton restarted from the root's `τ` and checked against the local
/// sensitivity `dτ/d(t, x)`.
pub struct RootTrackedField<'a, T> {
    solution: &'a ImplicitSolution<T>,
    cfg: NewtonConfig<T>,
    t0: T,
    x0: Vec<T>,
    tau0: Vec<T>,
    u0: T,
    sensitivity_norm: T,
}

impl<'a, T: Real> RootTrackedField<'a, T> {
    pub fn new(
        solution: &'a ImplicitSolution<T>,
        t: T,
        x: &[T],
        root: &Root<T>,
        cfg: &NewtonConfig<T>,
    ) -> Result<Self, FieldError> {
        let m = solution.sensitivity(t, x, &root.tau)?;
        let cols = solution.n() + 1;
        let sensitivity_norm = m
            .chunks(cols)
            .map(|row| row.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max);
        Ok(Self {
            solution,
            cfg: cfg.single_seed(root.tau.clone()),
            t0: t,
            x0: x.to_vec(),
            tau0: root.tau.clone(),
            u0: root.u,
            sensitivity_norm,
        })
    }

    /// Converged `τ` at `(t, x)` on the tracked sheet.
    pub fn tau_at(&self, t: T, x: &[T]) -> Result<Vec<T>, FieldError> {
        // a stencil node without a root next to the tracked one means the sheet ended
        let root = self
            .solution
            .solve_from(t, x, &self.tau0, &self.cfg)
            .map_err(|_| FieldError::BranchJump { moved: f64::INFINITY, allowed: self.allowed(t, x).as_f64() })?;
        let moved = root.tau.iter().zip(&self.tau0).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max);
        let allowed = self.allowed(t, x);
        if moved > allowed {
            return Err(FieldError::BranchJump { moved: moved.as_f64(), allowed: allowed.as_f64() });
        }
        Ok(root.tau)
    }

    fn allowed(&self, t: T, x: &[T]) -> T {
        let dist = x
            .iter()
            .zip(&self.x0)
            .map(|(&a, &b)| (a - b).abs())
            .fold((t - self.t0).abs(), T::max);
        let slack = T::lit(1e-9) * (T::one() + norm_inf(&self.tau0));
        T::lit(10.0) * T::lit(2.0) * dist * self.sensitivity_norm + slack
    }
}

impl<T: Real> Field<T> for RootTrackedField<'_, T> {
    fn dim(&self) -> usize {
        self.solution.n()
    }

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError> {
        if t == self.t0 && x == self.x0.as_slice() {
            return Ok(self.u0);
        }
        let tau = self.tau_at(t, x)?;
        Ok(self.solution.stationarity(t, x, &tau)?.u)
    }
}

/// Rounds a positive step down to a power of two so that `x ± h` carries
/// no representation error relative to `h`.
fn pow2_step<T: Real>(h: T) -> T {
    T::lit(2.0).powi(h.log2().floor().to_i32().unwrap_or(0))
}

/// Default first-derivative step for coordinate value `c`.
pub fn jet_step<T: Real>(c: T) -> T {
    pow2_step(c.abs().max(T::one()) * T::epsilon().cbrt())
}

/// Default second-derivative step for coordinate value `c`.
pub fn hessian_step<T: Real>(c: T) -> T {
    pow2_step(c.abs().max(T::one()) * T::epsilon().sqrt().sqrt())
}

/// First-order jet by central differences with [`jet_step`].
pub fn fd_jet<T: Real, F: Field<T> + ?Sized>(field: &F, t: T, x: &[T]) -> Result<JetPoint<T>, FieldError> {
    let n = field.dim();
    let u = field.value(t, x)?;
    let zero = vec![T::zero(); n];
    let two = T::lit(2.0);
    let ht = jet_step(t);
    let u_t = (field.increment(t, x, ht, &zero)? - field.increment(t, x, -ht, &zero)?) / (two * ht);
    let mut u_x = Vec::with_capacity(n);
    let mut dx = zero.clone();
    for a in 0..n {
        let h = jet_step(x[a]);
        dx[a] = h;
        let fwd = field.increment(t, x, T::zero(), &dx)?;
        dx[a] = -h;
        let bwd = field.increment(t, x, T::zero(), &dx)?;
        dx[a] = T::zero();
        u_x.push((fwd - bwd) / (two * h));
    }
    Ok(JetPoint { t, x: x.to_vec(), u, u_t, u_x })
}

/// `u_x·u_x − F(u_t)`; general families are evaluated at `(t, u, u_t)`.
pub fn residual<T: Real>(family: &FFamily<T>, jet: &JetPoint<T>) -> Result<T, FuncError> {
    let f = if family.is_general() {
        family.f_eval_full(jet.t, jet.u, jet.u_t)?.0
    } else {
        family.f_eval(jet.u_t)?.0
    };
    Ok(jet.u_x.iter().map(|&v| v * v).sum::<T>() - f)
}

/// Space Hessian `∂²u/∂x_a∂x_b` by central differences, row-major.
pub fn space_hessian<T: Real, F: Field<T> + ?Sized>(field: &F, t: T, x: &[T]) -> Result<Vec<T>, FieldError> {
    let n = field.dim();
    let h: Vec<T> = x.iter().map(|&c| hessian_step(c)).collect();
    let mut dx = vec![T::zero(); n];
    let mut inc = |pairs: &[(usize, T)]| {
        for &(a, v) in pairs {
            dx[a] = v;
        }
        let r = field.increment(t, x, T::zero(), &dx);
        for &(a, _) in pairs {
            dx[a] = T::zero();
        }
        r
    };
    let mut hess = vec![T::zero(); n * n];
    for a in 0..n {
        let d = (inc(&[(a, h[a])])? + inc(&[(a, -h[a])])?) / (h[a] * h[a]);
        hess[a * n + a] = d;
        for b in a + 1..n {
            let (ha, hb) = (h[a], h[b]);
            let s = inc(&[(a, ha), (b, hb)])? - inc(&[(a, ha), (b, -hb)])? - inc(&[(a, -ha), (b, hb)])?
                + inc(&[(a, -ha), (b, -hb)])?;
            let v = s / (T::lit(4.0) * ha * hb);
            hess[a * n + b] = v;
            hess[b * n + a] = v;
        }
    }
    Ok(hess)
}

/// Numerical rank of the space Hessian: singular values above
/// `tol_rel · max(σ_max, 1)`.
pub fn hessian_rank<T: Real, F: Field<T> + ?Sized>(
    field: &F,
    t: T,
    x: &[T],
    tol_rel: T,
) -> Result<(usize, Vec<T>), FieldError> {
    let n = field.dim();
    let hess = space_hessian(field, t, x)?;
    let sv = singular_values(&hess, n, n);
    let floor = sv.first().copied().unwrap_or(T::zero()).max(T::one());
    let rank = sv.iter().filter(|&&s| s > tol_rel * floor).count();
    Ok((rank, sv))
}

pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Verification summary for one root.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T> {
    /// Closed-form jet at the root.
    pub point: JetPoint<T>,
    pub residual_closed: T,
    pub residual_fd: T,
    pub jet_mismatch: T,
    pub hessian_rank: usize,
    pub singular_values: Vec<T>,
}

/// Checks one converged root against finite differences of its own sheet.
pub fn verify_root<T: Real>(
    solution: &ImplicitSolution<T>,
    t: T,
    x: &[T],
    root: &Root<T>,
    cfg: &NewtonConfig<T>,
    tol_rel: T,
) -> Result<ResidualReport<T>, FieldError> {
    let closed = solution.jet_closed_form(t, x, root);
    let field = RootTrackedField::new(solution, t, x, root, cfg)?;
    let fd = fd_jet(&field, t, x)?;
    let (hessian_rank, singular_values) = hessian_rank(&field, t, x, tol_rel)?;
    let family = solution.family();
    Ok(ResidualReport {
        residual_closed: residual(family, &closed)?.abs(),
        residual_fd: residual(family, &fd)?.abs(),
        jet_mismatch: closed.derivative_mismatch(&fd),
        point: closed,
        hessian_rank,
        singular_values,
    })
}

/// The same report for a linear solution, whose jet is exact.
pub fn verify_linear<T: Real>(
    family: &FFamily<T>,
    solution: &LinearSolution<T>,
    t: T,
    x: &[T],
    tol_rel: T,
) -> Result<ResidualReport<T>, FieldError> {
    let closed = solution.jet(t, x);
    let fd = fd_jet(solution, t, x)?;
    let (hessian_rank, singular_values) = hessian_rank(solution, t, x, tol_rel)?;
    Ok(ResidualReport {
        residual_closed: residual(family, &closed)?.abs(),
        residual_fd: residual(family, &fd)?.abs(),
        jet_mismatch: closed.derivative_mismatch(&fd),
        point: closed,
        hessian_rank,
        singular_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{BranchSelector, PsiFunction, WFunctions};
    use crate::solutions::linear_solution;
    use approx::assert_abs_diff_eq;

    fn jet(u_t: f64, u_x: &[f64]) -> JetPoint<f64> {
        JetPoint { t: 0.0, x: vec![0.0; u_x.len()], u: 0.0, u_t, u_x: u_x.to_vec() }
    }

    fn hj_closed() -> FnField<impl Fn(f64, &[f64]) -> Result<f64, FieldError>> {
        FnField::new(2, |t: f64, x: &[f64]| Ok(-(x[0] * x[0] + x[1] * x[1]) / (4.0 * t)))
    }

    #[test]
    fn residual_examples() {
        let e = FFamily::exp();
        assert_abs_diff_eq!(residual(&e, &jet(2f64.ln(), &[1.0, 1.0])).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(residual(&e, &jet(0.0, &[1.0, 1.0])).unwrap(), 1.0);
        let q = FFamily::quadratic(1, 1).unwrap();
        assert_eq!(residual(&q, &jet(0.0, &[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn fd_jet_of_linear_and_closed_form() {
        let l = linear_solution(&FFamily::<f64>::exp(), 0.0, &[1.0, 0.0], 0.0).unwrap();
        let j = fd_jet(&l, 0.4, &[3.0, -7.0]).unwrap();
        assert!(j.u_t.abs() < 1e-10);
        assert!((j.u_x[0] - 1.0).abs() < 1e-10 && j.u_x[1].abs() < 1e-10);

        let j = fd_jet(&hj_closed(), 1.0, &[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(j.u_t, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(j.u_x[0], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(j.u_x[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn ranks() {
        let l = linear_solution(&FFamily::quadratic(1, 1).unwrap(), 0.3, &[0.6, -0.8], 2.0).unwrap();
        let (rank, sv) = hessian_rank(&l, 0.9, &[1.5, -2.5], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 0);
        assert!(sv.iter().all(|&s| s <= 1e-8));

        let (rank, sv) = hessian_rank(&hj_closed(), 1.0, &[0.3, -0.4], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 2);
        assert_abs_diff_eq!(sv[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sv[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn step_rules_are_powers_of_two() {
        let h = jet_step(3.0f64);
        assert_eq!(h.log2().fract(), 0.0);
        assert!(h <= 3.0 * f64::EPSILON.cbrt() && h > 1.5 * f64::EPSILON.cbrt());
        assert_eq!(hessian_step(0.1f64), hessian_step(1.0f64));
    }

    #[test]
    fn tracked_root_report() {
        let sol = ImplicitSolution::full_rank(
            1,
            FFamily::exp(),
            BranchSelector::Principal,
            PsiFunction::parse("0.5*tau1^2", 1).unwrap(),
        )
        .unwrap();
        let cfg = NewtonConfig::default();
        let res = sol.evaluate(0.5, &[3.0], &cfg).unwrap();
        for root in &res.roots {
            let rep = verify_root(&sol, 0.5, &[3.0], root, &cfg, DEFAULT_RANK_TOL).unwrap();
            assert!(rep.residual_closed <= 1e-10);
            assert!(rep.residual_fd <= 1e-4);
            assert!(rep.jet_mismatch <= 1e-5);
            assert_eq!(rep.hessian_rank, 1);
        }
    }

    #[test]
    fn constant_w_drops_rank() {
        let f = FFamily::custom_ut("ut", Some("sigma"), None).unwrap();
        let sol = ImplicitSolution::new(
            2,
            1,
            f,
            BranchSelector::Principal,
            PsiFunction::parse("0.5*tau1^2", 1).unwrap(),
            WFunctions::parse(&["1.5"], 1).unwrap(),
        )
        .unwrap();
        let cfg = NewtonConfig::default();
        let root = &sol.evaluate(0.6, &[0.8, -1.0], &cfg).unwrap().roots[0];
        let rep = verify_root(&sol, 0.6, &[0.8, -1.0], root, &cfg, DEFAULT_RANK_TOL).unwrap();
        assert!(rep.hessian_rank <= 1);
    }

    #[test]
    fn stencil_across_caustic_is_a_branch_jump() {
        // G = x − 1/τ − τ at t = 1/2; the two sheets merge at x = 2, τ = 1
        let sol = ImplicitSolution::full_rank(
            1,
            FFamily::exp(),
            BranchSelector::Principal,
            PsiFunction::parse("0.5*tau1^2", 1).unwrap(),
        )
        .unwrap();
        let cfg = NewtonConfig::default();
        let x = 2.0 + 1e-12;
        let root = sol.evaluate(0.5, &[x], &cfg).unwrap().roots[0].clone();
        let field = RootTrackedField::new(&sol, 0.5, &[x], &root, &cfg).unwrap();
        assert!(matches!(fd_jet(&field, 0.5, &[x]), Err(FieldError::BranchJump { .. })));
    }
}
