//! Linear (rank 0) solutions and the implicit k-parameter solutions
//!
//! ```text
//! u = -x_b τ_b + t Φ(σ) + w_m(τ) x_{k+m} + Ψ(τ),   σ = τ·τ + w·w,
//! ```
//!
//! where `τ = (τ_1..τ_k)` is eliminated point-wise through the stationarity
//! system `∂u/∂τ = 0`. For `k = n` there are no `w` terms.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::DualScalar;
use crate::funcs::{BranchSelector, FFamily, FuncError, InverseBranch, PsiFunction, WFunctions};
use crate::linalg::{cond2, lu_solve, norm_inf, singular_values};
use crate::verify::JetPoint;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("F({c0}) = {value} is negative: no real linear solution")]
    NegativeF { c0: f64, value: f64 },
    #[error("no seed converged to a stationary point")]
    NoRoot,
    #[error("stationarity Jacobian is near-singular (cond {cond:.3e}, residual {residual:.3e})")]
    SingularJacobian { cond: f64, residual: f64 },
    #[error(transparent)]
    Domain(#[from] FuncError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// `u = c0 t + c·x + c_const` with `c·c = F(c0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution<T> {
    pub c0: T,
    pub c: Vec<T>,
    pub c_const: T,
}

/// Builds the linear solution with `c = √F(c0) · direction`.
pub fn linear_solution<T: Real>(
    family: &FFamily<T>,
    c0: T,
    direction: &[T],
    c_const: T,
) -> Result<LinearSolution<T>, SolveError> {
    let norm = direction.iter().map(|&d| d * d).sum::<T>().sqrt();
    if direction.is_empty() || (norm - T::one()).abs() > T::lit(1e-12) {
        return Err(SolveError::Invalid(format!("direction must be a unit vector, |d| = {norm}")));
    }
    let (f, _) = family.f_eval(c0)?;
    if f < T::zero() {
        return Err(SolveError::NegativeF { c0: c0.as_f64(), value: f.as_f64() });
    }
    let r = f.sqrt();
    Ok(LinearSolution { c0, c: direction.iter().map(|&d| r * d).collect(), c_const })
}

impl<T: Real> LinearSolution<T> {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, t: T, x: &[T]) -> T {
        self.c0 * t + self.c.iter().zip(x).map(|(&c, &x)| c * x).sum::<T>() + self.c_const
    }

    pub fn jet(&self, t: T, x: &[T]) -> JetPoint<T> {
        JetPoint { t, x: x.to_vec(), u: self.value(t, x), u_t: self.c0, u_x: self.c.clone() }
    }
}

/// `(u, σ, w)` as duals in `τ`.
type UDual<T> = (DualScalar<T>, DualScalar<T>, Vec<DualScalar<T>>);

/// Newton and seeding parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig<T> {
    /// Convergence threshold on `‖G‖∞`.
    pub tol: T,
    pub max_iter: usize,
    /// Backtracking step factor.
    pub damping: T,
    pub max_halvings: usize,
    /// Extra start vectors, each of length `k`.
    pub seeds: Vec<Vec<T>>,
    pub jacobian_cond_max: T,
    /// Whether to add the automatic seeds (t = 0 solve, radial scalings, random perturbations).
    pub default_seeds: bool,
    pub random_seeds: usize,
    /// Random seeds are drawn from `τ0 + perturbation·(1 + ‖τ0‖∞)·U[-1, 1]^k`.
    pub perturbation: T,
    /// Deterministic seeds `f·τ0`.
    pub scale_factors: Vec<T>,
    pub rng_seed: u64,
    /// Converged roots closer than this (∞-norm in τ) are merged.
    pub dedup_tol: T,
    /// A singular Jacobian counts as a caustic only if `‖G‖∞` is below this.
    pub caustic_residual: T,
    /// If nonzero, also march `t` from 0 in this many steps and use the result as a seed.
    pub continuation_steps: usize,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            max_iter: 50,
            damping: T::lit(0.5),
            max_halvings: 30,
            seeds: Vec::new(),
            jacobian_cond_max: T::lit(1e12),
            default_seeds: true,
            random_seeds: 8,
            perturbation: T::one(),
            scale_factors: [0.125, 0.25, 0.5, 2.0].iter().map(|&f| T::lit(f)).collect(),
            rng_seed: 0x5eed,
            dedup_tol: T::lit(1e-8),
            caustic_residual: T::lit(1e-6),
            continuation_steps: 0,
        }
    }
}

impl<T: Real> NewtonConfig<T> {
    // Negated comparisons so that NaN settings are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > T::zero()) {
            return Err(SolveError::Invalid("newton tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SolveError::Invalid("newton max_iter must be at least 1".into()));
        }
        if !(self.damping > T::zero() && self.damping < T::one()) {
            return Err(SolveError::Invalid("newton damping must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// A configuration that only runs the given seed.
    pub fn single_seed(&self, seed: Vec<T>) -> Self {
        Self { seeds: vec![seed], default_seeds: false, continuation_steps: 0, ..self.clone() }
    }
}

/// A converged stationary point.
#[derive(Debug, Clone, PartialEq)]
pub struct Root<T> {
    pub tau: Vec<T>,
    pub u: T,
    pub sigma: T,
    /// `Φ(σ)`, the closed-form time derivative.
    pub u_t: T,
    /// `w_m(τ)` values.
    pub w: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian_cond: T,
    /// `‖G‖₂ / σ_min(J)`, a first-order estimate of the distance to the exact root.
    pub error_bound: T,
}

/// Why a single Newton run did not produce a root.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedFailure<T> {
    MaxIter { residual: T },
    NoDescent { residual: T },
    Singular { cond: T, residual: T },
    Domain(FuncError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult<T> {
    /// Distinct converged roots, sorted by `u` ascending.
    pub roots: Vec<Root<T>>,
    pub failures: Vec<SeedFailure<T>>,
}

/// Residual, Jacobian and auxiliary values of the stationarity system at one `τ`.
#[derive(Debug, Clone)]
pub struct Stationarity<T> {
    /// `G_b = -∂u/∂τ_b`.
    pub g: Vec<T>,
    /// `∂G/∂τ`, row-major `k × k`.
    pub jac: Vec<T>,
    pub sigma: T,
    pub u: T,
    pub w: Vec<T>,
    /// `∂w_m/∂τ_b`, row-major `(n-k) × k`.
    pub w_jac: Vec<T>,
}

/// The implicit rank-k general solution.
#[derive(Debug, Clone)]
pub struct ImplicitSolution<T> {
    n: usize,
    k: usize,
    family: FFamily<T>,
    branch: InverseBranch<T>,
    psi: PsiFunction,
    w: WFunctions,
}

impl<T: Real> ImplicitSolution<T> {
    pub fn new(
        n: usize,
        k: usize,
        family: FFamily<T>,
        selector: BranchSelector,
        psi: PsiFunction,
        w: WFunctions,
    ) -> Result<Self, SolveError> {
        if n == 0 {
            return Err(SolveError::Invalid("n must be at least 1".into()));
        }
        if k == 0 {
            return Err(SolveError::Invalid("k must be at least 1".into()));
        }
        if k > n {
            return Err(SolveError::Invalid("k exceeds n".into()));
        }
        if family.is_general() {
            return Err(SolveError::Invalid("a general F(t, u, u_t) has no implicit solution".into()));
        }
        if psi.arity() != k {
            return Err(SolveError::Invalid(format!("psi takes {} parameters, expected {k}", psi.arity())));
        }
        if w.len() != n - k {
            return Err(SolveError::Invalid(format!("expected {} w functions, got {}", n - k, w.len())));
        }
        if w.exprs().iter().any(|e| e.vars().len() != k) {
            return Err(SolveError::Invalid(format!("w functions must take {k} parameters")));
        }
        let branch = family.branch(selector)?;
        Ok(Self { n, k, family, branch, psi, w })
    }

    /// Rank-n solution (no `w` terms).
    pub fn full_rank(n: usize, family: FFamily<T>, selector: BranchSelector, psi: PsiFunction) -> Result<Self, SolveError> {
        Self::new(n, n, family, selector, psi, WFunctions::default())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn family(&self) -> &FFamily<T> {
        &self.family
    }

    pub fn branch(&self) -> &InverseBranch<T> {
        &self.branch
    }

    fn check_point(&self, x: &[T], tau: &[T]) -> Result<(), SolveError> {
        if x.len() != self.n {
            return Err(SolveError::Invalid(format!("point has {} space coordinates, expected {}", x.len(), self.n)));
        }
        if tau.len() != self.k {
            return Err(SolveError::Invalid(format!("τ has {} entries, expected {}", tau.len(), self.k)));
        }
        Ok(())
    }

    /// `u` as a dual number in `τ`, plus the auxiliary values. At `t = 0`
    /// the `Φ` term vanishes identically and is not evaluated.
    fn u_dual(&self, t: T, x: &[T], tau: &[T]) -> Result<UDual<T>, SolveError> {
        let k = self.k;
        let taus = DualScalar::seed(tau);
        let ws = self
            .w
            .exprs()
            .iter()
            .map(|e| e.eval_dual(&taus))
            .collect::<Result<Vec<_>, _>>()
            .map_err(FuncError::from)?;
        let mut sigma = DualScalar::constant(T::zero(), k);
        for v in taus.iter().chain(&ws) {
            sigma = &sigma + &(v * v);
        }
        let mut u = self.psi.expr().eval_dual(&taus).map_err(FuncError::from)?;
        for (b, tb) in taus.iter().enumerate() {
            u = u.add_scaled(tb, -x[b]);
        }
        for (m, wm) in ws.iter().enumerate() {
            u = u.add_scaled(wm, x[k + m]);
        }
        if t != T::zero() {
            let phi = self.family.phi_dual(&self.branch, &sigma)?;
            u = u.add_scaled(&phi, t);
        }
        Ok((u, sigma, ws))
    }

    /// Stationarity residual `G(τ)` and its exact Jacobian.
    pub fn stationarity(&self, t: T, x: &[T], tau: &[T]) -> Result<Stationarity<T>, SolveError> {
        self.check_point(x, tau)?;
        let (u, sigma, ws) = self.u_dual(t, x, tau)?;
        let k = self.k;
        Ok(Stationarity {
            g: u.grad().iter().map(|&g| -g).collect(),
            jac: u.hess().iter().map(|&h| -h).collect(),
            sigma: sigma.value(),
            u: u.value(),
            w: ws.iter().map(DualScalar::value).collect(),
            w_jac: ws.iter().flat_map(|w| w.grad()[..k].to_vec()).collect(),
        })
    }

    /// `dτ/d(t, x)` along the root through `tau`, row-major `k × (n + 1)`
    /// with the time column first.
    pub fn sensitivity(&self, t: T, x: &[T], tau: &[T]) -> Result<Vec<T>, SolveError> {
        let st = self.stationarity(t, x, tau)?;
        let (k, n) = (self.k, self.n);
        // ∂G/∂t = -∂Φ(σ)/∂τ
        let taus = DualScalar::seed(tau);
        let ws = self
            .w
            .exprs()
            .iter()
            .map(|e| e.eval_dual(&taus))
            .collect::<Result<Vec<_>, _>>()
            .map_err(FuncError::from)?;
        let mut sigma = DualScalar::constant(T::zero(), k);
        for v in taus.iter().chain(&ws) {
            sigma = &sigma + &(v * v);
        }
        let phi = self.family.phi_dual(&self.branch, &sigma)?;
        let mut out = vec![T::zero(); k * (n + 1)];
        for col in 0..=n {
            let rhs: Vec<T> = (0..k)
                .map(|b| {
                    let dg = if col == 0 {
                        -phi.grad()[b]
                    } else if col - 1 < k {
                        if col - 1 == b { T::one() } else { T::zero() }
                    } else {
                        -st.w_jac[(col - 1 - k) * k + b]
                    };
                    -dg
                })
                .collect();
            let d = lu_solve(&st.jac, &rhs).ok_or(SolveError::SingularJacobian {
                cond: f64::INFINITY,
                residual: norm_inf(&st.g).as_f64(),
            })?;
            for b in 0..k {
                out[b * (n + 1) + col] = d[b];
            }
        }
        Ok(out)
    }

    /// Damped Newton from one seed.
    pub fn solve_from(&self, t: T, x: &[T], seed: &[T], cfg: &NewtonConfig<T>) -> Result<Root<T>, SeedFailure<T>> {
        let mut tau = seed.to_vec();
        let mut st = self.stationarity(t, x, &tau).map_err(seed_domain)?;
        let small = T::lit(1e-4);
        for iter in 0..=cfg.max_iter {
            let residual = norm_inf(&st.g);
            if !residual.is_finite() {
                return Err(SeedFailure::NoDescent { residual });
            }
            if residual <= cfg.tol {
                return self.finish(st, tau, iter);
            }
            if iter == cfg.max_iter {
                return Err(SeedFailure::MaxIter { residual });
            }
            let cond = cond2(&st.jac, self.k);
            if cond.is_nan() || cond > cfg.jacobian_cond_max {
                return Err(SeedFailure::Singular { cond, residual });
            }
            let rhs: Vec<T> = st.g.iter().map(|&g| -g).collect();
            let step = lu_solve(&st.jac, &rhs).ok_or(SeedFailure::Singular { cond, residual })?;
            let norm2 = st.g.iter().map(|&g| g * g).sum::<T>().sqrt();
            let mut lambda = T::one();
            let mut accepted = None;
            let mut last_domain = None;
            for _ in 0..=cfg.max_halvings {
                let trial: Vec<T> = tau.iter().zip(&step).map(|(&a, &d)| a + lambda * d).collect();
                match self.stationarity(t, x, &trial) {
                    Ok(next) => {
                        let n2 = next.g.iter().map(|&g| g * g).sum::<T>().sqrt();
                        if n2 <= (T::one() - small * lambda) * norm2 {
                            accepted = Some((trial, next));
                            break;
                        }
                        last_domain = None;
                    }
                    Err(e) => last_domain = Some(e),
                }
                lambda = lambda * cfg.damping;
            }
            match (accepted, last_domain) {
                (Some((trial, next)), _) => {
                    tau = trial;
                    st = next;
                }
                (None, Some(e)) => return Err(seed_domain(e)),
                (None, None) => return Err(SeedFailure::NoDescent { residual }),
            }
        }
        unreachable!("loop returns on the last iteration")
    }

    fn finish(&self, st: Stationarity<T>, tau: Vec<T>, iterations: usize) -> Result<Root<T>, SeedFailure<T>> {
        let (u_t, _) = self.family.phi_eval(&self.branch, st.sigma).map_err(SeedFailure::Domain)?;
        let sv = singular_values(&st.jac, self.k, self.k);
        let (hi, lo) = (sv[0], sv[self.k - 1]);
        let residual = st.g.iter().map(|&g| g * g).sum::<T>().sqrt();
        let (jacobian_cond, error_bound) = if lo > T::zero() {
            (hi / lo, residual / lo)
        } else {
            (T::infinity(), if residual == T::zero() { T::zero() } else { T::infinity() })
        };
        Ok(Root {
            jacobian_cond,
            error_bound,
            tau,
            u: st.u,
            sigma: st.sigma,
            u_t,
            w: st.w,
            iterations,
            converged: true,
        })
    }

    /// Root of the `t = 0` system started from `τ = x_{1..k}`, falling back to that start.
    fn initial_seed(&self, x: &[T], cfg: &NewtonConfig<T>) -> Vec<T> {
        let start = x[..self.k].to_vec();
        match self.solve_from(T::zero(), x, &start, cfg) {
            Ok(r) => r.tau,
            Err(SeedFailure::Domain(_)) => {
                // the t = 0 root may sit outside Φ's domain; only its τ is needed
                self.t0_tau(x, &start, cfg).unwrap_or(start)
            }
            Err(_) => start,
        }
    }

    fn t0_tau(&self, x: &[T], start: &[T], cfg: &NewtonConfig<T>) -> Option<Vec<T>> {
        let mut tau = start.to_vec();
        for _ in 0..cfg.max_iter {
            let st = self.stationarity(T::zero(), x, &tau).ok()?;
            if norm_inf(&st.g) <= cfg.tol {
                return Some(tau);
            }
            let rhs: Vec<T> = st.g.iter().map(|&g| -g).collect();
            let step = lu_solve(&st.jac, &rhs)?;
            tau.iter_mut().zip(step).for_each(|(a, d)| *a = *a + d);
        }
        None
    }

    /// March `t` from 0 to the target in `steps` equal increments, reusing
    /// the previous root as the next seed.
    pub fn continue_in_time(&self, t: T, x: &[T], cfg: &NewtonConfig<T>, steps: usize) -> Result<Root<T>, SeedFailure<T>> {
        let mut tau = self.initial_seed(x, cfg);
        let steps = steps.max(1);
        let mut last = None;
        for i in 1..=steps {
            let ti = t * T::from_usize(i).unwrap() / T::from_usize(steps).unwrap();
            let root = self.solve_from(ti, x, &tau, cfg)?;
            tau = root.tau.clone();
            last = Some(root);
        }
        Ok(last.expect("at least one step"))
    }

    fn seed_set(&self, t: T, x: &[T], cfg: &NewtonConfig<T>) -> Vec<Vec<T>> {
        let mut seeds = Vec::new();
        if cfg.default_seeds {
            let tau0 = self.initial_seed(x, cfg);
            seeds.push(tau0.clone());
            for &f in &cfg.scale_factors {
                seeds.push(tau0.iter().map(|&v| f * v).collect());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let radius = cfg.perturbation * (T::one() + norm_inf(&tau0));
            for _ in 0..cfg.random_seeds {
                seeds.push(
                    tau0.iter()
                        .map(|&v| v + radius * T::lit(rng.gen_range(-1.0..=1.0)))
                        .collect(),
                );
            }
        }
        if cfg.continuation_steps > 0 {
            if let Ok(r) = self.continue_in_time(t, x, cfg, cfg.continuation_steps) {
                seeds.push(r.tau);
            }
        }
        seeds.extend(cfg.seeds.iter().cloned());
        seeds
    }

    /// All distinct stationary points at `(t, x)`, sorted by `u`.
    pub fn evaluate(&self, t: T, x: &[T], cfg: &NewtonConfig<T>) -> Result<EvalResult<T>, SolveError> {
        cfg.validate()?;
        self.check_point(x, &vec![T::zero(); self.k])?;
        if let Some(bad) = cfg.seeds.iter().find(|s| s.len() != self.k) {
            return Err(SolveError::Invalid(format!("seed of length {} for k = {}", bad.len(), self.k)));
        }
        let seeds = self.seed_set(t, x, cfg);
        if seeds.is_empty() {
            return Err(SolveError::Invalid("no seeds configured".into()));
        }
        let mut roots: Vec<Root<T>> = Vec::new();
        let mut failures = Vec::new();
        for seed in &seeds {
            match self.solve_from(t, x, seed, cfg) {
                Ok(root) => {
                    // Near a double root the residual shrinks quadratically with the
                    // distance, so runs stall at visibly different points; the error
                    // bounds cover that spread.
                    let dup = roots.iter().any(|r| {
                        let radius = cfg.dedup_tol + T::lit(4.0) * (r.error_bound + root.error_bound);
                        r.tau.iter().zip(&root.tau).all(|(&a, &b)| (a - b).abs() <= radius)
                    });
                    if !dup {
                        roots.push(root);
                    }
                }
                Err(f) => failures.push(f),
            }
        }
        if roots.is_empty() {
            return Err(classify_failures(&failures, cfg));
        }
        roots.sort_by(|a, b| {
            a.u.partial_cmp(&b.u).unwrap_or(Ordering::Equal).then_with(|| {
                a.tau
                    .iter()
                    .zip(&b.tau)
                    .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
        });
        Ok(EvalResult { roots, failures })
    }

    /// Closed-form first-order jet on a converged root:
    /// `u_b = -τ_b`, `u_{k+m} = w_m(τ)`, `u_t = Φ(σ)`.
    pub fn jet_closed_form(&self, t: T, x: &[T], root: &Root<T>) -> JetPoint<T> {
        let u_x = root.tau.iter().map(|&v| -v).chain(root.w.iter().copied()).collect();
        JetPoint { t, x: x.to_vec(), u: root.u, u_t: root.u_t, u_x }
    }
}

fn seed_domain<T>(e: SolveError) -> SeedFailure<T> {
    match e {
        SolveError::Domain(f) => SeedFailure::Domain(f),
        other => SeedFailure::Domain(FuncError::InvalidParameter(other.to_string())),
    }
}

fn classify_failures<T: Real>(failures: &[SeedFailure<T>], cfg: &NewtonConfig<T>) -> SolveError {
    let caustic = failures.iter().find_map(|f| match f {
        SeedFailure::Singular { cond, residual } if *residual <= cfg.caustic_residual => {
            Some(SolveError::SingularJacobian { cond: cond.as_f64(), residual: residual.as_f64() })
        }
        _ => None,
    });
    if let Some(e) = caustic {
        return e;
    }
    if !failures.is_empty() && failures.iter().all(|f| matches!(f, SeedFailure::Domain(_))) {
        if let Some(SeedFailure::Domain(e)) = failures.first() {
            return SolveError::Domain(e.clone());
        }
    }
    SolveError::NoRoot
}
