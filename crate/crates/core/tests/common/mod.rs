#![allow(dead_code)]

use eikon_core::{Expr, Family, Newton, PsiFunction, Solution, BranchSelector, WFunctions};
use rand::Rng;

pub const VARS: [&str; 3] = ["v1", "v2", "v3"];

/// Random expression source over `v1 … v3`, depth at most `depth`.
pub fn random_source<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 => format!("{:.3}", rng.gen_range(-2.0..2.0)),
            1 => format!("{}", rng.gen_range(1..5)),
            _ => VARS[rng.gen_range(0..VARS.len())].to_string(),
        };
    }
    let a = random_source(rng, depth - 1);
    match rng.gen_range(0..14) {
        0 => format!("{a} + {}", random_source(rng, depth - 1)),
        1 => format!("({a}) - ({})", random_source(rng, depth - 1)),
        2 => format!("({a}) * ({})", random_source(rng, depth - 1)),
        3 => format!("({a}) / ({})", random_source(rng, depth - 1)),
        4 => format!("({a})^{}", rng.gen_range(2..4)),
        5 => format!("({a})^(-1)"),
        6 => format!("(1 + ({a})^2)^{:.2}", rng.gen_range(0.1..1.5)),
        7 => format!("sin({a})"),
        8 => format!("cos({a})"),
        9 => format!("exp({a})"),
        10 => format!("ln({a})"),
        11 => format!("sqrt({a})"),
        12 => format!("tanh({a})"),
        _ => format!("-({a})"),
    }
}

/// An expression with a point where it is defined and moderately sized.
pub struct Sample {
    pub source: String,
    pub expr: Expr,
    pub point: Vec<f64>,
}

pub fn random_sample<R: Rng>(rng: &mut R) -> Sample {
    loop {
        let source = random_source(rng, 4);
        let expr = Expr::parse(&source, &VARS).expect("generated source parses");
        let point: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let Ok(d) = expr.eval_jet2(&point) else { continue };
        let tame = std::iter::once(d.value())
            .chain(d.grad().iter().copied())
            .chain(d.hess().iter().copied())
            .all(|v| v.abs() <= 1e3);
        if tame {
            return Sample { source, expr, point };
        }
    }
}

/// Central-difference gradient and Hessian of the plain evaluator.
pub fn fd_derivatives(expr: &Expr, point: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = point.len();
    let f = |p: &[f64]| expr.eval(p).ok();
    let h1 = f64::EPSILON.cbrt();
    let h2 = f64::EPSILON.powf(0.25);
    let shift = |pairs: &[(usize, f64)]| {
        let mut p = point.to_vec();
        for &(i, d) in pairs {
            p[i] += d;
        }
        p
    };
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        grad.push((f(&shift(&[(i, h1)]))? - f(&shift(&[(i, -h1)]))?) / (2.0 * h1));
    }
    let f0 = f(point)?;
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        hess[i * n + i] = (f(&shift(&[(i, h2)]))? - 2.0 * f0 + f(&shift(&[(i, -h2)]))?) / (h2 * h2);
        for j in i + 1..n {
            let v = (f(&shift(&[(i, h2), (j, h2)]))? - f(&shift(&[(i, h2), (j, -h2)]))?
                - f(&shift(&[(i, -h2), (j, h2)]))?
                + f(&shift(&[(i, -h2), (j, -h2)]))?)
                / (4.0 * h2 * h2);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    Some((grad, hess))
}

/// Largest error scaled by `max(1, |reference|)`.
pub fn scaled_error(exact: &[f64], reference: &[f64]) -> f64 {
    exact
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Evenly spaced values, `steps` of them, including both ends.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

/// Cartesian product of one axis repeated `n` times.
pub fn grid(axis: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| axis.iter().map(move |&v| {
                let mut q = p.clone();
                q.push(v);
                q
            }))
            .collect();
    }
    out
}

pub fn hamilton_jacobi_family() -> Family {
    Family::custom_ut("ut", Some("sigma"), None).unwrap()
}

pub fn hamilton_jacobi(n: usize) -> Solution {
    Solution::full_rank(n, hamilton_jacobi_family(), BranchSelector::Principal, PsiFunction::parse("0", n).unwrap()).unwrap()
}

pub fn half_square(k: usize) -> PsiFunction {
    let terms: Vec<String> = (1..=k).map(|i| format!("tau{i}^2")).collect();
    PsiFunction::parse(&format!("0.5*({})", terms.join(" + ")), k).unwrap()
}

pub fn exp_solution(n: usize) -> Solution {
    Solution::full_rank(n, Family::exp(), BranchSelector::Principal, half_square(n)).unwrap()
}

pub fn constant_w_solution() -> Solution {
    Solution::new(
        2,
        1,
        hamilton_jacobi_family(),
        BranchSelector::Principal,
        half_square(1),
        WFunctions::parse(&["0.7"], 1).unwrap(),
    )
    .unwrap()
}

pub fn newton() -> Newton {
    Newton::default()
}
