use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::Real;

/// A value carrying its gradient and Hessian with respect to `nvars`
/// independent variables.
///
/// The Hessian is stored row-major and is always built by computing the
/// upper triangle and mirroring it, so `hess[i][j] == hess[j][i]` holds
/// bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct DualScalar<T> {
    value: T,
    grad: Vec<T>,
    hess: Vec<T>,
}

impl<T: Real> DualScalar<T> {
    pub fn constant(value: T, nvars: usize) -> Self {
        Self {
            value,
            grad: vec![T::zero(); nvars],
            hess: vec![T::zero(); nvars * nvars],
        }
    }

    /// The `index`-th independent variable at `value`.
    pub fn variable(value: T, index: usize, nvars: usize) -> Self {
        assert!(index < nvars, "variable index {index} out of range for {nvars} variables");
        let mut d = Self::constant(value, nvars);
        d.grad[index] = T::one();
        d
    }

    /// Seeds every coordinate of `point` as an independent variable.
    pub fn seed(point: &[T]) -> Vec<Self> {
        let n = point.len();
        point.iter().enumerate().map(|(i, &v)| Self::variable(v, i, n)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.grad.len()
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    /// Row-major `nvars × nvars` Hessian.
    pub fn hess(&self) -> &[T] {
        &self.hess
    }

    pub fn hess_at(&self, i: usize, j: usize) -> T {
        self.hess[i * self.nvars() + j]
    }

    /// Hessian as nested rows.
    pub fn hess_rows(&self) -> Vec<Vec<T>> {
        self.hess.chunks(self.nvars().max(1)).take(self.nvars()).map(<[T]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    pub fn chain(&self, f0: T, f1: T, f2: T) -> Self {
        let n = self.nvars();
        let grad = self.grad.iter().map(|&g| f1 * g).collect();
        let mut hess = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let h = f1 * self.hess[i * n + j] + f2 * self.grad[i] * self.grad[j];
                hess[i * n + j] = h;
                hess[j * n + i] = h;
            }
        }
        Self { value: f0, grad, hess }
    }

    pub fn recip(&self) -> Self {
        let r = self.value.recip();
        let two = T::lit(2.0);
        self.chain(r, -r * r, two * r * r * r)
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Self {
        let v = self.value;
        self.chain(v.ln(), v.recip(), -(v * v).recip())
    }

    pub fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        let half = T::lit(0.5);
        self.chain(s, half / s, -half * half / (s * self.value))
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(&self) -> Self {
        let t = self.value.tan();
        let sec2 = T::one() + t * t;
        self.chain(t, sec2, T::lit(2.0) * t * sec2)
    }

    pub fn sinh(&self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(s, c, s)
    }

    pub fn cosh(&self) -> Self {
        let (s, c) = (self.value.sinh(), self.value.cosh());
        self.chain(c, s, c)
    }

    pub fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let sech2 = T::one() - t * t;
        self.chain(t, sech2, -T::lit(2.0) * t * sech2)
    }

    /// `|x|`, differentiated as `sign(x)`. Undefined at zero; callers check.
    pub fn abs(&self) -> Self {
        let s = self.value.signum();
        self.chain(self.value.abs(), s, T::zero())
    }

    pub fn powi(&self, p: i32) -> Self {
        let v = self.value;
        let pf = T::from_i32(p).expect("i32 exponent");
        let f0 = v.powi(p);
        let f1 = if p == 0 { T::zero() } else { pf * v.powi(p - 1) };
        let f2 = if p == 0 || p == 1 {
            T::zero()
        } else {
            pf * (pf - T::one()) * v.powi(p - 2)
        };
        self.chain(f0, f1, f2)
    }

    /// `x^p` for a constant real exponent; requires `x > 0` unless `p` is integral.
    pub fn powf(&self, p: T) -> Self {
        let v = self.value;
        self.chain(
            v.powf(p),
            p * v.powf(p - T::one()),
            p * (p - T::one()) * v.powf(p - T::lit(2.0)),
        )
    }

    /// `x^y` with both operands carrying derivatives, evaluated as `exp(y ln x)`.
    pub fn pow(&self, exponent: &Self) -> Self {
        (&self.ln() * exponent).exp()
    }

    fn zip_linear(&self, other: &Self, a: T, b: T) -> Self {
        debug_assert_eq!(self.nvars(), other.nvars());
        Self {
            value: a * self.value + b * other.value,
            grad: self.grad.iter().zip(&other.grad).map(|(&x, &y)| a * x + b * y).collect(),
            hess: self.hess.iter().zip(&other.hess).map(|(&x, &y)| a * x + b * y).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            value: k * self.value,
            grad: self.grad.iter().map(|&g| k * g).collect(),
            hess: self.hess.iter().map(|&h| k * h).collect(),
        }
    }
}

impl<T: Real> Add for &DualScalar<T> {
    type Output = DualScalar<T>;
    fn add(self, rhs: Self) -> DualScalar<T> {
        debug_assert_eq!(self.nvars(), rhs.nvars());
        DualScalar {
            value: self.value + rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(&x, &y)| x + y).collect(),
            hess: self.hess.iter().zip(&rhs.hess).map(|(&x, &y)| x + y).collect(),
        }
    }
}

impl<T: Real> Sub for &DualScalar<T> {
    type Output = DualScalar<T>;
    fn sub(self, rhs: Self) -> DualScalar<T> {
        debug_assert_eq!(self.nvars(), rhs.nvars());
        DualScalar {
            value: self.value - rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(&x, &y)| x - y).collect(),
            hess: self.hess.iter().zip(&rhs.hess).map(|(&x, &y)| x - y).collect(),
        }
    }
}

impl<T: Real> Mul for &DualScalar<T> {
    type Output = DualScalar<T>;
    fn mul(self, rhs: Self) -> DualScalar<T> {
        let n = self.nvars();
        debug_assert_eq!(n, rhs.nvars());
        let (a, b) = (self.value, rhs.value);
        let grad = self.grad.iter().zip(&rhs.grad).map(|(&ga, &gb)| ga * b + gb * a).collect();
        let mut hess = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let h = self.hess[i * n + j] * b
                    + rhs.hess[i * n + j] * a
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
                hess[i * n + j] = h;
                hess[j * n + i] = h;
            }
        }
        DualScalar { value: a * b, grad, hess }
    }
}

impl<T: Real> Div for &DualScalar<T> {
    type Output = DualScalar<T>;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> DualScalar<T> {
        self * &rhs.recip()
    }
}

impl<T: Real> Neg for &DualScalar<T> {
    type Output = DualScalar<T>;
    fn neg(self) -> DualScalar<T> {
        self.scale(-T::one())
    }
}

macro_rules! forward_owned {
    ($($tr:ident $m:ident),*) => {$(
        impl<T: Real> $tr for DualScalar<T> {
            type Output = DualScalar<T>;
            fn $m(self, rhs: Self) -> DualScalar<T> {
                (&self).$m(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul, Div div);

impl<T: Real> Neg for DualScalar<T> {
    type Output = DualScalar<T>;
    fn neg(self) -> DualScalar<T> {
        -&self
    }
}

impl<T: Real> DualScalar<T> {
    /// `self + k * other` without an intermediate allocation for `k * other`.
    pub fn add_scaled(&self, other: &Self, k: T) -> Self {
        self.zip_linear(other, T::one(), k)
    }
}
