//! Finite transformations generated by affine vector fields.
//!
//! For a generator with coefficients affine in `z = (t, x, u)`, the flow is
//! `z ↦ exp(εM) z` in homogeneous coordinates. A solution graph is carried
//! along by pulling `(t, x)` back through the inverse flow and pushing `u`
//! forward, which requires that the `(t, x)` components ignore `u`.

use super::{SymmetryError, VectorField};
use crate::linalg::{expm, matmul};
use crate::verify::{Field, FieldError, JetPoint};
use crate::Real;

/// `exp(εX)` for an affine, projectable generator `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFlow {
    n: usize,
    /// Homogeneous generator matrix, `(n + 3) × (n + 3)`, last row zero.
    m: Vec<f64>,
}

impl AffineFlow {
    pub fn new(id: &str, field: &VectorField) -> Result<Self, SymmetryError> {
        let n = field.n();
        let size = n + 3;
        let mut m = vec![0.0; size * size];
        for (row, expr) in field.components().enumerate() {
            let (coeffs, constant) = expr
                .as_affine()
                .ok_or_else(|| SymmetryError::NonAffineGenerator(id.to_string()))?;
            if row <= n && coeffs[n + 1] != 0.0 {
                return Err(SymmetryError::NotProjectable(id.to_string()));
            }
            m[row * size..row * size + n + 2].copy_from_slice(&coeffs);
            m[row * size + n + 2] = constant;
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Homogeneous matrix of `exp(εX)`.
    pub fn matrix<T: Real>(&self, eps: T) -> Vec<T> {
        let scaled: Vec<T> = self.m.iter().map(|&v| T::lit(v) * eps).collect();
        expm(&scaled, self.n + 3)
    }

    /// Image of `z = (t, x1 … xn, u)` under `exp(εX)`.
    pub fn map_point<T: Real>(&self, eps: T, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.n + 2);
        let size = self.n + 3;
        let mut h = z.to_vec();
        h.push(T::one());
        let out = matmul(&self.matrix(eps), &h, size, size, 1);
        out[..size - 1].to_vec()
    }
}

/// `u′` obtained by moving the graph of `inner` through `exp(εX)`.
pub struct TransformedField<T, F> {
    inner: F,
    n: usize,
    /// Pull-back of `(t, x)`: `(n + 1) × (n + 1)` linear part, then offset.
    back: Vec<T>,
    back_offset: Vec<T>,
    /// `u′ = r·(t, x) + a u + e` at the preimage.
    r: Vec<T>,
    a: T,
    e: T,
}

/// Transforms `field` by the finite flow of `generator` at parameter `eps`.
pub fn flow_transform<T: Real, F: Field<T>>(
    id: &str,
    generator: &VectorField,
    eps: T,
    field: F,
) -> Result<TransformedField<T, F>, SymmetryError> {
    let flow = AffineFlow::new(id, generator)?;
    if field.dim() != flow.n {
        return Err(SymmetryError::Dimension(format!("field in n = {} for a generator in n = {}", field.dim(), flow.n)));
    }
    Ok(TransformedField::new(&flow, eps, field))
}

impl<T: Real, F: Field<T>> TransformedField<T, F> {
    pub fn new(flow: &AffineFlow, eps: T, inner: F) -> Self {
        let n = flow.n;
        let size = n + 3;
        let s = n + 1;
        let bwd = flow.matrix(-eps);
        let fwd = flow.matrix(eps);
        let mut back = Vec::with_capacity(s * s);
        let mut back_offset = Vec::with_capacity(s);
        for i in 0..s {
            back.extend_from_slice(&bwd[i * size..i * size + s]);
            back_offset.push(bwd[i * size + size - 1]);
        }
        let urow = &fwd[s * size..(s + 1) * size];
        Self { inner, n, back, back_offset, r: urow[..s].to_vec(), a: urow[s], e: urow[size - 1] }
    }

    fn apply_back(&self, z: &[T], with_offset: bool) -> Vec<T> {
        let s = self.n + 1;
        (0..s)
            .map(|i| {
                let lin = (0..s).map(|j| self.back[i * s + j] * z[j]).sum::<T>();
                if with_offset { lin + self.back_offset[i] } else { lin }
            })
            .collect()
    }

    /// Preimage `(t, x)` of the point `(t′, x′)`.
    pub fn preimage(&self, t: T, x: &[T]) -> (T, Vec<T>) {
        let z: Vec<T> = std::iter::once(t).chain(x.iter().copied()).collect();
        let p = self.apply_back(&z, true);
        (p[0], p[1..].to_vec())
    }

    /// Transformed jet at `(t′, x′)` from the inner jet at the preimage.
    pub fn push_jet(&self, t: T, x: &[T], inner: &JetPoint<T>) -> JetPoint<T> {
        let s = self.n + 1;
        let p: Vec<T> = std::iter::once(inner.t).chain(inner.x.iter().copied()).collect();
        let u = self.r.iter().zip(&p).map(|(&r, &v)| r * v).sum::<T>() + self.a * inner.u + self.e;
        let g: Vec<T> = std::iter::once(inner.u_t)
            .chain(inner.u_x.iter().copied())
            .zip(&self.r)
            .map(|(du, &r)| r + self.a * du)
            .collect();
        let grad: Vec<T> = (0..s).map(|j| (0..s).map(|i| self.back[i * s + j] * g[i]).sum()).collect();
        JetPoint { t, x: x.to_vec(), u, u_t: grad[0], u_x: grad[1..].to_vec() }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<T: Real, F: Field<T>> Field<T> for TransformedField<T, F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError> {
        let (pt, px) = self.preimage(t, x);
        let u = self.inner.value(pt, &px)?;
        let lin = self.r[0] * pt + self.r[1..].iter().zip(&px).map(|(&r, &v)| r * v).sum::<T>();
        Ok(lin + self.a * u + self.e)
    }

    fn increment(&self, t: T, x: &[T], dt: T, dx: &[T]) -> Result<T, FieldError> {
        let (pt, px) = self.preimage(t, x);
        let dz: Vec<T> = std::iter::once(dt).chain(dx.iter().copied()).collect();
        let dp = self.apply_back(&dz, false);
        let du = self.inner.increment(pt, &px, dp[0], &dp[1..])?;
        Ok(self.r.iter().zip(&dp).map(|(&r, &d)| r * d).sum::<T>() + self.a * du)
    }
}

impl<T: Real, F: Field<T> + ?Sized> Field<T> for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, t: T, x: &[T]) -> Result<T, FieldError> {
        (**self).value(t, x)
    }

    fn increment(&self, t: T, x: &[T], dt: T, dx: &[T]) -> Result<T, FieldError> {
        (**self).increment(t, x, dt, dx)
    }
}
