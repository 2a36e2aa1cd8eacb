//! Small dense kernels on row-major slices. Sizes here are tiny (the
//! parameter count `k` or `n + 3`), so everything is direct.

use crate::Real;

/// Solves `a x = b` for square `a` (`n × n`, row-major) by LU with partial
/// pivoting. Returns `None` if a pivot is exactly zero.
pub fn lu_solve<T: Real>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
            .unwrap();
        if m[pivot * n + col] == T::zero() || !m[pivot * n + col].is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[col * n + j];
                m[row * n + j] = m[row * n + j] - f * v;
            }
            x[row] = x[row] - f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for j in row + 1..n {
            s = s - m[row * n + j] * x[j];
        }
        x[row] = s / m[row * n + row];
    }
    Some(x)
}

/// Singular values of a `rows × cols` matrix, descending, by one-sided
/// Jacobi rotations.
pub fn singular_values<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    assert_eq!(a.len(), rows * cols);
    // work on columns of the taller orientation
    let (n, cols_major): (usize, Vec<Vec<T>>) = if rows >= cols {
        (cols, (0..cols).map(|j| (0..rows).map(|i| a[i * cols + j]).collect()).collect())
    } else {
        (rows, (0..rows).map(|i| a[i * cols..(i + 1) * cols].to_vec()).collect())
    };
    let mut c = cols_major;
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (left, right) = c.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in cp.iter().zip(cq.iter()) {
                    alpha = alpha + x * x;
                    beta = beta + y * y;
                    gamma = gamma + x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = (T::one() + t * t).sqrt().recip();
                let sn = cs * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    (*x, *y) = (cs * *x - sn * *y, sn * *x + cs * *y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = c.iter().map(|col| col.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// 2-norm condition number of a square matrix; infinite when singular.
pub fn cond2<T: Real>(a: &[T], n: usize) -> T {
    let sv = singular_values(a, n, n);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
        (Some(_), Some(_)) => T::infinity(),
        _ => T::one(),
    }
}

pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        for l in 0..k {
            let x = a[i * k + l];
            if x == T::zero() {
                continue;
            }
            for j in 0..m {
                out[i * m + j] = out[i * m + j] + x * b[l * m + j];
            }
        }
    }
    out
}

pub fn identity<T: Real>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = T::one();
    }
    m
}

/// Matrix exponential of an `n × n` matrix by scaling and squaring with a
/// truncated Taylor series.
pub fn expm<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<T>())
        .fold(T::zero(), T::max);
    let mut squarings = 0u32;
    let mut scale = T::one();
    let half = T::lit(0.5);
    while norm1 * scale > half {
        scale = scale * half;
        squarings += 1;
    }
    let b: Vec<T> = a.iter().map(|&v| v * scale).collect();
    let mut result = identity::<T>(n);
    let mut term = identity::<T>(n);
    for k in 1..=30 {
        let kf = T::from_usize(k).unwrap();
        term = matmul(&term, &b, n, n, n).into_iter().map(|v| v / kf).collect();
        let mut small = true;
        for (r, &t) in result.iter_mut().zip(&term) {
            *r = *r + t;
            if t.abs() > T::epsilon() * r.abs() {
                small = false;
            }
        }
        if small {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n, n, n);
    }
    result
}

pub fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_with_pivoting() {
        let a = [0.0, 2.0, 1.0, 1.0];
        let x = lu_solve(&a, &[4.0, 3.0]).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert_relative_eq!(x[1], 2.0);
        assert!(lu_solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn singular_values_of_known_matrices() {
        let sv = singular_values(&[3.0, 0.0, 0.0, -2.0], 2, 2);
        assert_eq!(sv, vec![3.0, 2.0]);
        // rank one outer product (1,2)(3,4)^T: single value |(1,2)||(3,4)| = 5√5
        let sv = singular_values(&[3.0, 4.0, 6.0, 8.0], 2, 2);
        assert_relative_eq!(sv[0], 5.0 * 5f64.sqrt(), epsilon = 1e-14);
        assert!(sv[1].abs() < 1e-14);
        let wide = singular_values(&[1.0, 0.0, 0.0, 0.0, 2.0, 0.0], 2, 3);
        assert_eq!(wide, vec![2.0, 1.0]);
        assert!(cond2(&[1.0f64, 0.0, 0.0, 0.0], 2).is_infinite());
    }

    #[test]
    fn expm_of_rotation_generator() {
        let theta: f64 = 0.7;
        let e = expm(&[0.0, -theta, theta, 0.0], 2);
        assert_relative_eq!(e[0], theta.cos(), epsilon = 1e-15);
        assert_relative_eq!(e[1], -theta.sin(), epsilon = 1e-15);
        assert_relative_eq!(e[2], theta.sin(), epsilon = 1e-15);
        let big = expm(&[5.0], 1);
        assert_relative_eq!(big[0], 5f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn agrees_with_nalgebra_on_random_matrices() {
        use nalgebra::{DMatrix, DVector};
        use rand::{Rng, SeedableRng};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..200 {
            let (rows, cols) = (rng.gen_range(1..6), rng.gen_range(1..6));
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = DMatrix::from_row_slice(rows, cols, &a);

            let mut want: Vec<f64> = m.singular_values().iter().copied().collect();
            want.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let got = singular_values(&a, rows, cols);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * want[0].max(1.0), "trial {trial}: {got:?} vs {want:?}");
            }

            let n = rows;
            let flat: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sq = DMatrix::from_row_slice(n, n, &flat);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(want) = sq.clone().lu().solve(&DVector::from_column_slice(&b)) {
                if let Some(x) = lu_solve(&flat, &b) {
                    let scale = want.amax().max(1.0) * cond2(&flat, n);
                    for (g, w) in x.iter().zip(want.iter()) {
                        assert!((g - w).abs() <= 1e-13 * scale, "trial {trial}");
                    }
                }
            }

            let half: Vec<f64> = flat.iter().map(|v| 0.5 * v).collect();
            let want = DMatrix::from_row_slice(n, n, &half).exp();
            let got = expm(&half, n);
            for i in 0..n {
                for j in 0..n {
                    assert!((got[i * n + j] - want[(i, j)]).abs() <= 1e-12 * want.amax().max(1.0), "trial {trial}");
                }
            }
        }
    }
}
