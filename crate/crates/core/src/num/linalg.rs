//! Small dense linear algebra for the regression kernels: the systems here
//! are p x p with p equal to the number of covariate columns plus intercept,
//! so plain Gaussian elimination is both sufficient and dependency-free.

use super::Real;
use crate::error::{Error, Result};

/// Solves `A x = b` for square `A` (row-major, `n*n`) by Gaussian elimination
/// with partial pivoting. `A` and `b` are consumed as scratch space.
pub fn solve<F: Real>(mut a: Vec<F>, mut b: Vec<F>) -> Result<Vec<F>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == F::zero() || !best.is_finite() {
            return Err(Error::computation("singular linear system"));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == F::zero() {
                continue;
            }
            for k in col..n {
                let upd = a[col * n + k] * factor;
                a[row * n + k] = a[row * n + k] - upd;
            }
            b[row] = b[row] - b[col] * factor;
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc = acc - a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::computation("non-finite solution to linear system"));
    }
    Ok(x)
}

/// Inverse of a square matrix (row-major) by Gauss–Jordan with partial
/// pivoting. Used for the sandwich covariance in the F-statistic demo.
pub fn invert<F: Real>(a: &[F], n: usize) -> Result<Vec<F>> {
    assert_eq!(a.len(), n * n);
    let mut aug = vec![F::zero(); n * 2 * n];
    let m = 2 * n;
    for r in 0..n {
        for c in 0..n {
            aug[r * m + c] = a[r * n + c];
        }
        aug[r * m + n + r] = F::one();
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = aug[col * m + col].abs();
        for row in (col + 1)..n {
            let v = aug[row * m + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == F::zero() || !best.is_finite() {
            return Err(Error::computation("singular matrix"));
        }
        if pivot != col {
            for k in 0..m {
                aug.swap(col * m + k, pivot * m + k);
            }
        }
        let diag = aug[col * m + col];
        for k in 0..m {
            aug[col * m + k] = aug[col * m + k] / diag;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[row * m + col];
            if factor == F::zero() {
                continue;
            }
            for k in 0..m {
                let upd = aug[col * m + k] * factor;
                aug[row * m + k] = aug[row * m + k] - upd;
            }
        }
    }
    let mut inv = vec![F::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            inv[r * n + c] = aug[r * m + n + c];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_3x3() {
        let a = vec![2.0f64, 1.0, 1.0, 1.0, 3.0, 2.0, 1.0, 0.0, 0.0];
        let b = vec![4.0, 5.0, 6.0];
        let x = solve(a, b).unwrap();
        assert!((x[0] - 6.0).abs() < 1e-12);
        assert!((x[1] - 15.0).abs() < 1e-12);
        assert!((x[2] + 23.0).abs() < 1e-12);
    }

    #[test]
    fn invert_roundtrips() {
        let a = vec![4.0f64, 7.0, 2.0, 6.0];
        let inv = invert(&a, 2).unwrap();
        // A * A^{-1} = I
        for r in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += a[r * 2 + k] * inv[k * 2 + c];
                }
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_rejected() {
        let a = vec![1.0f64, 2.0, 2.0, 4.0];
        assert!(solve(a.clone(), vec![1.0, 2.0]).is_err());
        assert!(invert(&a, 2).is_err());
    }
}
