use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` for a symmetric positive-definite `a` (row-major, `n x n`)
/// by Cholesky factorization. Only the lower triangle of `a` is read.
pub(crate) fn solve_spd<F: Scalar>(mut a: Vec<F>, n: usize, mut b: Vec<F>) -> Result<Vec<F>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !d.is_finite() || d <= F::zero() {
            return Err(Error::NumericalFailure(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite solution".into()));
    }
    Ok(b)
}
