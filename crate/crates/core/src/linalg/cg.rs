use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::sparse::CsrMatrix;

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems. Stops at `‖r‖₂ ≤ rel_tol · ‖b‖₂`.
pub fn conjugate_gradient<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    rel_tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::LinearSolve {
                reason: "conjugate gradients hit a non-positive curvature direction".into(),
                residual: (dot(&r, &r).sqrt() / bnorm).to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = dot(&r, &r).sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve {
        reason: format!("conjugate gradients did not converge in {max_iter} iterations"),
        residual: (dot(&r, &r).sqrt() / bnorm).to_f64_lossy(),
    })
}
