//! Direct and iterative solvers for the sparse systems of the scheme.
//!
//! Matrices are reordered with reverse Cuthill–McKee and factored in band
//! storage. On the structured meshes used here this keeps the band narrow
//! (about twice the number of vertices per mesh row) and the factorizations
//! are exactly reproducible run to run.

mod banded;
mod cg;
mod ordering;

pub use banded::{BandedCholesky, BandedLu};
pub use cg::conjugate_gradient;
pub use ordering::{bandwidths, reverse_cuthill_mckee, Permutation};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Symmetric adjacency (without self loops) of the pattern of `A + Aᵀ`.
pub fn symmetric_adjacency<T: Scalar>(a: &CsrMatrix<T>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Fill-reducing ordering plus band extents for a fixed sparsity pattern.
#[derive(Clone, Debug)]
pub struct BandPattern {
    perm: Permutation,
    lower: usize,
    upper: usize,
}

impl BandPattern {
    pub fn analyze<T: Scalar>(a: &CsrMatrix<T>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "band pattern needs a square matrix");
        let perm = reverse_cuthill_mckee(&symmetric_adjacency(a));
        let (lower, upper) = bandwidths(a, &perm);
        Self { perm, lower, upper }
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn upper(&self) -> usize {
        self.upper
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    /// LU factorization with partial pivoting of a matrix sharing this pattern.
    pub fn factor_lu<T: Scalar>(&self, a: &CsrMatrix<T>) -> Result<PermutedLu<T>> {
        let n = a.nrows();
        let mut lu = BandedLu::zeros(n, self.lower, self.upper);
        for (i, j, v) in a.iter() {
            lu.add(self.perm.new_of(i), self.perm.new_of(j), v);
        }
        lu.factor()?;
        Ok(PermutedLu {
            perm: self.perm.clone(),
            lu,
        })
    }
}

/// Banded LU in a permuted numbering; solves in the original numbering.
#[derive(Clone, Debug)]
pub struct PermutedLu<T> {
    perm: Permutation,
    lu: BandedLu<T>,
}

impl<T: Scalar> PermutedLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = self.perm.apply(b);
        self.lu.solve_in_place(&mut x);
        self.perm.apply_inverse(&x)
    }
}

/// Symmetric positive definite solver: RCM-ordered band Cholesky, with
/// Jacobi-preconditioned CG as the fallback if the factorization breaks down.
#[derive(Clone, Debug)]
pub struct SpdSolver<T> {
    matrix: CsrMatrix<T>,
    kind: SpdKind<T>,
}

#[derive(Clone, Debug)]
enum SpdKind<T> {
    Cholesky {
        perm: Permutation,
        chol: BandedCholesky<T>,
    },
    Iterative {
        rel_tol: T,
    },
}

impl<T: Scalar> SpdSolver<T> {
    pub fn new(a: &CsrMatrix<T>, fallback_rel_tol: T) -> Self {
        let perm = reverse_cuthill_mckee(&symmetric_adjacency(a));
        let (lower, _) = bandwidths(a, &perm);
        let mut chol = BandedCholesky::zeros(a.nrows(), lower);
        for (i, j, v) in a.iter() {
            let (pi, pj) = (perm.new_of(i), perm.new_of(j));
            if pj <= pi {
                chol.add(pi, pj, v);
            }
        }
        let kind = match chol.factor() {
            Ok(()) => SpdKind::Cholesky { perm, chol },
            Err(_) => SpdKind::Iterative {
                rel_tol: fallback_rel_tol,
            },
        };
        Self {
            matrix: a.clone(),
            kind,
        }
    }

    /// Whether the direct factorization succeeded.
    pub fn is_direct(&self) -> bool {
        matches!(self.kind, SpdKind::Cholesky { .. })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        match &self.kind {
            SpdKind::Cholesky { perm, chol } => {
                let mut x = perm.apply(b);
                chol.solve_in_place(&mut x);
                Ok(perm.apply_inverse(&x))
            }
            SpdKind::Iterative { rel_tol } => {
                conjugate_gradient(&self.matrix, b, *rel_tol, 10 * self.matrix.nrows() + 100)
            }
        }
    }
}

/// Relative residual `‖b − Ax‖∞ / max(‖b‖∞, tiny)`, used in error reports.
pub fn relative_residual<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> T {
    let ax = a.mul_vec(x);
    let num = crate::scalar::max_abs_diff(&ax, b);
    let den = crate::scalar::max_abs(b).max(T::min_positive_value());
    num / den
}

pub(crate) fn singular(reason: &str) -> Error {
    Error::LinearSolve {
        reason: reason.to_string(),
        residual: f64::NAN,
    }
}
