//! Symmetric positive-definite solves: sparse Cholesky on small grids,
//! Jacobi-preconditioned conjugate gradients above.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CscMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::grid::apply;

/// Grids with more cells than this use conjugate gradients.
pub const DIRECT_SOLVE_MAX_CELLS: usize = 64 * 64;
pub const CG_RELATIVE_TOLERANCE: f64 = 1e-12;
/// Accepted relative residual `‖b - Ax‖/‖b‖` of any solve.
pub const MAX_RELATIVE_RESIDUAL: f64 = 1e-10;

pub struct SpdSolver {
    matrix: CsrMatrix<f64>,
    kind: SolverKind,
}

enum SolverKind {
    Cholesky(CscCholesky<f64>),
    ConjugateGradient { inv_diag: Vec<f64> },
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            SolverKind::Cholesky(_) => "cholesky",
            SolverKind::ConjugateGradient { .. } => "cg",
        };
        f.debug_struct("SpdSolver")
            .field("n", &self.matrix.nrows())
            .field("kind", &kind)
            .finish()
    }
}

impl SpdSolver {
    pub fn new(matrix: CsrMatrix<f64>, direct: bool) -> Result<Self> {
        let kind = if direct {
            let csc = CscMatrix::from(&matrix);
            let chol = CscCholesky::factor(&csc).map_err(|_| Error::SolverBreakdown {
                residual: f64::NAN,
                iterations: 0,
            })?;
            SolverKind::Cholesky(chol)
        } else {
            let mut inv_diag = vec![1.0; matrix.nrows()];
            for (i, j, v) in matrix.triplet_iter() {
                if i == j {
                    inv_diag[i] = 1.0 / v;
                }
            }
            SolverKind::ConjugateGradient { inv_diag }
        };
        Ok(SpdSolver { matrix, kind })
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.kind, SolverKind::Cholesky(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b_norm = norm(rhs);
        if b_norm == 0.0 {
            return Ok(vec![0.0; rhs.len()]);
        }
        let (x, iterations) = match &self.kind {
            SolverKind::Cholesky(chol) => {
                let b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
                (chol.solve(&b).as_slice().to_vec(), 0)
            }
            SolverKind::ConjugateGradient { inv_diag } => self.cg(rhs, inv_diag, b_norm),
        };
        let ax = apply(&self.matrix, &x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let residual = norm(&r) / b_norm;
        if !(residual <= MAX_RELATIVE_RESIDUAL) {
            return Err(Error::SolverBreakdown {
                residual,
                iterations,
            });
        }
        Ok(x)
    }

    fn cg(&self, b: &[f64], inv_diag: &[f64], b_norm: f64) -> (Vec<f64>, usize) {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 10 * n + 100;
        for it in 0..max_iter {
            if norm(&r) <= CG_RELATIVE_TOLERANCE * b_norm {
                return (x, it);
            }
            let ap = apply(&self.matrix, &p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        (x, max_iter)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

/// Symmetric square root of a symmetric positive semidefinite matrix via
/// eigendecomposition. Eigenvalues are clamped at zero before the root.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let k = v * DMatrix::from_diagonal(&roots) * v.transpose();
    (k, eig.eigenvalues)
}

/// Smallest eigenvalue of the symmetric part `(a + aᵀ)/2`.
pub fn smallest_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
