//! Solution operators of the Brinkman law `-εΔv + v = g` (with an optional
//! fourth-order term `η Δ²v`) under homogeneous Dirichlet conditions, and
//! the square-root diagnostics used by the nonlocal dissipation.
//!
//! The assembled matrix is `A = I - εΔ_D + η Δ_D²`, applied to every velocity
//! component separately. With `ε = η = 0` the operator is the identity and
//! velocities reduce to the Darcy law `v = -∇p`; the solve is skipped.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::grid::{apply, Grid, ScalarField, VectorField};
use crate::linalg::{symmetric_sqrt, to_dense, SpdSolver, DIRECT_SOLVE_MAX_CELLS};
use crate::pressure::{clip_density, combine_row, pressure_potential, ModelParams};

/// Largest unknown count accepted by [`sqrt_check`].
pub const SQRT_CHECK_MAX_CELLS: usize = 600;

#[derive(Debug)]
pub struct EllipticOperator {
    grid: Grid,
    eps: f64,
    eta: f64,
    order_m: usize,
    /// `None` for the identity (Darcy) operator.
    solver: Option<SpdSolver>,
}

impl EllipticOperator {
    pub fn assemble(grid: &Grid, eps: f64, eta: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0 && eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "eps and eta must be nonnegative, got eps={eps}, eta={eta}"
            )));
        }
        let order_m = if eta > 0.0 { 2 } else { 1 };
        let solver = if eps == 0.0 && eta == 0.0 {
            None
        } else {
            let matrix = brinkman_matrix(grid, eps, eta);
            let direct = grid.n_cells() <= DIRECT_SOLVE_MAX_CELLS;
            Some(SpdSolver::new(matrix, direct)?)
        };
        Ok(EllipticOperator {
            grid: grid.clone(),
            eps,
            eta,
            order_m,
            solver,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn order_m(&self) -> usize {
        self.order_m
    }

    pub fn is_identity(&self) -> bool {
        self.solver.is_none()
    }

    /// The assembled per-component matrix.
    pub fn matrix(&self) -> CsrMatrix<f64> {
        match &self.solver {
            Some(s) => s.matrix().clone(),
            None => CsrMatrix::identity(self.grid.n_cells()),
        }
    }

    pub fn solve_scalar(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.solver {
            Some(s) => s.solve(rhs),
            None => Ok(rhs.to_vec()),
        }
    }

    /// Componentwise solve `A v_k = g_k`.
    pub fn solve(&self, rhs: &VectorField) -> Result<VectorField> {
        let components = rhs
            .components
            .iter()
            .map(|g| self.solve_scalar(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(VectorField { components })
    }
}

fn brinkman_matrix(grid: &Grid, eps: f64, eta: f64) -> CsrMatrix<f64> {
    let lap = grid.dirichlet_laplacian();
    let mut a = CsrMatrix::identity(grid.n_cells());
    if eps > 0.0 {
        a = &a - &(&lap * eps);
    }
    if eta > 0.0 {
        let bilap = &lap * &lap;
        a = &a + &(&bilap * eta);
    }
    // exact symmetry regardless of the product's summation order
    let at = a.transpose();
    &(&a + &at) * 0.5
}

/// Velocities `v_i = L(-∇p_i(u))` for all species.
pub fn velocity_from_pressure(
    grid: &Grid,
    u: &[ScalarField],
    params: &ModelParams,
    op: &EllipticOperator,
) -> Result<Vec<VectorField>> {
    let clipped = u.iter().map(clip_density).collect::<Result<Vec<_>>>()?;
    velocities_from_densities(grid, &clipped, params, op)
}

/// As [`velocity_from_pressure`] but negative entries are read as zero
/// without the clipping check (Picard iterates).
pub(crate) fn velocities_from_densities(
    grid: &Grid,
    u: &[ScalarField],
    params: &ModelParams,
    op: &EllipticOperator,
) -> Result<Vec<VectorField>> {
    let potentials: Vec<ScalarField> = u.iter().map(|uj| pressure_potential(uj, params)).collect();
    (0..params.n_species())
        .map(|i| {
            let p = combine_row(&potentials, params, i);
            let minus_grad = grid.cell_gradient(&p).scaled(-1.0);
            if op.is_identity() {
                Ok(minus_grad)
            } else {
                op.solve(&minus_grad)
            }
        })
        .collect()
}

/// `⟨A⁻¹g, g⟩` summed over components and weighted by cell volume; the
/// discrete `‖K g‖²`.
pub fn quadratic_form(op: &EllipticOperator, g: &VectorField) -> Result<f64> {
    let v = op.solve(g)?;
    Ok(pair(op.grid(), &v, g))
}

pub(crate) fn pair(grid: &Grid, a: &VectorField, b: &VectorField) -> f64 {
    a.components
        .iter()
        .zip(&b.components)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum::<f64>()
        * grid.cell_volume()
}

/// Relative defect of the discrete energy identity
/// `η‖Δ_D v‖² + ε‖∇v‖² + ‖v‖² = ⟨g, v⟩` for `v = A⁻¹g`.
pub fn energy_identity_residual(op: &EllipticOperator, g: &VectorField) -> Result<f64> {
    let grid = op.grid();
    let v = op.solve(g)?;
    let lap = grid.dirichlet_laplacian();
    let mut lhs = 0.0;
    for comp in &v.components {
        let f = ScalarField::new(comp.clone());
        lhs += grid.inner(&f, &f);
        if op.eps() > 0.0 {
            lhs += op.eps() * grid.dirichlet_gradient_energy(&f);
        }
        if op.eta() > 0.0 {
            let lf = ScalarField::new(apply(&lap, comp));
            lhs += op.eta() * grid.inner(&lf, &lf);
        }
    }
    let rhs = pair(grid, g, &v);
    if rhs == 0.0 {
        return Ok(lhs.abs());
    }
    Ok((lhs - rhs).abs() / rhs.abs())
}

#[derive(Debug, Clone)]
pub struct SqrtDiagnostic {
    /// Dense solution operator `M = A⁻¹`.
    pub operator: DMatrix<f64>,
    /// Its symmetric square root `K`.
    pub sqrt: DMatrix<f64>,
    pub operator_eigenvalues: DVector<f64>,
    /// `‖K·K - M‖_F / ‖M‖_F`
    pub residual: f64,
}

/// Builds `A⁻¹` densely and its square root by symmetric eigendecomposition.
pub fn sqrt_check(grid: &Grid, eps: f64, eta: f64) -> Result<SqrtDiagnostic> {
    if grid.n_cells() > SQRT_CHECK_MAX_CELLS {
        return Err(Error::InvalidGrid(format!(
            "dense square-root check supports at most {SQRT_CHECK_MAX_CELLS} cells, got {}",
            grid.n_cells()
        )));
    }
    let op = EllipticOperator::assemble(grid, eps, eta)?;
    let a = to_dense(&op.matrix());
    let m = a
        .cholesky()
        .ok_or(Error::SolverBreakdown {
            residual: f64::NAN,
            iterations: 0,
        })?
        .inverse();
    let m = (&m + m.transpose()) * 0.5;
    let (k, eigenvalues) = symmetric_sqrt(&m);
    let residual = (&k * &k - &m).norm() / m.norm();
    Ok(SqrtDiagnostic {
        operator: m,
        sqrt: k,
        operator_eigenvalues: eigenvalues,
        residual,
    })
}
