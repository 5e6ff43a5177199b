//! Power-law pressure `p_i(u) = Σ_j a_ij u_j^β` and the C¹ cutoff calculus
//! used when β ≥ 2.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::smallest_symmetric_eigenvalue;

/// Densities in `(-NEGATIVE_CLIP, 0)` are read as zero before powering;
/// anything more negative is a hard error.
pub const NEGATIVE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub sigma: Vec<f64>,
    /// Pressure coefficients `a_ij`, row `i` belongs to species `i`.
    pub a: DMatrix<f64>,
    /// Brinkman viscosity; zero selects the Darcy law.
    pub eps: f64,
    /// Weight of the fourth-order regularization.
    pub eta: f64,
    /// Truncation level `N`, `None` when no cutoff is applied.
    pub trunc_n: Option<f64>,
}

impl ModelParams {
    /// The three-species configuration of the reference simulation.
    pub fn reference(beta: f64) -> Self {
        ModelParams {
            beta,
            sigma: vec![0.1; 3],
            a: reference_matrix(),
            eps: 1e-3,
            eta: 0.0,
            trunc_n: None,
        }
    }

    pub fn n_species(&self) -> usize {
        self.sigma.len()
    }

    /// Smallest eigenvalue of the symmetric part of `a`.
    pub fn alpha(&self) -> f64 {
        smallest_symmetric_eigenvalue(&self.a)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_species();
        let bad = |m: String| Err(Error::InvalidParams(m));
        if n == 0 {
            return bad("at least one species is required".into());
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if let Some(s) = self.sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("sigma must be positive, got {s}"));
        }
        if self.a.nrows() != n || self.a.ncols() != n {
            return bad(format!(
                "coefficient matrix is {}x{}, expected {n}x{n}",
                self.a.nrows(),
                self.a.ncols()
            ));
        }
        if self.a.iter().any(|v| !v.is_finite()) {
            return bad("coefficient matrix has non-finite entries".into());
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps must be nonnegative, got {}", self.eps));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be nonnegative, got {}", self.eta));
        }
        if let Some(big_n) = self.trunc_n {
            if !(big_n.is_finite() && big_n > 1.0) {
                return bad(format!("truncation level must exceed 1, got {big_n}"));
            }
        }
        let alpha = self.alpha();
        if !(alpha > 0.0) {
            return bad(format!(
                "symmetric part of the coefficient matrix is not positive definite (smallest eigenvalue {alpha:e})"
            ));
        }
        Ok(())
    }
}

pub fn reference_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[5.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 0.5, 0.5])
}

/// Checks a density field against the clipping policy and returns it with
/// round-off negatives replaced by zero.
pub fn clip_density(u: &ScalarField) -> Result<ScalarField> {
    let mut out = u.clone();
    for (cell, v) in out.values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v > -NEGATIVE_CLIP {
                *v = 0.0;
            } else {
                return Err(Error::NegativeDensity { cell, value: *v });
            }
        }
    }
    Ok(out)
}

/// `max(0, min(N, z))`
pub fn clipped_plus(z: f64, big_n: f64) -> f64 {
    z.min(big_n).max(0.0)
}

/// `S_N^γ(z) = γ ∫₀^z [(s)₊^N]^(γ-1) ds`: zero for `z ≤ 0`, `z^γ` up to `N`
/// and the tangent line beyond.
pub fn s_trunc(z: f64, gamma: f64, big_n: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z <= big_n {
        z.powf(gamma)
    } else {
        big_n.powf(gamma) + gamma * big_n.powf(gamma - 1.0) * (z - big_n)
    }
}

/// `R_N^β(z) = β ∫₀^z S_N^(β-1)(s) ds`; the second-order Taylor extension
/// of `z^β` beyond `N`.
pub fn r_trunc(z: f64, beta: f64, big_n: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z <= big_n {
        z.powf(beta)
    } else {
        let dz = z - big_n;
        big_n.powf(beta)
            + beta * big_n.powf(beta - 1.0) * dz
            + 0.5 * (beta - 1.0) * beta * big_n.powf(beta - 2.0) * dz * dz
    }
}

/// Pointwise `u^γ` after clipping round-off negatives.
pub fn power_field(u: &ScalarField, gamma: f64) -> Result<ScalarField> {
    Ok(clip_density(u)?.map(|v| v.powf(gamma)))
}

/// The pressure potential of one species: `u^β`, or `S_N^β(u)` when a
/// truncation level is set. Negative values contribute zero.
pub fn pressure_potential(u: &ScalarField, params: &ModelParams) -> ScalarField {
    let beta = params.beta;
    match params.trunc_n {
        Some(n) => u.map(|v| s_trunc(v, beta, n)),
        None => u.map(|v| if v > 0.0 { v.powf(beta) } else { 0.0 }),
    }
}

/// `p_i(u) = Σ_j a_ij u_j^β` (with `S_N^β` in place of the power when
/// truncation is active).
pub fn pressure(u: &[ScalarField], i: usize, params: &ModelParams) -> Result<ScalarField> {
    let clipped = u.iter().map(clip_density).collect::<Result<Vec<_>>>()?;
    let potentials: Vec<ScalarField> = clipped
        .iter()
        .map(|uj| pressure_potential(uj, params))
        .collect();
    Ok(combine_row(&potentials, params, i))
}

/// `Σ_j a_ij w_j` for precomputed potentials `w_j`.
pub fn combine_row(potentials: &[ScalarField], params: &ModelParams, i: usize) -> ScalarField {
    let len = potentials[0].len();
    let mut out = vec![0.0; len];
    for (j, w) in potentials.iter().enumerate() {
        let aij = params.a[(i, j)];
        if aij == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&w.values) {
            *o += aij * v;
        }
    }
    ScalarField::new(out)
}
