//! Tsallis entropy, its dissipation functionals, and the per-step entropy
//! balance of the implicit scheme.
//!
//! All quantities are normalized by `|β - 1|` relative to the raw balance
//! `∫(u^β - u)` so that the entropy inequality reads
//! `H^k - H^{k-1} + τ (D_diff + D_nl) ≤ 0` in every β regime. When a
//! truncation level is set, `u^β` is replaced by `R_N^β(u)` in the entropy,
//! `u^{β/2}` by `S_N^{β/2}(u)` in the diffusive term and `u^β` by `S_N^β(u)`
//! in the nonlocal term.

use crate::brinkman::{pair, EllipticOperator};
use crate::error::Result;
use crate::grid::{Grid, ScalarField, VectorField};
use crate::pressure::{clip_density, pressure_potential, r_trunc, s_trunc, ModelParams};

/// Below this distance from 1 the entropy density is `u log u`.
pub const BOLTZMANN_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: Vec<f64>,
    pub entropy: f64,
    pub diff_dissipation: f64,
    pub nonlocal_dissipation: f64,
    /// `H^k - H^{k-1} + τ (D_diff + D_nl)`; zero for the initial record.
    pub entropy_residual: f64,
    pub min_density: f64,
    pub max_velocity_inf: f64,
    pub alpha: f64,
}

fn entropy_density(u: f64, beta: f64, trunc_n: Option<f64>) -> f64 {
    if (beta - 1.0).abs() <= BOLTZMANN_THRESHOLD {
        return if u > 0.0 { u * u.ln() } else { 0.0 };
    }
    let power = match trunc_n {
        Some(n) => r_trunc(u, beta, n),
        None => u.powf(beta),
    };
    (power - u) / (beta - 1.0)
}

/// `H(u) = Σ_i ∫ (u_i^β - u_i)/(β - 1) dx`, with the Boltzmann limit at β = 1.
pub fn tsallis_entropy(grid: &Grid, u: &[ScalarField], beta: f64) -> Result<f64> {
    entropy_with(grid, u, beta, None)
}

/// Entropy in the form matching `params` (truncated when `trunc_n` is set).
pub fn entropy(grid: &Grid, u: &[ScalarField], params: &ModelParams) -> Result<f64> {
    entropy_with(grid, u, params.beta, params.trunc_n)
}

fn entropy_with(grid: &Grid, u: &[ScalarField], beta: f64, trunc_n: Option<f64>) -> Result<f64> {
    let mut total = 0.0;
    for ui in u {
        let clipped = clip_density(ui)?;
        total += grid.integrate(&clipped.map(|v| entropy_density(v, beta, trunc_n)));
    }
    Ok(total)
}

/// `(4/β) Σ_i σ_i Σ_faces |Δ(u_i^{β/2})/h|² · |cell|` over interior faces.
pub fn diffusive_dissipation(grid: &Grid, u: &[ScalarField], params: &ModelParams) -> Result<f64> {
    let half = params.beta / 2.0;
    let mut total = 0.0;
    for (ui, sigma) in u.iter().zip(&params.sigma) {
        let clipped = clip_density(ui)?;
        let powered = match params.trunc_n {
            Some(n) => clipped.map(|v| s_trunc(v, half, n)),
            None => clipped.map(|v| v.powf(half)),
        };
        let grad = grid.gradient_at_faces(&powered);
        let sq: f64 = grad.axes.iter().flatten().map(|g| g * g).sum();
        total += sigma * sq;
    }
    Ok(4.0 / params.beta * total * grid.cell_volume())
}

/// Gradients `∇u_j^β` (or `∇S_N^β(u_j)`) that drive the velocities.
fn potential_gradients(grid: &Grid, u: &[ScalarField], params: &ModelParams) -> Result<Vec<VectorField>> {
    u.iter()
        .map(|ui| {
            let clipped = clip_density(ui)?;
            Ok(grid.cell_gradient(&pressure_potential(&clipped, params)))
        })
        .collect()
}

/// `Σ_ij a_ij ⟨L g_j, g_i⟩` with `g_j = ∇u_j^β`; equals
/// `Σ_ij a_ij ⟨K g_j, K g_i⟩` without forming `K`.
pub fn nonlocal_dissipation(
    grid: &Grid,
    u: &[ScalarField],
    params: &ModelParams,
    op: &EllipticOperator,
) -> Result<f64> {
    let grads = potential_gradients(grid, u, params)?;
    let solved = grads.iter().map(|g| op.solve(g)).collect::<Result<Vec<_>>>()?;
    let n = params.n_species();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let aij = params.a[(i, j)];
            if aij != 0.0 {
                total += aij * pair(grid, &solved[j], &grads[i]);
            }
        }
    }
    Ok(total)
}

/// `α Σ_i ‖K ∇u_i^β‖²`, the lower bound of the nonlocal dissipation.
pub fn nonlocal_lower_bound(
    grid: &Grid,
    u: &[ScalarField],
    params: &ModelParams,
    op: &EllipticOperator,
) -> Result<f64> {
    let grads = potential_gradients(grid, u, params)?;
    let mut total = 0.0;
    for g in &grads {
        total += pair(grid, &op.solve(g)?, g);
    }
    Ok(params.alpha() * total)
}

/// `H^k - H^{k-1} + τ (D_diff + D_nl)`; nonpositive values certify the
/// discrete entropy inequality for the step.
pub fn entropy_residual(prev_entropy: f64, entropy: f64, diff: f64, nonlocal: f64, tau: f64) -> f64 {
    entropy - prev_entropy + tau * (diff + nonlocal)
}

/// Full diagnostics for one state. `prev` carries `(H^{k-1}, τ)` for all
/// but the initial record.
#[allow(clippy::too_many_arguments)]
pub fn record(
    grid: &Grid,
    params: &ModelParams,
    op: &EllipticOperator,
    step: usize,
    time: f64,
    u: &[ScalarField],
    v: &[VectorField],
    prev: Option<(f64, f64)>,
) -> Result<DiagnosticsRecord> {
    let h = entropy(grid, u, params)?;
    let d_diff = diffusive_dissipation(grid, u, params)?;
    let d_nl = nonlocal_dissipation(grid, u, params, op)?;
    let entropy_residual = match prev {
        Some((h_prev, tau)) => entropy_residual(h_prev, h, d_diff, d_nl, tau),
        None => 0.0,
    };
    Ok(DiagnosticsRecord {
        step,
        time,
        mass: u.iter().map(|ui| grid.integrate(ui)).collect(),
        entropy: h,
        diff_dissipation: d_diff,
        nonlocal_dissipation: d_nl,
        entropy_residual,
        min_density: u.iter().map(ScalarField::min).fold(f64::INFINITY, f64::min),
        max_velocity_inf: v.iter().map(VectorField::max_norm).fold(0.0, f64::max),
        alpha: params.alpha(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brinkman::sqrt_check;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn square(n: usize) -> Grid {
        Grid::new(GridSpec::unit_square(n)).unwrap()
    }

    fn bumps(g: &Grid) -> Vec<ScalarField> {
        (1..=3)
            .map(|i| {
                let c = 0.25 * i as f64;
                ScalarField::from_fn(g, |x| {
                    (-10.0 * ((x[0] - c).powi(2) + (x[1] - c).powi(2))).exp() + 0.5
                })
            })
            .collect()
    }

    #[test]
    fn constant_field_entropy() {
        let g = square(5);
        let u = vec![ScalarField::constant(&g, 0.5)];
        assert_relative_eq!(tsallis_entropy(&g, &u, 2.0).unwrap(), -0.25, epsilon = 1e-15);
        let one = vec![ScalarField::constant(&g, 1.0)];
        for beta in [0.3, 1.5, 2.5] {
            assert_eq!(tsallis_entropy(&g, &one, beta).unwrap(), 0.0);
        }
    }

    #[test]
    fn boltzmann_limit() {
        // (u^{1+δ} - u)/δ = u ln u + δ u (ln u)²/2 + O(δ²)
        for &u in &[0.1, 0.5, 1.0, 2.0, 10.0] {
            let boltzmann = u * f64::ln(u);
            for delta in [-1e-4, 1e-4] {
                let err = entropy_density(u, 1.0 + delta, None) - boltzmann;
                let leading = delta * u * u.ln().powi(2) / 2.0;
                assert!((err - leading).abs() <= 1e-7 * (1.0 + u), "u={u}: {err} vs {leading}");
            }
        }
        assert_eq!(entropy_density(0.0, 1.0, None), 0.0);
        assert_relative_eq!(entropy_density(2.0, 1.0, None), 2.0 * 2f64.ln());
    }

    #[test]
    fn scaling_identity() {
        let g = square(6);
        let u = bumps(&g);
        let (lambda, beta) = (1.7, 0.6);
        let scaled: Vec<ScalarField> = u.iter().map(|f| f.map(|v| lambda * v)).collect();
        let direct: f64 = u
            .iter()
            .map(|f| {
                g.integrate(&f.map(|v| (lambda.powf(beta) * v.powf(beta) - lambda * v) / (beta - 1.0)))
            })
            .sum();
        assert_relative_eq!(tsallis_entropy(&g, &scaled, beta).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn diffusive_dissipation_cases() {
        let g = square(6);
        let p = ModelParams::reference(1.5);
        let flat = vec![ScalarField::constant(&g, 0.8); 3];
        assert_eq!(diffusive_dissipation(&g, &flat, &p).unwrap(), 0.0);
        assert!(diffusive_dissipation(&g, &bumps(&g), &p).unwrap() > 0.0);

        // u = x on (0,1), β = 2, σ = 1: (4/2)∫|∇u|² = 2 up to the boundary layer
        let p1 = ModelParams {
            beta: 2.0,
            sigma: vec![1.0],
            a: DMatrix::from_element(1, 1, 1.0),
            eps: 0.0,
            eta: 0.0,
            trunc_n: None,
        };
        let err = |n: usize| {
            let g = Grid::new(GridSpec::unit_interval(n)).unwrap();
            let u = vec![ScalarField::from_fn(&g, |x| x[0])];
            (diffusive_dissipation(&g, &u, &p1).unwrap() - 2.0).abs()
        };
        assert!(err(64) < 0.05);
        assert!(err(128) < err(64));
    }

    #[test]
    fn nonlocal_dissipation_cases() {
        let g = square(6);
        let p = ModelParams::reference(1.5);
        let op = EllipticOperator::assemble(&g, 0.1, 0.0).unwrap();
        let flat = vec![ScalarField::constant(&g, 0.8); 3];
        assert_eq!(nonlocal_dissipation(&g, &flat, &p, &op).unwrap(), 0.0);

        let u = bumps(&g);
        let single = ModelParams {
            beta: 1.5,
            sigma: vec![0.1],
            a: DMatrix::from_element(1, 1, 1.0),
            eps: 0.1,
            eta: 0.0,
            trunc_n: None,
        };
        let one = vec![u[0].clone()];
        let grad = g.cell_gradient(&one[0].map(|v| v.powf(1.5)));
        let q = crate::brinkman::quadratic_form(&op, &grad).unwrap();
        assert_relative_eq!(nonlocal_dissipation(&g, &one, &single, &op).unwrap(), q, max_relative = 1e-14);

        // dense square-root oracle
        let k = sqrt_check(&g, 0.1, 0.0).unwrap().sqrt;
        let kg: Vec<Vec<DVector<f64>>> = u
            .iter()
            .map(|ui| {
                g.cell_gradient(&ui.map(|v| v.powf(1.5)))
                    .components
                    .iter()
                    .map(|c| &k * DVector::from_column_slice(c))
                    .collect()
            })
            .collect();
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let inner: f64 = (0..2).map(|c| kg[j][c].dot(&kg[i][c])).sum();
                oracle += p.a[(i, j)] * inner * g.cell_volume();
            }
        }
        let d_nl = nonlocal_dissipation(&g, &u, &p, &op).unwrap();
        assert!((d_nl - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        let bound = nonlocal_lower_bound(&g, &u, &p, &op).unwrap();
        assert!(d_nl >= bound - 1e-9);
    }

    #[test]
    fn truncated_entropy_uses_r() {
        let g = square(3);
        let mut p = ModelParams::reference(3.0);
        p.trunc_n = Some(2.0);
        let u = vec![ScalarField::constant(&g, 3.0); 1];
        p.sigma = vec![0.1];
        p.a = DMatrix::from_element(1, 1, 1.0);
        // (R_2^3(3) - 3)/2 = (26 - 3)/2
        assert_relative_eq!(entropy(&g, &u, &p).unwrap(), 11.5, max_relative = 1e-14);
    }

    #[test]
    fn residual_sign_convention() {
        assert!(entropy_residual(1.0, 0.5, 1.0, 1.0, 0.1) < 0.0);
        assert_eq!(entropy_residual(2.0, 2.0, 0.0, 0.0, 0.1), 0.0);
    }
}
