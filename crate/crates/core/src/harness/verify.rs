//! Self-check suites runnable from the command line. Each check reports a
//! measured value against a tolerance.

use std::fmt::Write as _;

use nalgebra_sparse::CsrMatrix;

use crate::brinkman::{energy_identity_residual, quadratic_form, sqrt_check, velocity_from_pressure, EllipticOperator};
use crate::entropy::tsallis_entropy;
use crate::error::Result;
use crate::grid::{symmetry_defect, Grid, GridSpec, ScalarField, VectorField};
use crate::integrator::{run, step_count};
use crate::pressure::{pressure, r_trunc, s_trunc, ModelParams};

use super::config::ExperimentConfig;
use super::output::fmt_num;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Negative control: perturbs one off-diagonal entry of the Laplacians
    /// handed to the symmetry checks.
    pub inject_asymmetric_laplacian: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn suite_passed(&self, suite: &str) -> bool {
        self.checks.iter().filter(|c| c.suite == suite).all(|c| c.passed)
    }

    /// `suite,check,status,measured,tolerance`, one line per check.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("suite,check,status,measured,tolerance\n");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.suite,
                c.name,
                if c.passed { "pass" } else { "fail" },
                fmt_num(c.measured),
                fmt_num(c.tolerance)
            );
        }
        s
    }
}

struct Checks(Vec<CheckResult>);

impl Checks {
    /// Passes when `measured ≤ tolerance`.
    fn at_most(&mut self, suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) {
        self.0.push(CheckResult {
            suite,
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    }
}

/// Runs all suites. `cfg` selects the model for the short entropy run; the
/// reference configuration at β = 1.5 is used when absent.
pub fn verify(cfg: Option<&ExperimentConfig>, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut c = Checks(Vec::new());
    symmetry_suite(&mut c, opts)?;
    operator_suite(&mut c)?;
    truncation_suite(&mut c);
    tsallis_suite(&mut c)?;
    let reference;
    let cfg = match cfg {
        Some(cfg) => cfg,
        None => {
            reference = ExperimentConfig::reference();
            &reference
        }
    };
    entropy_suite(&mut c, cfg)?;
    Ok(VerifyReport { checks: c.0 })
}

fn perturbed(m: CsrMatrix<f64>, inject: bool) -> CsrMatrix<f64> {
    if !inject {
        return m;
    }
    let n = m.nrows();
    let mut coo = nalgebra_sparse::CooMatrix::from(&m);
    coo.push(0, n - 1, 1e-3);
    CsrMatrix::from(&coo)
}

fn symmetry_suite(c: &mut Checks, opts: &VerifyOptions) -> Result<()> {
    for cells in [5, 12] {
        let grid = Grid::new(GridSpec::unit_square(cells))?;
        let neumann = perturbed(grid.neumann_laplacian(), opts.inject_asymmetric_laplacian);
        let dirichlet = perturbed(grid.dirichlet_laplacian(), opts.inject_asymmetric_laplacian);
        c.at_most("symmetry", format!("neumann_laplacian_{cells}x{cells}"), symmetry_defect(&neumann), 1e-12);
        c.at_most("symmetry", format!("dirichlet_laplacian_{cells}x{cells}"), symmetry_defect(&dirichlet), 1e-12);
        let ones = vec![1.0; grid.n_cells()];
        let kernel = crate::grid::apply(&neumann, &ones)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        c.at_most("symmetry", format!("neumann_constant_kernel_{cells}x{cells}"), kernel, 1e-9);
    }
    Ok(())
}

fn smooth_vector(grid: &Grid) -> VectorField {
    let mut v = VectorField::zeros(grid);
    for (k, comp) in v.components.iter_mut().enumerate() {
        for (cell, value) in comp.iter_mut().enumerate() {
            let x = grid.cell_center(cell);
            *value = (3.0 * x[0] + k as f64).sin() * (2.0 * x[x.len() - 1]).cos() + 0.3;
        }
    }
    v
}

fn operator_suite(c: &mut Checks) -> Result<()> {
    let grid = Grid::new(GridSpec::unit_square(12))?;
    for eps in [1e-3, 1e-1] {
        for eta in [0.0, 1e-4] {
            let d = sqrt_check(&grid, eps, eta)?;
            c.at_most("operator", format!("sqrt_residual_eps{eps}_eta{eta}"), d.residual, 1e-10);
            let op = EllipticOperator::assemble(&grid, eps, eta)?;
            let r = energy_identity_residual(&op, &smooth_vector(&grid))?;
            c.at_most("operator", format!("energy_identity_eps{eps}_eta{eta}"), r, 1e-10);
        }
    }
    let g = smooth_vector(&grid);
    let forms = [1e-2, 1e-4, 1e-6]
        .iter()
        .map(|&eta| quadratic_form(&EllipticOperator::assemble(&grid, 1e-3, eta)?, &g))
        .collect::<Result<Vec<_>>>()?;
    // a larger η makes the operator larger and its inverse smaller
    let violation = forms.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    c.at_most("operator", "eta_monotonicity", violation, 0.0);

    let params = ModelParams {
        eps: 0.0,
        ..ModelParams::reference(1.5)
    };
    let u: Vec<ScalarField> = (0..3)
        .map(|i| ScalarField::from_fn(&grid, |x| 1.0 + 0.5 * (x[0] * (i + 2) as f64).sin() * x[1]))
        .collect();
    let op = EllipticOperator::assemble(&grid, 0.0, 0.0)?;
    let v = velocity_from_pressure(&grid, &u, &params, &op)?;
    let mut mismatches = 0.0;
    for (i, vi) in v.iter().enumerate() {
        let direct = grid.cell_gradient(&pressure(&u, i, &params)?).scaled(-1.0);
        mismatches += vi
            .components
            .iter()
            .flatten()
            .zip(direct.components.iter().flatten())
            .filter(|(a, b)| a.to_bits() != b.to_bits())
            .count() as f64;
    }
    c.at_most("operator", "darcy_bit_exact_mismatches", mismatches, 0.0);
    Ok(())
}

fn truncation_suite(c: &mut Checks) {
    let n = 5.0;
    for beta in [2.0, 2.5, 3.0] {
        let h = 1e-5;
        let chain = (1..400)
            .map(|k| 0.04 * k as f64)
            .filter(|z| (z - n).abs() > 2.0 * h)
            .map(|z| {
                let fd = (r_trunc(z + h, beta, n) - r_trunc(z - h, beta, n)) / (2.0 * h);
                let exact = beta * s_trunc(z, beta - 1.0, n);
                (fd - exact).abs() / exact.abs().max(1.0)
            })
            .fold(0.0, f64::max);
        c.at_most("truncation", format!("chain_rule_beta{beta}"), chain, 1e-6);

        let h = 1e-4;
        let mut c1 = 0.0f64;
        for f in [
            &(|z: f64| s_trunc(z, beta, n)) as &dyn Fn(f64) -> f64,
            &|z: f64| r_trunc(z, beta, n),
        ] {
            let jump = (f(n + 1e-12) - f(n - 1e-12)).abs();
            let left = (3.0 * f(n) - 4.0 * f(n - h) + f(n - 2.0 * h)) / (2.0 * h);
            let right = (-3.0 * f(n) + 4.0 * f(n + h) - f(n + 2.0 * h)) / (2.0 * h);
            c1 = c1.max(jump).max((left - right).abs() / left.abs().max(1.0));
        }
        c.at_most("truncation", format!("c1_matching_beta{beta}"), c1, 1e-6);

        let exact = (0..=500)
            .map(|k| n * k as f64 / 500.0)
            .filter(|z| s_trunc(*z, beta, n).to_bits() != z.powf(beta).to_bits())
            .count();
        c.at_most("truncation", format!("untruncated_below_level_beta{beta}"), exact as f64, 0.0);

        let h = 1e-2;
        let convexity = (1..1500)
            .map(|k| k as f64 * h)
            .map(|z| r_trunc(z + h, beta, n) - 2.0 * r_trunc(z, beta, n) + r_trunc(z - h, beta, n))
            .fold(f64::INFINITY, f64::min);
        c.at_most("truncation", format!("convexity_defect_beta{beta}"), -convexity, 1e-10);
    }
}

/// Near β = 1 the Tsallis density deviates from `u log u` by
/// `δ u (log u)² / 2 + O(δ²)` with `δ = β - 1`.
fn tsallis_suite(c: &mut Checks) -> Result<()> {
    let grid = Grid::new(GridSpec::unit_interval(1))?;
    for delta in [1e-4, -1e-4] {
        let worst = [0.1, 0.5, 1.0, 2.0, 10.0]
            .iter()
            .map(|&u| {
                let h = tsallis_entropy(&grid, &[ScalarField::new(vec![u])], 1.0 + delta)?;
                let l = u * f64::ln(u);
                let leading = delta * u * u.ln().powi(2) / 2.0;
                Ok((h - l - leading).abs())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        c.at_most("tsallis", format!("boltzmann_limit_delta{delta}"), worst, 1e-6);
    }
    Ok(())
}

fn entropy_suite(c: &mut Checks, cfg: &ExperimentConfig) -> Result<()> {
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_data(&grid);
    let steps = step_count(cfg.t_end, cfg.stepping.tau).min(15);
    let out = run(&grid, &u0, &cfg.model, &cfg.stepping, steps as f64 * cfg.stepping.tau, &[])?;
    if let Some(err) = out.failure {
        return Err(err);
    }
    let first = &out.records[0];
    let drift = out
        .records
        .iter()
        .flat_map(|r| r.mass.iter().zip(&first.mass).map(|(m, m0)| (m - m0).abs() / m0.abs().max(1e-300)))
        .fold(0.0, f64::max);
    c.at_most("entropy", "mass_drift", drift, 1e-10);
    let min = out.records.iter().map(|r| r.min_density).fold(f64::INFINITY, f64::min);
    c.at_most("entropy", "negative_density", -min, 1e-12);
    let tol = cfg.stepping.picard_tol;
    let excess = out
        .records
        .windows(2)
        .map(|w| {
            let slack = (100.0 * tol * (1.0 + w[1].entropy.abs())).max(1e-8);
            (w[1].entropy_residual - slack).max(w[1].entropy - w[0].entropy - slack)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    c.at_most("entropy", "entropy_balance_excess", excess, 0.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_verify_passes() {
        let report = verify(None, &VerifyOptions::default()).unwrap();
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:?}");
        assert!(report.to_csv().lines().count() > 20);
    }

    #[test]
    fn asymmetric_laplacian_is_caught() {
        let opts = VerifyOptions {
            inject_asymmetric_laplacian: true,
        };
        let report = verify(None, &opts).unwrap();
        assert!(!report.suite_passed("symmetry"));
        assert!(report.suite_passed("operator"));
    }
}
