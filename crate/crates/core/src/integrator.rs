//! Implicit Euler in time with a Picard fixed-point loop per step.
//!
//! Each Picard sweep freezes the velocity and the convected density at the
//! previous iterate `y` and solves the linear diffusion problem
//!
//! ```text
//! (u_i - u_i^{k-1})/τ - σ_i Δ_N u_i = -div((y_i)₊ ṽ_i),   ṽ_i = L(-∇p_i(y))
//! ```
//!
//! for the new iterate. A fixed point is a solution of the nonlinear implicit
//! scheme. With upwind face densities the fixed point is an M-matrix solve,
//! so densities stay nonnegative, and the convective flux pairs exactly with
//! the nonlocal dissipation of the entropy balance.

use std::sync::atomic::{AtomicBool, Ordering};

use log::{debug, warn};

use crate::brinkman::{velocities_from_densities, velocity_from_pressure, EllipticOperator};
use crate::entropy::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{FaceFluxField, Grid, ScalarField, VectorField};
use crate::linalg::{SpdSolver, DIRECT_SOLVE_MAX_CELLS};
use crate::pressure::{clip_density, clipped_plus, ModelParams};

pub const DEFAULT_PICARD_TOL: f64 = 1e-10;
pub const DEFAULT_PICARD_MAX: usize = 50;
/// Relative Picard update above which the iteration is declared divergent
/// without waiting for `picard_max`.
pub const PICARD_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvectionScheme {
    Upwind,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeVariant {
    /// Brinkman operator without higher-order term, no truncation.
    Plain,
    /// Adds `η Δ_D²` to the Brinkman operator.
    EtaRegularized,
    /// `η`-regularized operator plus the `S_N^β` / `(·)₊^N` cutoffs.
    Truncated,
}

/// Scheme for a given exponent and dimension: plain below `1/d`, truncated
/// from 2 on, `η`-regularized in between.
pub fn select_scheme(beta: f64, dimension: usize) -> SchemeVariant {
    if beta < 1.0 / dimension as f64 {
        SchemeVariant::Plain
    } else if beta < 2.0 {
        SchemeVariant::EtaRegularized
    } else {
        SchemeVariant::Truncated
    }
}

/// `η = 10⁻⁶ h⁴` with `h` the smallest spacing.
pub fn default_eta(grid: &Grid) -> f64 {
    let h = (0..grid.dimension())
        .map(|k| grid.spacing(k))
        .fold(f64::INFINITY, f64::min);
    1e-6 * h.powi(4)
}

/// `N = 10 (1 + max u⁰)`.
pub fn default_truncation_level(u0: &[ScalarField]) -> f64 {
    let max = u0.iter().map(ScalarField::max).fold(0.0, f64::max);
    10.0 * (1.0 + max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeStepConfig {
    pub tau: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub convection: ConvectionScheme,
    pub variant: SchemeVariant,
}

impl TimeStepConfig {
    pub fn new(tau: f64, variant: SchemeVariant) -> Self {
        TimeStepConfig {
            tau,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max: DEFAULT_PICARD_MAX,
            convection: ConvectionScheme::Upwind,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidStepping(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.picard_tol > 0.0 && self.picard_tol < 1.0) {
            return Err(Error::InvalidStepping(format!(
                "picard_tol must lie in (0, 1), got {}",
                self.picard_tol
            )));
        }
        if self.picard_max == 0 {
            return Err(Error::InvalidStepping("picard_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub time: f64,
    pub step: usize,
    pub u: Vec<ScalarField>,
    pub v: Vec<VectorField>,
    pub picard_iterations_used: usize,
}

/// Everything needed to advance one step: the effective model, the
/// Brinkman operator and the factored diffusion matrices for `τ`.
#[derive(Debug)]
pub struct Stepper {
    grid: Grid,
    params: ModelParams,
    cfg: TimeStepConfig,
    op: EllipticOperator,
    diffusion: Vec<SpdSolver>,
    warned_time_step: AtomicBool,
}

impl Stepper {
    /// The variant decides which parts of `params` are used: `Plain` drops
    /// `η` and the truncation, `EtaRegularized` drops the truncation, and
    /// `Truncated` requires a truncation level.
    pub fn new(grid: &Grid, params: &ModelParams, cfg: &TimeStepConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let mut effective = params.clone();
        match cfg.variant {
            SchemeVariant::Plain => {
                effective.eta = 0.0;
                effective.trunc_n = None;
            }
            SchemeVariant::EtaRegularized => effective.trunc_n = None,
            SchemeVariant::Truncated => {
                if effective.trunc_n.is_none() {
                    return Err(Error::InvalidParams(
                        "the truncated scheme needs a truncation level".into(),
                    ));
                }
            }
        }
        let op = EllipticOperator::assemble(grid, effective.eps, effective.eta)?;
        let diffusion = diffusion_solvers(grid, &effective, cfg.tau)?;
        Ok(Stepper {
            grid: grid.clone(),
            params: effective,
            cfg: cfg.clone(),
            op,
            diffusion,
            warned_time_step: AtomicBool::new(false),
        })
    }

    /// Same model with a different time step.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut cfg = self.cfg.clone();
        cfg.tau = tau;
        Stepper::new(&self.grid, &self.params, &cfg)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &TimeStepConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn initial_state(&self, u0: &[ScalarField]) -> Result<SimulationState> {
        if u0.len() != self.params.n_species() {
            return Err(Error::InvalidParams(format!(
                "{} initial fields for {} species",
                u0.len(),
                self.params.n_species()
            )));
        }
        let u = u0.iter().map(clip_density).collect::<Result<Vec<_>>>()?;
        if u.iter().any(|f| f.len() != self.grid.n_cells() || !f.is_finite()) {
            return Err(Error::InvalidParams(
                "initial data must be finite with one value per cell".into(),
            ));
        }
        let v = velocity_from_pressure(&self.grid, &u, &self.params, &self.op)?;
        Ok(SimulationState {
            time: 0.0,
            step: 0,
            u,
            v,
            picard_iterations_used: 0,
        })
    }

    /// Convected density on cells: `(y)₊`, or `(y)₊^N` when truncated.
    fn convected(&self, y: &ScalarField) -> ScalarField {
        match self.params.trunc_n {
            Some(n) => y.map(|v| clipped_plus(v, n)),
            None => y.map(|v| v.max(0.0)),
        }
    }

    fn convective_flux(&self, density: &ScalarField, v: &VectorField) -> FaceFluxField {
        let grid = &self.grid;
        let axes = (0..grid.dimension())
            .map(|axis| {
                let vface = grid.face_average(&v.components[axis], axis);
                let mut flux = vec![0.0; grid.n_faces(axis)];
                for (face, low, high) in grid.interior_faces(axis) {
                    let vf = vface[face];
                    let rho = match self.cfg.convection {
                        ConvectionScheme::Upwind => {
                            if vf >= 0.0 {
                                density.values[low]
                            } else {
                                density.values[high]
                            }
                        }
                        ConvectionScheme::Central => 0.5 * (density.values[low] + density.values[high]),
                    };
                    flux[face] = rho * vf;
                }
                flux
            })
            .collect();
        FaceFluxField { axes }
    }

    /// One application of the fixed-point map with the velocity frozen at
    /// `y`.
    pub fn linear_substep(&self, y: &[ScalarField], u_prev: &[ScalarField]) -> Result<Vec<ScalarField>> {
        let v = velocities_from_densities(&self.grid, y, &self.params, &self.op)?;
        self.linear_substep_with_velocity(y, &v, u_prev)
    }

    /// The diffusion solve with a prescribed velocity field per species.
    pub fn linear_substep_with_velocity(
        &self,
        y: &[ScalarField],
        v: &[VectorField],
        u_prev: &[ScalarField],
    ) -> Result<Vec<ScalarField>> {
        let tau = self.cfg.tau;
        (0..self.params.n_species())
            .map(|i| {
                let flux = self.convective_flux(&self.convected(&y[i]), &v[i]);
                let div = self.grid.divergence_of_fluxes(&flux);
                let rhs: Vec<f64> = u_prev[i]
                    .values
                    .iter()
                    .zip(&div.values)
                    .map(|(u, d)| u - tau * d)
                    .collect();
                Ok(ScalarField::new(self.diffusion[i].solve(&rhs)?))
            })
            .collect()
    }

    /// Picard iteration from `y⁰ = u^{k-1}` to the fixed point `u^k`.
    pub fn picard_step(&self, state: &SimulationState) -> Result<SimulationState> {
        let mut y = state.u.clone();
        let mut residual = f64::INFINITY;
        for it in 1..=self.cfg.picard_max {
            let next = self.linear_substep(&y, &state.u)?;
            residual = y
                .iter()
                .zip(&next)
                .map(|(old, new)| {
                    let diff = ScalarField::new(
                        old.values.iter().zip(&new.values).map(|(a, b)| b - a).collect(),
                    );
                    self.grid.l2_norm(&diff) / (self.grid.l2_norm(old) + 1e-30)
                })
                .fold(0.0, f64::max);
            // a blown-up iterate cannot come back; stop before it overflows
            if !(residual <= PICARD_BLOWUP) {
                return Err(Error::PicardDivergence {
                    step: state.step + 1,
                    residual,
                    iterations: it,
                });
            }
            y = next;
            if residual < self.cfg.picard_tol {
                let u = y.iter().map(clip_density).collect::<Result<Vec<_>>>()?;
                let v = velocity_from_pressure(&self.grid, &u, &self.params, &self.op)?;
                self.check_time_step(&v);
                debug!("step {} converged after {it} Picard iterations", state.step + 1);
                return Ok(SimulationState {
                    time: state.time + self.cfg.tau,
                    step: state.step + 1,
                    u,
                    v,
                    picard_iterations_used: it,
                });
            }
        }
        Err(Error::PicardDivergence {
            step: state.step + 1,
            residual,
            iterations: self.cfg.picard_max,
        })
    }

    fn check_time_step(&self, v: &[VectorField]) {
        for (i, (vi, sigma)) in v.iter().zip(&self.params.sigma).enumerate() {
            let vmax = vi.max_norm();
            if vmax > 0.0
                && self.cfg.tau >= sigma / (vmax * vmax)
                && !self.warned_time_step.swap(true, Ordering::Relaxed)
            {
                warn!(
                    "species {}: tau = {:e} exceeds sigma/|v|^2 = {:e}",
                    i + 1,
                    self.cfg.tau,
                    sigma / (vmax * vmax)
                );
            }
        }
    }

    pub fn diagnostics(&self, state: &SimulationState, prev: Option<(f64, f64)>) -> Result<DiagnosticsRecord> {
        entropy::record(
            &self.grid,
            &self.params,
            &self.op,
            state.step,
            state.time,
            &state.u,
            &state.v,
            prev,
        )
    }
}

fn diffusion_solvers(grid: &Grid, params: &ModelParams, tau: f64) -> Result<Vec<SpdSolver>> {
    let lap = grid.neumann_laplacian();
    let id = nalgebra_sparse::CsrMatrix::identity(grid.n_cells());
    let direct = grid.n_cells() <= DIRECT_SOLVE_MAX_CELLS;
    params
        .sigma
        .iter()
        .map(|&sigma| SpdSolver::new(&id - &(&lap * (tau * sigma)), direct))
        .collect()
}

#[derive(Debug)]
pub struct RunOutput {
    /// One record per step, starting with the initial state.
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<SimulationState>,
    pub final_state: SimulationState,
    /// Set when the run stopped early; everything above is the partial
    /// trajectory up to that point.
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn snapshot(&self, step: usize) -> Option<&SimulationState> {
        self.snapshots.iter().find(|s| s.step == step)
    }
}

/// Number of steps of size `tau` needed to reach `t_end`.
pub fn step_count(t_end: f64, tau: f64) -> usize {
    (t_end / tau - 1e-9).ceil().max(0.0) as usize
}

/// Advances `u0` to `t_end`, recording diagnostics every step and keeping
/// the states at `snapshot_steps`.
///
/// A step whose Picard loop fails is retried once as two half steps.
pub fn run(
    grid: &Grid,
    u0: &[ScalarField],
    params: &ModelParams,
    cfg: &TimeStepConfig,
    t_end: f64,
    snapshot_steps: &[usize],
) -> Result<RunOutput> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidStepping(format!("t_end must be positive, got {t_end}")));
    }
    let stepper = Stepper::new(grid, params, cfg)?;
    let mut half: Option<Stepper> = None;
    let mut state = stepper.initial_state(u0)?;
    let mut records = vec![stepper.diagnostics(&state, None)?];
    let mut snapshots = Vec::new();
    if snapshot_steps.contains(&0) {
        snapshots.push(state.clone());
    }
    let n_steps = step_count(t_end, cfg.tau);
    let mut failure = None;
    for k in 1..=n_steps {
        let prev_entropy = records.last().map(|r| r.entropy).unwrap_or(0.0);
        let attempt = stepper
            .picard_step(&state)
            .and_then(|next| {
                let rec = stepper.diagnostics(&next, Some((prev_entropy, cfg.tau)))?;
                Ok((next, rec))
            });
        let outcome = match attempt {
            Ok(ok) => Ok(ok),
            Err(err @ Error::PicardDivergence { .. }) => {
                warn!("{err}; retrying with two half steps");
                if half.is_none() {
                    half = Some(stepper.with_tau(0.5 * cfg.tau)?);
                }
                half_steps(half.as_ref().expect("half stepper"), &state, prev_entropy)
            }
            Err(err) => Err(err),
        };
        match outcome {
            Ok((mut next, mut rec)) => {
                next.step = k;
                next.time = k as f64 * cfg.tau;
                rec.step = k;
                rec.time = next.time;
                state = next;
                records.push(rec);
                if snapshot_steps.contains(&k) {
                    snapshots.push(state.clone());
                }
            }
            Err(err) => {
                failure = Some(err);
                break;
            }
        }
    }
    Ok(RunOutput {
        records,
        snapshots,
        final_state: state,
        failure,
    })
}

fn half_steps(
    half: &Stepper,
    state: &SimulationState,
    prev_entropy: f64,
) -> Result<(SimulationState, DiagnosticsRecord)> {
    let tau = half.config().tau;
    let mid = half.picard_step(state)?;
    let mid_rec = half.diagnostics(&mid, Some((prev_entropy, tau)))?;
    let mut end = half.picard_step(&mid)?;
    let mut rec = half.diagnostics(&end, Some((mid_rec.entropy, tau)))?;
    rec.entropy_residual += mid_rec.entropy_residual;
    end.picard_iterations_used += mid.picard_iterations_used;
    Ok((end, rec))
}
