//! The reference simulation, β sweeps and the ε → 0 localization sweep.
//!
//! Sweep members run in parallel, one trajectory per worker; results are
//! collected in parameter order and never share state.

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::integrator::{run, step_count, RunOutput};

use super::config::{ExperimentConfig, InitialData};
use super::output::{diagnostics_csv, diagnostics_file_name, snapshot_csv, snapshot_file_name};

/// Exponents of the reference figure, one column each.
pub const FIGURE_BETAS: [f64; 3] = [0.5, 1.5, 2.5];
/// Steps of the reference figure, one row each.
pub const FIGURE_STEPS: [usize; 3] = [15, 50, 250];

/// Gaussian bumps `exp(-100|x - x_i|²) + 0.5` with `x_i = (0.25 i, 0.25 i)`
/// at the cell centres of a two-dimensional grid.
pub fn reference_initial_data(grid: &Grid) -> Result<Vec<ScalarField>> {
    if grid.dimension() != 2 {
        return Err(Error::InvalidGrid(format!(
            "the reference initial data is two-dimensional, got d = {}",
            grid.dimension()
        )));
    }
    Ok(InitialData::Bumps.evaluate(grid, 3))
}

pub fn total_density(u: &[ScalarField]) -> ScalarField {
    let n = u.first().map_or(0, ScalarField::len);
    ScalarField::new((0..n).map(|c| u.iter().map(|f| f.values[c]).sum()).collect())
}

/// Spatial variance of `Σ_i u_i`.
pub fn total_variance(grid: &Grid, u: &[ScalarField]) -> f64 {
    grid.variance(&total_density(u))
}

/// A finished (or partially finished) trajectory together with its grid.
#[derive(Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub output: RunOutput,
}

impl RunArtifacts {
    /// Diagnostics plus one snapshot file per recorded snapshot.
    pub fn files(&self) -> Vec<(String, String)> {
        let beta = self.config.model.beta;
        let mut files = vec![(
            diagnostics_file_name(beta),
            diagnostics_csv(&self.output.records),
        )];
        files.extend(
            self.output
                .snapshots
                .iter()
                .map(|s| (snapshot_file_name(beta, s.step), snapshot_csv(&self.grid, s))),
        );
        files
    }

    /// The stored failure as an error, if the run stopped early.
    pub fn into_result(self) -> Result<Self> {
        match self.output.failure {
            Some(err) => Err(err),
            None => Ok(self),
        }
    }
}

/// Runs the configuration as given. A numerical failure mid-run is kept in
/// `output.failure` with the partial trajectory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    run_with_snapshots(cfg, &cfg.snapshot_steps)
}

fn run_with_snapshots(cfg: &ExperimentConfig, snapshot_steps: &[usize]) -> Result<RunArtifacts> {
    let grid = cfg.build_grid()?;
    let u0 = cfg.initial_data(&grid);
    info!(
        "run beta = {}, eps = {}, eta = {:e}, {:?}",
        cfg.model.beta, cfg.model.eps, cfg.model.eta, cfg.stepping.variant
    );
    let output = run(&grid, &u0, &cfg.model, &cfg.stepping, cfg.t_end, snapshot_steps)?;
    Ok(RunArtifacts {
        config: cfg.clone(),
        grid,
        output,
    })
}

/// Configuration of the reference figure for one exponent.
pub fn figure_config(beta: f64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::reference().with_beta(beta)?;
    cfg.snapshot_steps = FIGURE_STEPS.to_vec();
    Ok(cfg)
}

/// The three reference runs; each records snapshots at [`FIGURE_STEPS`].
pub fn reproduce_figure() -> Result<Vec<RunArtifacts>> {
    let configs = FIGURE_BETAS
        .iter()
        .map(|&b| figure_config(b))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|cfg| run_experiment(cfg).and_then(RunArtifacts::into_result))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: f64,
    /// Space-time distance to the reference run (localization sweeps only).
    pub distance: Option<f64>,
    pub final_entropy: f64,
    /// `(step, variance of the total density)` at each probe step.
    pub variances: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub parameter: String,
    pub entries: Vec<SweepEntry>,
    /// Statement checked by `verdict`.
    pub claim: String,
    pub verdict: bool,
    /// Smallest density seen in any step of any run of the sweep, including
    /// the reference run.
    pub min_density: f64,
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn min_density(runs: &[RunArtifacts]) -> f64 {
    runs.iter()
        .flat_map(|r| r.output.records.iter().map(|rec| rec.min_density))
        .fold(f64::INFINITY, f64::min)
}

fn probe_variances(art: &RunArtifacts) -> Vec<(usize, f64)> {
    art.output
        .snapshots
        .iter()
        .map(|s| (s.step, total_variance(&art.grid, &s.u)))
        .collect()
}

/// Runs every exponent of `beta_list` and checks that larger exponents have
/// smaller total-density variance at every probe step.
pub fn beta_sweep(cfg: &ExperimentConfig) -> Result<(SweepReport, Vec<RunArtifacts>)> {
    let mut betas = cfg.beta_list.clone();
    if betas.is_empty() {
        betas.push(cfg.model.beta);
    }
    let configs = betas
        .iter()
        .map(|&b| cfg.with_beta(b))
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<RunArtifacts> = configs
        .par_iter()
        .map(|c| run_experiment(c).and_then(RunArtifacts::into_result))
        .collect::<Result<_>>()?;
    let entries: Vec<SweepEntry> = runs
        .iter()
        .map(|art| SweepEntry {
            value: art.config.model.beta,
            distance: None,
            final_entropy: art.output.records.last().map_or(f64::NAN, |r| r.entropy),
            variances: probe_variances(art),
        })
        .collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| entries[i].value.total_cmp(&entries[j].value));
    let n_probes = entries.first().map_or(0, |e| e.variances.len());
    let verdict = (0..n_probes).all(|p| {
        let vars: Vec<f64> = order.iter().map(|&i| entries[i].variances[p].1).collect();
        strictly_decreasing(&vars)
    });
    Ok((
        SweepReport {
            parameter: "beta".into(),
            entries,
            claim: "variance of the total density decreases with beta at every probe step".into(),
            verdict,
            min_density: min_density(&runs),
        },
        runs,
    ))
}

/// `(Σ_i Σ_k τ ‖u_i^k - w_i^k‖²)^{1/2}` over steps `1..`.
pub fn space_time_distance(grid: &Grid, tau: f64, a: &RunOutput, b: &RunOutput) -> f64 {
    let mut total = 0.0;
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots).filter(|(s, _)| s.step > 0) {
        debug_assert_eq!(sa.step, sb.step);
        for (ua, ub) in sa.u.iter().zip(&sb.u) {
            let diff = ScalarField::new(ua.values.iter().zip(&ub.values).map(|(x, y)| x - y).collect());
            total += tau * grid.inner(&diff, &diff);
        }
    }
    total.sqrt()
}

/// Distance of the Brinkman solutions for each `ε` in `eps_list` to the
/// Darcy solution, computed with the same integrator, grid and time step.
/// The Darcy reference uses `ε = η = 0`, so the velocity is exactly `-∇p`.
pub fn localization_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    if cfg.eps_list.is_empty() {
        return Err(Error::InvalidParams("eps_list is empty".into()));
    }
    let n_steps = step_count(cfg.t_end, cfg.stepping.tau);
    let all_steps: Vec<usize> = (1..=n_steps).collect();
    let mut reference = cfg.with_eps(0.0);
    reference.model.eta = 0.0;
    let mut members: Vec<ExperimentConfig> = vec![reference];
    members.extend(cfg.eps_list.iter().map(|&e| cfg.with_eps(e)));
    let runs: Vec<RunArtifacts> = members
        .par_iter()
        .map(|c| run_with_snapshots(c, &all_steps).and_then(RunArtifacts::into_result))
        .collect::<Result<_>>()?;
    let (darcy, brinkman) = runs.split_first().expect("reference run");
    let probes: Vec<usize> = cfg.snapshot_steps.iter().copied().filter(|&k| k <= n_steps).collect();
    let entries: Vec<SweepEntry> = brinkman
        .iter()
        .map(|art| SweepEntry {
            value: art.config.model.eps,
            distance: Some(space_time_distance(
                &art.grid,
                cfg.stepping.tau,
                &art.output,
                &darcy.output,
            )),
            final_entropy: art.output.records.last().map_or(f64::NAN, |r| r.entropy),
            variances: probes
                .iter()
                .filter_map(|&k| art.output.snapshot(k))
                .map(|s| (s.step, total_variance(&art.grid, &s.u)))
                .collect(),
        })
        .collect();
    let distances: Vec<f64> = entries.iter().filter_map(|e| e.distance).collect();
    Ok(SweepReport {
        parameter: "eps".into(),
        verdict: strictly_decreasing(&distances),
        entries,
        claim: "distance to the Darcy solution decreases strictly as eps decreases".into(),
        min_density: min_density(&runs),
    })
}
