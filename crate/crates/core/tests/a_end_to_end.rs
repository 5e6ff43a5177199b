use btb_core::entropy::tsallis_entropy;
use btb_core::harness::experiments::{reproduce_figure, total_variance, FIGURE_STEPS};
use btb_core::harness::output::{diagnostics_csv, snapshot_csv};
use btb_core::harness::{run_experiment, write_files, ExperimentConfig};
use btb_core::integrator::select_scheme;
use btb_core::{run, Grid, GridSpec, ModelParams, ScalarField, Stepper, TimeStepConfig};
use nalgebra::DMatrix;

fn small_reference(beta: f64, cells: usize, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::reference();
    cfg.grid = GridSpec::unit_square(cells);
    cfg.t_end = steps as f64 * cfg.stepping.tau;
    cfg.snapshot_steps = vec![steps];
    cfg.with_beta(beta).unwrap()
}

#[test]
fn weak_pressure_gives_strictly_decreasing_entropy() {
    let grid = Grid::new(GridSpec::unit_interval(40)).unwrap();
    let params = ModelParams {
        beta: 1.5,
        sigma: vec![0.2],
        a: DMatrix::from_element(1, 1, 1e-8),
        eps: 1e-3,
        eta: 0.0,
        trunc_n: None,
    };
    let u0 = vec![ScalarField::from_fn(&grid, |x| 1.0 + 0.8 * (3.0 * x[0]).sin())];
    let cfg = TimeStepConfig::new(1e-3, select_scheme(1.5, 1));
    let out = run(&grid, &u0, &params, &cfg, 0.1, &[]).unwrap();
    assert!(out.failure.is_none());
    for w in out.records.windows(2) {
        assert!(w[1].entropy < w[0].entropy, "step {}", w[1].step);
    }
    // the recorded entropy is the Tsallis entropy of the state
    let h = tsallis_entropy(&grid, &out.final_state.u, 1.5).unwrap();
    assert!((h - out.records.last().unwrap().entropy).abs() < 1e-13);
}

#[test]
fn identical_runs_write_identical_bytes() {
    let cfg = small_reference(2.5, 10, 12);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(diagnostics_csv(&a.output.records), diagnostics_csv(&b.output.records));
    let sa = snapshot_csv(&a.grid, &a.output.snapshots[0]);
    let sb = snapshot_csv(&b.grid, &b.output.snapshots[0]);
    assert_eq!(sa, sb);

    let dir = tempfile::tempdir().unwrap();
    let paths = write_files(&dir.path().join("x"), &a.files()).unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(std::fs::read_to_string(&paths[1]).unwrap(), sa);
    // header plus one row per cell
    assert_eq!(sa.lines().count(), 101);
}

#[test]
fn first_reference_step_converges_and_halving_tau_never_costs_iterations() {
    let mut counts = Vec::new();
    for beta in [0.5, 1.5, 2.5] {
        let cfg = ExperimentConfig::reference().with_beta(beta).unwrap();
        let grid = cfg.build_grid().unwrap();
        let stepper = Stepper::new(&grid, &cfg.model, &cfg.stepping).unwrap();
        let state = stepper.initial_state(&cfg.initial_data(&grid)).unwrap();
        let mut previous = usize::MAX;
        let mut per_tau = Vec::new();
        for factor in [1.0, 0.5, 0.25] {
            let s = stepper.with_tau(factor * cfg.stepping.tau).unwrap();
            let it = s.picard_step(&state).unwrap().picard_iterations_used;
            assert!(it <= cfg.stepping.picard_max);
            assert!(it <= previous, "beta {beta}: {it} iterations after halving, {previous} before");
            previous = it;
            per_tau.push(it);
        }
        counts.push(per_tau);
    }
    // regression lock on the iteration counts at τ, τ/2, τ/4
    assert_eq!(counts, vec![vec![7, 6, 5], vec![11, 9, 7], vec![17, 11, 9]]);
}

#[test]
fn figure_runs_conserve_mass_and_flatten() {
    let runs = reproduce_figure().unwrap();
    assert_eq!(runs.len(), 3);
    for art in &runs {
        assert_eq!(art.output.snapshots.len(), FIGURE_STEPS.len());
        let m0: f64 = art.output.records[0].mass.iter().sum();
        let mut last_var = f64::INFINITY;
        for snap in &art.output.snapshots {
            let total: f64 = snap.u.iter().map(|u| art.grid.integrate(u)).sum();
            assert!((total - m0).abs() <= 1e-10 * m0);
            let var = total_variance(&art.grid, &snap.u);
            assert!(var < last_var);
            last_var = var;
        }
        // approaches the constant Σ_i mass_i / |Ω|
        let sum = btb_core::harness::experiments::total_density(&art.output.final_state.u);
        let mean = art.grid.mean(&sum);
        assert!((mean - m0).abs() < 1e-12);
    }
}

#[test]
fn constant_state_is_kept_exactly() {
    let cfg = small_reference(1.5, 6, 5);
    let grid = cfg.build_grid().unwrap();
    let u0 = vec![ScalarField::constant(&grid, 0.8); 3];
    let out = run(&grid, &u0, &cfg.model, &cfg.stepping, cfg.t_end, &[]).unwrap();
    for u in &out.final_state.u {
        assert!(u.values.iter().all(|v| (v - 0.8).abs() < 1e-12));
    }
    assert!(out.records.iter().skip(1).all(|r| r.max_velocity_inf < 1e-10));
}

#[test]
fn zero_state_stays_zero() {
    let cfg = small_reference(0.5, 6, 1);
    let grid = cfg.build_grid().unwrap();
    let stepper = Stepper::new(&grid, &cfg.model, &cfg.stepping).unwrap();
    let zero = vec![ScalarField::constant(&grid, 0.0); 3];
    let next = stepper.linear_substep(&zero, &zero).unwrap();
    assert!(next.iter().all(|u| u.values.iter().all(|&v| v == 0.0)));
}
