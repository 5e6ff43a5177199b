use btb_core::brinkman::EllipticOperator;
use btb_core::harness::ExperimentConfig;
use btb_core::{Grid, GridSpec, Stepper, VectorField};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn rhs(grid: &Grid) -> VectorField {
    let mut g = VectorField::zeros(grid);
    for comp in &mut g.components {
        for (cell, v) in comp.iter_mut().enumerate() {
            let x = grid.cell_center(cell);
            *v = (7.0 * x[0]).sin() * (3.0 * x[1]).cos();
        }
    }
    g
}

fn elliptic_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("brinkman_solve");
    // 64x64 is the largest direct-solver grid, 96x96 runs conjugate gradients
    for cells in [20, 64, 96] {
        let grid = Grid::new(GridSpec::unit_square(cells)).unwrap();
        let op = EllipticOperator::assemble(&grid, 1e-3, 1e-6 * (1.0 / cells as f64).powi(4)).unwrap();
        let g = rhs(&grid);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &cells, |b, _| {
            b.iter(|| op.solve(black_box(&g)).unwrap())
        });
    }
    group.finish();
}

fn picard_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("picard_step_reference");
    for beta in [0.5, 1.5, 2.5] {
        let cfg = ExperimentConfig::reference().with_beta(beta).unwrap();
        let grid = cfg.build_grid().unwrap();
        let stepper = Stepper::new(&grid, &cfg.model, &cfg.stepping).unwrap();
        let state = stepper.initial_state(&cfg.initial_data(&grid)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, _| {
            b.iter(|| stepper.picard_step(black_box(&state)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, elliptic_solve, picard_step);
criterion_main!(benches);
