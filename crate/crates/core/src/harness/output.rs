//! CSV serialization of diagnostics, snapshots and sweep reports. Every
//! number is written with 17 significant digits so files are byte-identical
//! for identical runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::entropy::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrator::SimulationState;

use super::experiments::SweepReport;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn diagnostics_header(n_species: usize) -> String {
    let mut cols = vec!["step".to_string(), "time".to_string()];
    cols.extend((1..=n_species).map(|i| format!("mass_{i}")));
    cols.extend(
        [
            "entropy",
            "diff_dissipation",
            "nonlocal_dissipation",
            "entropy_residual",
            "min_density",
            "max_velocity_inf",
        ]
        .map(String::from),
    );
    cols.join(",")
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let n = records.first().map_or(0, |r| r.mass.len());
    let mut s = diagnostics_header(n);
    s.push('\n');
    for r in records {
        let mut row = vec![r.step.to_string(), fmt_num(r.time)];
        row.extend(r.mass.iter().map(|&m| fmt_num(m)));
        row.extend(
            [
                r.entropy,
                r.diff_dissipation,
                r.nonlocal_dissipation,
                r.entropy_residual,
                r.min_density,
                r.max_velocity_inf,
            ]
            .map(fmt_num),
        );
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// One row per cell, x outer and y inner. One-dimensional grids omit the
/// `y` column.
pub fn snapshot_csv(grid: &Grid, state: &SimulationState) -> String {
    let n = state.u.len();
    let mut header = vec!["x".to_string()];
    if grid.dimension() == 2 {
        header.push("y".into());
    }
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.push("u_sum".into());
    let mut s = header.join(",");
    s.push('\n');
    let nx = grid.cells_along(0);
    let ny = if grid.dimension() == 2 { grid.cells_along(1) } else { 1 };
    for ix in 0..nx {
        for iy in 0..ny {
            let cell = grid.cell_index(ix, iy);
            let center = grid.cell_center(cell);
            let mut row: Vec<String> = center.iter().map(|&c| fmt_num(c)).collect();
            let mut sum = 0.0;
            for u in &state.u {
                let v = u.values[cell];
                sum += v;
                row.push(fmt_num(v));
            }
            row.push(fmt_num(sum));
            let _ = writeln!(s, "{}", row.join(","));
        }
    }
    s
}

/// `snap_beta<β>_step<k>.csv` with β in shortest decimal form.
pub fn snapshot_file_name(beta: f64, step: usize) -> String {
    format!("snap_beta{beta}_step{step}.csv")
}

pub fn diagnostics_file_name(beta: f64) -> String {
    format!("diagnostics_beta{beta}.csv")
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut header = vec![report.parameter.clone()];
    if report.entries.iter().any(|e| e.distance.is_some()) {
        header.push("distance".into());
    }
    header.push("final_entropy".into());
    let probes: Vec<usize> = report
        .entries
        .first()
        .map(|e| e.variances.iter().map(|(k, _)| *k).collect())
        .unwrap_or_default();
    header.extend(probes.iter().map(|k| format!("variance_step{k}")));
    let mut s = header.join(",");
    s.push('\n');
    for e in &report.entries {
        let mut row = vec![fmt_num(e.value)];
        if let Some(d) = e.distance {
            row.push(fmt_num(d));
        }
        row.push(fmt_num(e.final_entropy));
        row.extend(e.variances.iter().map(|(_, v)| fmt_num(*v)));
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Writes `(file name, contents)` pairs below `dir`, creating it if needed.
pub fn write_files(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    files
        .iter()
        .map(|(name, contents)| {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ScalarField, VectorField};

    #[test]
    fn header_is_exact() {
        assert_eq!(
            diagnostics_header(3),
            "step,time,mass_1,mass_2,mass_3,entropy,diff_dissipation,nonlocal_dissipation,entropy_residual,min_density,max_velocity_inf"
        );
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_num(0.1);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn snapshot_rows_x_major() {
        let grid = Grid::new(GridSpec::unit_square(3)).unwrap();
        let u = ScalarField::from_fn(&grid, |x| x[0] + 10.0 * x[1]);
        let state = SimulationState {
            time: 0.0,
            step: 0,
            u: vec![u.clone(), u],
            v: vec![VectorField::zeros(&grid); 2],
            picard_iterations_used: 0,
        };
        let csv = snapshot_csv(&grid, &state);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "x,y,u_1,u_2,u_sum");
        let parse = |l: &str| -> Vec<f64> { l.split(',').map(|t| t.parse().unwrap()).collect() };
        let (r1, r2) = (parse(lines[1]), parse(lines[2]));
        assert_eq!(r1[0], r2[0]);
        assert!(r2[1] > r1[1]);
        assert!((r1[4] - 2.0 * r1[2]).abs() < 1e-15);
    }

    #[test]
    fn file_names() {
        assert_eq!(snapshot_file_name(0.5, 15), "snap_beta0.5_step15.csv");
        assert_eq!(snapshot_file_name(2.5, 250), "snap_beta2.5_step250.csv");
    }
}
