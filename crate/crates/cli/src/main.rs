use std::path::{Path, PathBuf};
use std::process::ExitCode;

use btb_core::harness::experiments::{localization_sweep, FIGURE_BETAS, FIGURE_STEPS};
use btb_core::harness::output::sweep_csv;
use btb_core::harness::{
    beta_sweep, load_config, reproduce_figure, run_experiment, verify, write_files, SweepReport,
    VerifyOptions,
};
use btb_core::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "btb", version, about = "Nonlocal cross-diffusion with a Brinkman velocity law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics and snapshots.
    Run { config: PathBuf },
    /// Distance to the Darcy limit for each eps in eps_list.
    SweepEps { config: PathBuf },
    /// One run per beta in beta_list, compared by total-density variance.
    SweepBeta { config: PathBuf },
    /// Run the operator, truncation and entropy self-checks.
    Verify {
        config: Option<PathBuf>,
        /// Perturb the Laplacians seen by the symmetry checks (they must fail).
        #[arg(long, hide = true)]
        inject_asymmetric_laplacian: bool,
    },
    /// Write the snapshots and diagnostics of the three reference runs.
    ReproduceFigure {
        #[arg(default_value = "figure_data")]
        out_dir: PathBuf,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    if err.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn print_report(report: &SweepReport) {
    for e in &report.entries {
        let mut line = format!("{} = {}", report.parameter, e.value);
        if let Some(d) = e.distance {
            line.push_str(&format!("  distance = {d:.6e}"));
        }
        for (k, v) in &e.variances {
            line.push_str(&format!("  var[{k}] = {v:.6e}"));
        }
        println!("{line}");
    }
    println!("{}: {}", report.claim, if report.verdict { "yes" } else { "no" });
}

fn written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(path: &Path) -> Result<ExitCode, Error> {
    let cfg = load_config(path)?;
    let art = run_experiment(&cfg)?;
    written(&write_files(&cfg.output_dir, &art.files())?);
    let last = art.output.records.last().expect("initial record");
    println!(
        "steps = {}  time = {}  entropy = {:.10e}  min density = {:.3e}",
        last.step, last.time, last.entropy, last.min_density
    );
    match &art.output.failure {
        Some(err) => {
            eprintln!("error: {err}");
            Ok(exit_code(err))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn sweep_eps(path: &Path) -> Result<ExitCode, Error> {
    let cfg = load_config(path)?;
    let report = localization_sweep(&cfg)?;
    written(&write_files(&cfg.output_dir, &[("sweep_eps.csv".into(), sweep_csv(&report))])?);
    print_report(&report);
    Ok(ExitCode::SUCCESS)
}

fn sweep_beta(path: &Path) -> Result<ExitCode, Error> {
    let cfg = load_config(path)?;
    let (report, runs) = beta_sweep(&cfg)?;
    let mut files = vec![("sweep_beta.csv".to_string(), sweep_csv(&report))];
    files.extend(runs.iter().flat_map(|r| r.files()));
    written(&write_files(&cfg.output_dir, &files)?);
    print_report(&report);
    Ok(ExitCode::SUCCESS)
}

fn run_verify(path: Option<&Path>, inject: bool) -> Result<ExitCode, Error> {
    let cfg = path.map(load_config).transpose()?;
    let opts = VerifyOptions {
        inject_asymmetric_laplacian: inject,
    };
    let report = verify(cfg.as_ref(), &opts)?;
    print!("{}", report.to_csv());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for c in report.failures() {
            eprintln!("FAILED {}/{}: {:e} > {:e}", c.suite, c.name, c.measured, c.tolerance);
        }
        Ok(ExitCode::from(1))
    }
}

fn figure(out_dir: &Path) -> Result<ExitCode, Error> {
    let runs = reproduce_figure()?;
    let files: Vec<(String, String)> = runs.iter().flat_map(|r| r.files()).collect();
    written(&write_files(out_dir, &files)?);
    println!(
        "{} snapshots for beta in {:?} at steps {:?}",
        runs.iter().map(|r| r.output.snapshots.len()).sum::<usize>(),
        FIGURE_BETAS,
        FIGURE_STEPS
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::SweepEps { config } => sweep_eps(config),
        Command::SweepBeta { config } => sweep_beta(config),
        Command::Verify {
            config,
            inject_asymmetric_laplacian,
        } => run_verify(config.as_deref(), *inject_asymmetric_laplacian),
        Command::ReproduceFigure { out_dir } => figure(out_dir),
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err}");
        exit_code(&err)
    })
}
