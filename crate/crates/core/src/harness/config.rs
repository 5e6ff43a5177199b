//! Plain-text experiment configuration.
//!
//! ```text
//! [grid]
//! dimension = 2
//! cells = 20
//! [model]
//! beta = 1.5
//! a = 5 1 1; 1 1 0.5; 1 0.5 0.5
//! ```
//!
//! Lines are `key = value`, `#` starts a comment. Settings that accept `auto`
//! (`eta`, `trunc_n`, `scheme`) are resolved from the grid, the exponent and
//! the initial data when the file is loaded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, ScalarField};
use crate::integrator::{
    default_eta, default_truncation_level, select_scheme, ConvectionScheme, SchemeVariant,
    TimeStepConfig, DEFAULT_PICARD_MAX, DEFAULT_PICARD_TOL,
};
use crate::pressure::{reference_matrix, ModelParams};

/// The bundled reference configuration.
pub const REFERENCE_CFG: &str = include_str!("../../configs/reference.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Run,
    SweepEps,
    SweepBeta,
    Verify,
    ReproduceFigure,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::SweepEps => "sweep_eps",
            ExperimentKind::SweepBeta => "sweep_beta",
            ExperimentKind::Verify => "verify",
            ExperimentKind::ReproduceFigure => "reproduce_figure",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::Run,
            ExperimentKind::SweepEps,
            ExperimentKind::SweepBeta,
            ExperimentKind::Verify,
            ExperimentKind::ReproduceFigure,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Gaussian bumps of height one on a background of 0.5, species `i`
    /// centred at `0.25 i` along every axis.
    Bumps,
    Constant(f64),
    /// `1 + 0.5 Π_k cos(π x_k)` for every species.
    Cosine,
}

impl InitialData {
    pub fn evaluate(&self, grid: &Grid, n_species: usize) -> Vec<ScalarField> {
        (1..=n_species)
            .map(|i| match *self {
                InitialData::Bumps => {
                    let c = 0.25 * i as f64;
                    ScalarField::from_fn(grid, |x| {
                        let r2: f64 = x.iter().map(|xk| (xk - c) * (xk - c)).sum();
                        (-100.0 * r2).exp() + 0.5
                    })
                }
                InitialData::Constant(c) => ScalarField::constant(grid, c),
                InitialData::Cosine => ScalarField::from_fn(grid, |x| {
                    1.0 + 0.5 * x.iter().map(|xk| (std::f64::consts::PI * xk).cos()).product::<f64>()
                }),
            })
            .collect()
    }

    fn render(&self) -> String {
        match self {
            InitialData::Bumps => "bumps".into(),
            InitialData::Constant(c) => format!("constant {c}"),
            InitialData::Cosine => "cosine".into(),
        }
    }
}

/// Which of the resolved values came from `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AutoSettings {
    pub eta: bool,
    pub trunc_n: bool,
    pub scheme: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    pub stepping: TimeStepConfig,
    pub t_end: f64,
    pub snapshot_steps: Vec<usize>,
    pub output_dir: PathBuf,
    pub experiment: ExperimentKind,
    pub eps_list: Vec<f64>,
    pub beta_list: Vec<f64>,
    pub initial: InitialData,
    pub auto: AutoSettings,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        parse_config(REFERENCE_CFG).expect("bundled configuration is valid")
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.clone())
    }

    pub fn initial_data(&self, grid: &Grid) -> Vec<ScalarField> {
        self.initial.evaluate(grid, self.model.n_species())
    }

    /// Copy of this configuration with a different exponent. Settings that
    /// were `auto` are resolved again.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.model.beta = beta;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Copy with a different Brinkman viscosity.
    pub fn with_eps(&self, eps: f64) -> Self {
        let mut cfg = self.clone();
        cfg.model.eps = eps;
        cfg
    }

    /// Fills in `auto` settings and checks every invariant.
    fn resolve(&mut self) -> Result<()> {
        let grid = self.build_grid()?;
        if self.auto.scheme {
            self.stepping.variant = select_scheme(self.model.beta, grid.dimension());
        }
        if self.auto.eta {
            self.model.eta = match self.stepping.variant {
                SchemeVariant::Plain => 0.0,
                _ => default_eta(&grid),
            };
        }
        if self.auto.trunc_n {
            self.model.trunc_n = match self.stepping.variant {
                SchemeVariant::Truncated => {
                    Some(default_truncation_level(&self.initial_data(&grid)))
                }
                _ => None,
            };
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.stepping.validate()?;
        if self.stepping.variant == SchemeVariant::Truncated && self.model.trunc_n.is_none() {
            return Err(Error::InvalidParams(
                "the truncated scheme needs trunc_n".into(),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidStepping(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !self.eps_list.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::InvalidParams(
                "eps_list must be strictly decreasing".into(),
            ));
        }
        if self.eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidParams("eps_list entries must be positive".into()));
        }
        if self.beta_list.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidParams("beta_list entries must be positive".into()));
        }
        if let InitialData::Constant(c) = self.initial {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "constant initial data must be nonnegative, got {c}"
                )));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("grid", &["dimension", "cells", "origin", "extent"]),
    (
        "model",
        &["beta", "sigma", "a", "eps", "eta", "trunc_n", "initial"],
    ),
    (
        "stepping",
        &["tau", "t_end", "picard_tol", "picard_max", "convection", "scheme"],
    ),
    (
        "experiment",
        &["kind", "output_dir", "snapshot_steps", "eps_list", "beta_list"],
    ),
];

struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Entries(Vec<Entry>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.iter().find(|e| e.key == key)
    }

    fn parse<T>(&self, key: &str, default: Option<T>, f: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.get(key) {
            Some(e) => f(&e.value).ok_or_else(|| Error::Config {
                line: e.line,
                key: key.into(),
                message: format!("cannot parse `{}`", e.value),
            }),
            None => default.ok_or_else(|| Error::Config {
                line: 0,
                key: key.into(),
                message: "required key is missing".into(),
            }),
        }
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.get(key).map_or(0, |e| e.line),
            key: key.into(),
            message: message.into(),
        }
    }
}

fn number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn numbers(s: &str) -> Option<Vec<f64>> {
    s.split_whitespace().map(number).collect()
}

fn counts(s: &str) -> Option<Vec<usize>> {
    s.split_whitespace().map(|t| t.parse().ok()).collect()
}

fn matrix(s: &str) -> Option<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s.split(';').map(numbers).collect::<Option<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return None;
    }
    Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `auto`, `off` or a number.
enum Setting {
    Auto,
    Off,
    Value(f64),
}

fn setting(s: &str) -> Option<Setting> {
    match s {
        "auto" => Some(Setting::Auto),
        "off" => Some(Setting::Off),
        _ => number(s).map(Setting::Value),
    }
}

fn initial(s: &str) -> Option<InitialData> {
    let mut parts = s.split_whitespace();
    let data = match parts.next()? {
        "bumps" => InitialData::Bumps,
        "cosine" => InitialData::Cosine,
        "constant" => InitialData::Constant(number(parts.next()?)?),
        _ => return None,
    };
    parts.next().is_none().then_some(data)
}

fn scheme(s: &str) -> Option<Option<SchemeVariant>> {
    match s {
        "auto" => Some(None),
        "plain" => Some(Some(SchemeVariant::Plain)),
        "eta_regularized" => Some(Some(SchemeVariant::EtaRegularized)),
        "truncated" => Some(Some(SchemeVariant::Truncated)),
        _ => None,
    }
}

fn convection(s: &str) -> Option<ConvectionScheme> {
    match s {
        "upwind" => Some(ConvectionScheme::Upwind),
        "central" => Some(ConvectionScheme::Central),
        _ => None,
    }
}

fn read_entries(text: &str) -> Result<Entries> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut section: Option<&[&str]> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(_, keys)| *keys)
                    .ok_or_else(|| Error::Config {
                        line,
                        key: name.into(),
                        message: "unknown section".into(),
                    })?,
            );
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            key: content.into(),
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let keys = section.ok_or_else(|| Error::Config {
            line,
            key: key.into(),
            message: "key outside of a section".into(),
        })?;
        if !keys.contains(&key) {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: "unknown key".into(),
            });
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: "duplicate key".into(),
            });
        }
        entries.push(Entry {
            line,
            key: key.into(),
            value: value.trim().into(),
        });
    }
    Ok(Entries(entries))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let e = read_entries(text)?;

    let dimension = e.parse("dimension", Some(2), |s| s.parse::<usize>().ok())?;
    if !(1..=2).contains(&dimension) {
        return Err(e.invalid("dimension", format!("dimension must be 1 or 2, got {dimension}")));
    }
    let per_axis = |key: &str, v: Vec<f64>| -> Result<Vec<f64>> {
        match v.len() {
            1 => Ok(vec![v[0]; dimension]),
            n if n == dimension => Ok(v),
            n => Err(e.invalid(key, format!("expected 1 or {dimension} values, got {n}"))),
        }
    };
    let cells = e.parse("cells", None, counts)?;
    let cells = per_axis("cells", cells.iter().map(|&c| c as f64).collect())?
        .into_iter()
        .map(|c| c as usize)
        .collect();
    let origin = per_axis("origin", e.parse("origin", Some(vec![0.0]), numbers)?)?;
    let extent = per_axis("extent", e.parse("extent", Some(vec![1.0]), numbers)?)?;
    let grid = GridSpec {
        dimension,
        origin,
        extent,
        cells_per_axis: cells,
    };

    let a = e.parse("a", Some(reference_matrix()), matrix)?;
    let n = a.nrows();
    let sigma = e.parse("sigma", None, numbers)?;
    let sigma = match sigma.len() {
        1 => vec![sigma[0]; n],
        m if m == n => sigma,
        m => return Err(e.invalid("sigma", format!("expected 1 or {n} values, got {m}"))),
    };
    let eta = e.parse("eta", Some(Setting::Auto), setting)?;
    let trunc = e.parse("trunc_n", Some(Setting::Auto), setting)?;
    let variant = e.parse("scheme", Some(None), scheme)?;
    let auto = AutoSettings {
        eta: matches!(eta, Setting::Auto),
        trunc_n: matches!(trunc, Setting::Auto),
        scheme: variant.is_none(),
    };
    let model = ModelParams {
        beta: e.parse("beta", None, number)?,
        sigma,
        a,
        eps: e.parse("eps", None, number)?,
        eta: match eta {
            Setting::Value(v) => v,
            Setting::Off | Setting::Auto => 0.0,
        },
        trunc_n: match trunc {
            Setting::Value(v) => Some(v),
            Setting::Off | Setting::Auto => None,
        },
    };

    let mut stepping = TimeStepConfig::new(
        e.parse("tau", None, number)?,
        variant.unwrap_or(SchemeVariant::Plain),
    );
    stepping.picard_tol = e.parse("picard_tol", Some(DEFAULT_PICARD_TOL), number)?;
    stepping.picard_max = e.parse("picard_max", Some(DEFAULT_PICARD_MAX), |s| s.parse().ok())?;
    stepping.convection = e.parse("convection", Some(ConvectionScheme::Upwind), convection)?;

    let mut cfg = ExperimentConfig {
        grid,
        model,
        stepping,
        t_end: e.parse("t_end", None, number)?,
        snapshot_steps: e.parse("snapshot_steps", Some(vec![15, 50, 250]), counts)?,
        output_dir: e.parse("output_dir", Some(PathBuf::from("output")), |s| {
            (!s.is_empty()).then(|| PathBuf::from(s))
        })?,
        experiment: e.parse("kind", Some(ExperimentKind::Run), ExperimentKind::parse)?,
        eps_list: e.parse("eps_list", Some(Vec::new()), numbers)?,
        beta_list: e.parse("beta_list", Some(Vec::new()), numbers)?,
        initial: e.parse("initial", Some(InitialData::Bumps), initial)?,
        auto,
    };
    cfg.resolve().map_err(|err| match err {
        Error::InvalidParams(m) | Error::InvalidStepping(m) | Error::InvalidGrid(m) => Error::Config {
            line: 0,
            key: "<validation>".into(),
            message: m,
        },
        other => other,
    })?;
    Ok(cfg)
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Serializes `cfg` so that [`parse_config`] reproduces it exactly.
pub fn write_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let m = &cfg.model;
    let st = &cfg.stepping;
    let rows: Vec<String> = m
        .a
        .row_iter()
        .map(|r| join(&r.iter().copied().collect::<Vec<_>>()))
        .collect();
    let auto_or = |auto: bool, v: String| if auto { "auto".to_string() } else { v };
    let _ = writeln!(s, "[grid]");
    let _ = writeln!(s, "dimension = {}", cfg.grid.dimension);
    let _ = writeln!(s, "cells = {}", join(&cfg.grid.cells_per_axis));
    let _ = writeln!(s, "origin = {}", join(&cfg.grid.origin));
    let _ = writeln!(s, "extent = {}", join(&cfg.grid.extent));
    let _ = writeln!(s, "\n[model]");
    let _ = writeln!(s, "beta = {}", m.beta);
    let _ = writeln!(s, "sigma = {}", join(&m.sigma));
    let _ = writeln!(s, "a = {}", rows.join("; "));
    let _ = writeln!(s, "eps = {}", m.eps);
    let _ = writeln!(s, "eta = {}", auto_or(cfg.auto.eta, m.eta.to_string()));
    let trunc = m.trunc_n.map_or("off".to_string(), |v| v.to_string());
    let _ = writeln!(s, "trunc_n = {}", auto_or(cfg.auto.trunc_n, trunc));
    let _ = writeln!(s, "initial = {}", cfg.initial.render());
    let _ = writeln!(s, "\n[stepping]");
    let _ = writeln!(s, "tau = {}", st.tau);
    let _ = writeln!(s, "t_end = {}", cfg.t_end);
    let _ = writeln!(s, "picard_tol = {}", st.picard_tol);
    let _ = writeln!(s, "picard_max = {}", st.picard_max);
    let conv = match st.convection {
        ConvectionScheme::Upwind => "upwind",
        ConvectionScheme::Central => "central",
    };
    let _ = writeln!(s, "convection = {conv}");
    let variant = match st.variant {
        SchemeVariant::Plain => "plain",
        SchemeVariant::EtaRegularized => "eta_regularized",
        SchemeVariant::Truncated => "truncated",
    };
    let _ = writeln!(s, "scheme = {}", auto_or(cfg.auto.scheme, variant.into()));
    let _ = writeln!(s, "\n[experiment]");
    let _ = writeln!(s, "kind = {}", cfg.experiment.name());
    let _ = writeln!(s, "output_dir = {}", cfg.output_dir.display());
    let _ = writeln!(s, "snapshot_steps = {}", join(&cfg.snapshot_steps));
    if !cfg.eps_list.is_empty() {
        let _ = writeln!(s, "eps_list = {}", join(&cfg.eps_list));
    }
    if !cfg.beta_list.is_empty() {
        let _ = writeln!(s, "beta_list = {}", join(&cfg.beta_list));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_matches_reference_parameters() {
        let cfg = ExperimentConfig::reference();
        assert_eq!(cfg.grid, GridSpec::unit_square(20));
        assert_eq!(cfg.model.sigma, vec![0.1; 3]);
        assert_eq!(cfg.model.a, reference_matrix());
        assert_eq!(cfg.model.eps, 1e-3);
        assert_eq!(cfg.stepping.tau, 4e-5);
        assert_eq!(cfg.snapshot_steps, vec![15, 50, 250]);
        assert_eq!(cfg.beta_list, vec![0.5, 1.5, 2.5]);
        assert_eq!(cfg.experiment, ExperimentKind::ReproduceFigure);
        assert_eq!(crate::integrator::step_count(cfg.t_end, cfg.stepping.tau), 250);
    }

    #[test]
    fn auto_settings_follow_beta() {
        let cfg = ExperimentConfig::reference();
        let low = cfg.with_beta(0.4).unwrap();
        assert_eq!(low.stepping.variant, SchemeVariant::Plain);
        assert_eq!(low.model.eta, 0.0);
        let high = cfg.with_beta(2.5).unwrap();
        assert_eq!(high.stepping.variant, SchemeVariant::Truncated);
        let max = high
            .initial_data(&high.build_grid().unwrap())
            .iter()
            .map(ScalarField::max)
            .fold(0.0, f64::max);
        assert!(max > 1.3 && max < 1.5);
        assert_eq!(high.model.trunc_n, Some(10.0 * (1.0 + max)));
        assert!((high.model.eta - 1e-6 * 0.05f64.powi(4)).abs() < 1e-25);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::reference().with_beta(2.5).unwrap();
        assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
        let mut fixed = cfg.clone();
        fixed.auto = AutoSettings::default();
        fixed.model.eta = 3.25e-9;
        fixed.initial = InitialData::Constant(0.75);
        fixed.eps_list = vec![0.1, 0.01];
        assert_eq!(parse_config(&write_config(&fixed)).unwrap(), fixed);
    }

    #[test]
    fn zero_matrix_rejected() {
        let text = REFERENCE_CFG.replace("a = 5 1 1; 1 1 0.5; 1 0.5 0.5", "a = 0 0 0; 0 0 0; 0 0 0");
        assert!(matches!(parse_config(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_key_names_the_key() {
        let text = REFERENCE_CFG.replace("[model]", "[model]\ngamma = 2");
        match parse_config(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "gamma");
                assert!(line > 0);
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn eps_list_must_decrease() {
        let text = REFERENCE_CFG.replace("[experiment]", "[experiment]\neps_list = 0.01 0.1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(parse_config("[grid]\ncells 20").is_err());
        assert!(parse_config("cells = 20").is_err());
        assert!(parse_config("[nope]").is_err());
        let bad_matrix = REFERENCE_CFG.replace("a = 5 1 1; 1 1 0.5; 1 0.5 0.5", "a = 5 1; 1 1 0.5");
        assert!(parse_config(&bad_matrix).is_err());
    }

    #[test]
    fn bumps_peak_values() {
        let cfg = ExperimentConfig::reference();
        let grid = cfg.build_grid().unwrap();
        let u = cfg.initial_data(&grid);
        // (0.25, 0.25) is a cell corner on the 20x20 grid, so check the
        // formula directly through a one-cell grid centred there.
        let g = Grid::new(GridSpec {
            dimension: 2,
            origin: vec![0.2, 0.2],
            extent: vec![0.1, 0.1],
            cells_per_axis: vec![1, 1],
        })
        .unwrap();
        let at = InitialData::Bumps.evaluate(&g, 3);
        assert_eq!(at[0].values[0], 1.5);
        assert!((at[1].values[0] - ((-12.5f64).exp() + 0.5)).abs() < 1e-15);
        assert!(u.iter().all(|f| f.min() >= 0.5));
    }
}
