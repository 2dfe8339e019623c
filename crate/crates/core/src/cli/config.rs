//! Strict TOML run configuration with `[problem]`, `[solver]`, `[task]` and
//! `[output]` sections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Var};
use crate::nonlinearity::Nonlinearity;
use crate::radial::{RadialPotential, SolverOptions};
use crate::suite::default_fractions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::Validation { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityName {
    Mems,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    Radial,
    Square,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Solve,
    Branch,
    LambdaStar,
    VerifyAll,
    Planar,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Solve => "solve",
            TaskKind::Branch => "branch",
            TaskKind::LambdaStar => "lambda-star",
            TaskKind::VerifyAll => "verify-all",
            TaskKind::Planar => "planar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matrix {
    /// The built-in power-nonlinearity matrix.
    Default,
    /// Only the configured problem.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "d_nonlinearity")]
    pub nonlinearity: NonlinearityName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_geometry")]
    pub geometry: Geometry,
    #[serde(default = "d_gamma")]
    pub gamma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "d_cells")]
    pub cells: usize,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_tol_iter")]
    pub tol_iter: f64,
    #[serde(default = "d_tol_res")]
    pub tol_res: f64,
    #[serde(default = "d_iter_max")]
    pub iter_max: usize,
    #[serde(default = "d_eps_cap")]
    pub eps_cap: f64,
    #[serde(default = "d_tol_bracket")]
    pub tol_bracket: f64,
    #[serde(default = "d_threads")]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "d_matrix")]
    pub matrix: Matrix,
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    #[serde(default = "d_q")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_directory")]
    pub directory: String,
    #[serde(default = "d_formats")]
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_problem")]
    pub problem: ProblemConfig,
    #[serde(default = "d_solver")]
    pub solver: SolverConfig,
    #[serde(default = "d_task")]
    pub task: TaskConfig,
    #[serde(default = "d_output")]
    pub output: OutputConfig,
}

fn d_nonlinearity() -> NonlinearityName {
    NonlinearityName::Mems
}
fn d_n() -> usize {
    2
}
fn d_geometry() -> Geometry {
    Geometry::Radial
}
fn d_gamma() -> String {
    "0".into()
}
fn d_cells() -> usize {
    2048
}
fn d_m() -> usize {
    129
}
fn d_tol_iter() -> f64 {
    SolverOptions::default().tol_iter
}
fn d_tol_res() -> f64 {
    SolverOptions::default().tol_res
}
fn d_iter_max() -> usize {
    SolverOptions::default().iter_max
}
fn d_eps_cap() -> f64 {
    SolverOptions::default().eps_cap
}
fn d_tol_bracket() -> f64 {
    1e-8
}
fn d_threads() -> usize {
    1
}
fn d_matrix() -> Matrix {
    Matrix::Default
}
fn d_q() -> f64 {
    2.0
}
fn d_directory() -> String {
    "out".into()
}
fn d_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}
fn d_problem() -> ProblemConfig {
    toml::from_str("").expect("defaults")
}
fn d_solver() -> SolverConfig {
    toml::from_str("").expect("defaults")
}
fn d_task() -> TaskConfig {
    toml::from_str("").expect("defaults")
}
fn d_output() -> OutputConfig {
    toml::from_str("").expect("defaults")
}

/// Default power when `nonlinearity = "mems"` omits `p`.
pub const DEFAULT_POWER: f64 = 2.0;

/// Parses and validates; defaults are filled in so the result serializes to
/// a complete effective configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError::Parse { line, message: e.message().trim().to_string() }
    })?;
    if cfg.problem.nonlinearity == NonlinearityName::Mems && cfg.problem.p.is_none() {
        cfg.problem.p = Some(DEFAULT_POWER);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn positive(key: &str, name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("{name} must be > 0")))
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pr = &self.problem;
        match (pr.nonlinearity, pr.p) {
            (NonlinearityName::Mems, Some(p)) => positive("problem.p", "p", p)?,
            (NonlinearityName::Exp, Some(_)) => return Err(ConfigError::invalid("problem.p", "p applies only to nonlinearity = \"mems\"")),
            _ => {}
        }
        if pr.n < 1 {
            return Err(ConfigError::invalid("problem.n", "n must be >= 1"));
        }
        let planar = pr.geometry != Geometry::Radial;
        if planar && pr.n != 2 {
            return Err(ConfigError::invalid("problem.n", "planar geometries require n = 2"));
        }
        if pr.c.is_some() && !planar {
            return Err(ConfigError::invalid("problem.c", "an explicit drift field requires a planar geometry"));
        }
        self.gamma_expr()?;
        self.drift_exprs()?;

        let s = &self.solver;
        if s.cells < 16 {
            return Err(ConfigError::invalid("solver.cells", "cells must be >= 16"));
        }
        if s.m < 3 {
            return Err(ConfigError::invalid("solver.m", "m must be >= 3"));
        }
        positive("solver.tol_iter", "tol_iter", s.tol_iter)?;
        positive("solver.tol_res", "tol_res", s.tol_res)?;
        positive("solver.tol_bracket", "tol_bracket", s.tol_bracket)?;
        if s.iter_max < 1 {
            return Err(ConfigError::invalid("solver.iter_max", "iter_max must be >= 1"));
        }
        if !(s.eps_cap > 0.0 && s.eps_cap < 0.5) {
            return Err(ConfigError::invalid("solver.eps_cap", "eps_cap must lie in (0, 0.5)"));
        }
        if s.threads < 1 {
            return Err(ConfigError::invalid("solver.threads", "threads must be >= 1"));
        }

        let t = &self.task;
        if let Some(l) = t.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(ConfigError::invalid("task.lambda", "lambda must be >= 0"));
            }
        }
        if let Some(ls) = &t.lambdas {
            if ls.is_empty() || ls.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(ConfigError::invalid("task.lambdas", "lambdas must be a nonempty list of values >= 0"));
            }
        }
        if t.fractions.is_empty() || t.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || t.fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::invalid("task.fractions", "fractions must be increasing values in (0, 1)"));
        }
        if t.amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(ConfigError::invalid("task.amplitudes", "amplitudes must be finite"));
        }
        if !(t.q > 1.0) {
            return Err(ConfigError::invalid("task.q", "q must be > 1"));
        }
        if let Some(kind) = t.kind {
            let needs_planar = kind == TaskKind::Planar;
            if needs_planar != planar && kind != TaskKind::VerifyAll {
                let message = if needs_planar { "task planar requires geometry = \"square\" or \"disk\"" } else { "this task requires geometry = \"radial\"" };
                return Err(ConfigError::invalid("problem.geometry", message));
            }
            if kind == TaskKind::Solve && t.lambda.is_none() {
                return Err(ConfigError::invalid("task.lambda", "task solve requires lambda"));
            }
        }
        if self.output.directory.is_empty() {
            return Err(ConfigError::invalid("output.directory", "directory must not be empty"));
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.problem.nonlinearity {
            NonlinearityName::Mems => Nonlinearity::mems(self.problem.p.unwrap_or(DEFAULT_POWER)).expect("validated power"),
            NonlinearityName::Exp => Nonlinearity::exp_singular(),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions { tol_iter: s.tol_iter, tol_res: s.tol_res, iter_max: s.iter_max, eps_cap: s.eps_cap }
    }

    fn vars(&self) -> &'static [Var] {
        if self.problem.geometry == Geometry::Radial {
            &[Var::R]
        } else {
            &[Var::R, Var::X, Var::Y]
        }
    }

    pub fn gamma_expr(&self) -> Result<Expr, ConfigError> {
        Expr::parse(&self.problem.gamma, self.vars()).map_err(|e| ConfigError::invalid("problem.gamma", e.to_string()))
    }

    pub fn drift_exprs(&self) -> Result<Option<[Expr; 2]>, ConfigError> {
        let Some([cx, cy]) = &self.problem.c else { return Ok(None) };
        let parse = |s: &str| Expr::parse(s, self.vars()).map_err(|e| ConfigError::invalid("problem.c", e.to_string()));
        Ok(Some([parse(cx)?, parse(cy)?]))
    }

    pub fn radial_potential(&self) -> Result<RadialPotential, ConfigError> {
        let g = self.gamma_expr()?;
        if g.is_constant_zero() {
            return Ok(RadialPotential::Zero);
        }
        let label = g.text().to_string();
        Ok(RadialPotential::function(label, move |r| g.eval(r, 0.0, 0.0)))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
