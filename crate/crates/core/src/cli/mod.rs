//! Batch runs driven by a [`RunConfig`]: task dispatch, artifacts on disk
//! and exit codes.
//!
//! Every run writes `config.toml` (the effective configuration),
//! `summary.txt`, and, depending on the task and `output.formats`,
//! `branch.csv`, `profiles/*.csv`, `reports.json` and planar binaries.

mod config;
mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{parse_config, ConfigError, Format, Geometry, Matrix, NonlinearityName, RunConfig, TaskKind, DEFAULT_POWER};
use output::{fmt_f, write_branch_csv, write_radial_profile};

use crate::nonlinearity::{check_hypotheses, LimitSchedule, Nonlinearity};
use crate::planar::{
    self, find_lambda_star_2d, maximum_principle_check, minimal_solve_2d, principal_eigenvalue_2d, shear_flow_table, sup_bound_sweep, DiskMask, Drift,
    PlanarGrid,
};
use crate::radial::{branch_sweep, find_lambda_star, minimal_solve, BranchPoint, RadialGrid, SolveError};
use crate::stability::{principal_eigenvalue, stability_sweep};
use crate::suite::{default_matrix, monotonicity_report, run_case, stability_reports, CaseSpec, SuiteError, SuiteOptions};
use crate::verification::{ff_prime_integral, h1_energy, pointwise_f_bound, regularity_verdict_theorem, InequalityReport, Setting, BOUND_FACTOR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_QUENCHED: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Random sources per operator in the maximum-principle check.
pub const MAX_PRINCIPLE_SOURCES: usize = 20;
/// Planar sup-bound sweeps use the configured fractions within this range;
/// below it the ratio scales like `λ` and carries no information.
pub const SUP_BOUND_FRACTIONS: (f64, f64) = (0.5, 0.99);
/// Bound on `max/min` of the sup-bound ratio along the sweep.
pub const SUP_BOUND_SPREAD: f64 = 10.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solve(SolveError::Quenched { .. }) => EXIT_QUENCHED,
            _ => EXIT_ERROR,
        }
    }
}

impl From<crate::stability::StabilityError> for RunError {
    fn from(e: crate::stability::StabilityError) -> Self {
        RunError::Other(e.to_string())
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub directory: PathBuf,
}

/// Runs the task in `cfg.task.kind` and writes all artifacts below
/// `cfg.output.directory`. `seed` drives only the randomized checks.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let kind = cfg.task.kind.ok_or_else(|| ConfigError::Validation { key: "task.kind".into(), message: "no task selected".into() })?;
    let dir = PathBuf::from(&cfg.output.directory);
    fs::create_dir_all(dir.join("profiles"))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut ctx = Context { cfg, dir: dir.clone(), summary: String::new(), reports: serde_json::Map::new(), seed };
    writeln!(ctx.summary, "task: {}", kind.name()).ok();
    writeln!(ctx.summary, "nonlinearity: {}", cfg.nonlinearity().label()).ok();
    let result = match kind {
        TaskKind::Solve => ctx.solve(),
        TaskKind::Branch => ctx.branch(),
        TaskKind::LambdaStar => ctx.lambda_star(),
        TaskKind::VerifyAll => ctx.verify_all(),
        TaskKind::Planar => ctx.planar(),
    };
    let exit_code = match result {
        Ok(code) => code,
        Err(e) => {
            writeln!(ctx.summary, "error: {e}").ok();
            ctx.reports.insert("error".into(), json!(e.to_string()));
            ctx.finish()?;
            return Err(e);
        }
    };
    writeln!(ctx.summary, "exit code: {exit_code}").ok();
    ctx.finish()?;
    Ok(RunOutcome { exit_code, summary: ctx.summary, directory: dir })
}

struct Context<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    summary: String,
    reports: serde_json::Map<String, Value>,
    seed: u64,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

impl Context<'_> {
    fn finish(&self) -> Result<(), RunError> {
        fs::write(self.dir.join("summary.txt"), &self.summary)?;
        if self.cfg.wants(Format::Json) {
            let text = serde_json::to_string_pretty(&Value::Object(self.reports.clone())).map_err(|e| RunError::Other(e.to_string()))?;
            fs::write(self.dir.join("reports.json"), text + "\n")?;
        }
        Ok(())
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn csv(&self) -> bool {
        self.cfg.wants(Format::Csv)
    }

    fn grid(&self) -> Result<RadialGrid, RunError> {
        let pot = self.cfg.radial_potential()?;
        RadialGrid::uniform(self.cfg.problem.n, self.cfg.solver.cells, pot).map_err(|e| RunError::Other(e.to_string()))
    }

    fn add_reports(&mut self, key: &str, reports: &[InequalityReport]) -> bool {
        let pass = reports.iter().all(|r| r.pass);
        for r in reports {
            writeln!(self.summary, "  {:<24} {}  lhs={} rhs={}", r.name, if r.pass { "pass" } else { "FAIL" }, fmt_f(r.lhs), fmt_f(r.rhs)).ok();
        }
        self.reports.insert(key.into(), to_value(&reports));
        pass
    }

    fn solve(&mut self) -> Result<i32, RunError> {
        let f = self.cfg.nonlinearity();
        let grid = self.grid()?;
        let lambda = self.cfg.task.lambda.unwrap_or(0.0);
        let opts = self.cfg.solver_options();
        let mut point = match minimal_solve(&grid, &f, lambda, &opts) {
            Ok(p) => p,
            Err(SolveError::Quenched { lambda, iteration }) => {
                writeln!(self.summary, "quenched: no minimal solution at lambda = {} (iteration {iteration})", fmt_f(lambda)).ok();
                self.reports.insert("quenched".into(), json!({ "lambda": lambda, "iteration": iteration }));
                return Ok(EXIT_QUENCHED);
            }
            Err(e) => return Err(e.into()),
        };
        point.mu1 = Some(principal_eigenvalue(&grid, &f, &point)?.mu1);
        writeln!(self.summary, "lambda: {}\nsup_u: {}\nmu1: {}", fmt_f(lambda), fmt_f(point.sup_u), fmt_f(point.mu1.unwrap_or(f64::NAN))).ok();
        if self.csv() {
            write_radial_profile(&self.path("profiles/solution.csv"), &grid.nodes, &point.u)?;
            write_branch_csv(&self.path("branch.csv"), std::slice::from_ref(&point))?;
        }
        self.reports.insert("solution".into(), point_json(&point));
        Ok(EXIT_OK)
    }

    fn branch(&mut self) -> Result<i32, RunError> {
        let f = self.cfg.nonlinearity();
        let grid = self.grid()?;
        let opts = self.cfg.solver_options();
        let lambdas = match &self.cfg.task.lambdas {
            Some(l) => l.clone(),
            None => {
                let cont = find_lambda_star(&grid, &f, self.cfg.solver.tol_bracket, &opts)?;
                writeln!(self.summary, "lambda* in [{}, {}]", fmt_f(cont.lambda_star_low), fmt_f(cont.lambda_star_high)).ok();
                self.cfg.task.fractions.iter().map(|t| t * cont.lambda_star_low).collect()
            }
        };
        let mut points = Vec::new();
        let mut quenched = Vec::new();
        for (l, r) in lambdas.iter().zip(branch_sweep(&grid, &f, &lambdas, &opts)) {
            match r {
                Ok(p) => points.push(p),
                Err(SolveError::Quenched { .. }) => quenched.push(*l),
                Err(e) => return Err(e.into()),
            }
        }
        points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let mu = stability_sweep(&grid, &f, &points)?;
        for (p, m) in points.iter_mut().zip(&mu) {
            p.mu1 = Some(*m);
        }
        writeln!(self.summary, "converged points: {}\nquenched lambdas: {}", points.len(), quenched.len()).ok();
        for l in &quenched {
            writeln!(self.summary, "  quenched at lambda = {}", fmt_f(*l)).ok();
        }
        if self.csv() {
            write_branch_csv(&self.path("branch.csv"), &points)?;
            for (k, p) in points.iter().enumerate() {
                write_radial_profile(&self.path(&format!("profiles/branch_{k:03}.csv")), &grid.nodes, &p.u)?;
            }
        }
        self.reports.insert("quenched".into(), json!(quenched));
        self.reports.insert("branch".into(), Value::Array(points.iter().map(point_json).collect()));
        if !points.is_empty() {
            let zero = minimal_solve(&grid, &f, 0.0, &opts)?;
            let mu_zero = principal_eigenvalue(&grid, &f, &zero)?.mu1;
            let mut reports = vec![monotonicity_report(&points)];
            reports.extend(stability_reports(&mu, mu_zero));
            reports.extend(branch_bounds(&grid, &f, &points));
            self.add_reports("reports", &reports);
        }
        Ok(if quenched.is_empty() { EXIT_OK } else { EXIT_QUENCHED })
    }

    fn lambda_star(&mut self) -> Result<i32, RunError> {
        let f = self.cfg.nonlinearity();
        let grid = self.grid()?;
        let opts = self.cfg.solver_options();
        let cont = find_lambda_star(&grid, &f, self.cfg.solver.tol_bracket, &opts)?;
        let hyp = check_hypotheses(&f, LimitSchedule::default()).map_err(|e| RunError::Other(e.to_string()))?;
        let pot = self.cfg.radial_potential()?;
        let theorem = regularity_verdict_theorem(Some(cont.verdict), &hyp, self.cfg.problem.n, Setting::radial(&f, pot.is_zero()));
        writeln!(self.summary, "n: {}\ncells: {}", self.cfg.problem.n, self.cfg.solver.cells).ok();
        writeln!(self.summary, "lambda* in [{}, {}]", fmt_f(cont.lambda_star_low), fmt_f(cont.lambda_star_high)).ok();
        writeln!(self.summary, "fold lambda: {}", fmt_f(cont.extremal_lambda)).ok();
        writeln!(self.summary, "sup extremal u: {}", fmt_f(cont.sup_extremal())).ok();
        writeln!(self.summary, "verdict: {:?}", cont.verdict).ok();
        if let Some(k) = cont.fitted_exponent {
            writeln!(self.summary, "fitted gradient exponent: {}", fmt_f(k)).ok();
        }
        writeln!(self.summary, "theorem prediction: {:?} ({})", theorem.prediction, theorem.rule.unwrap_or("none")).ok();
        if theorem.contradiction {
            writeln!(self.summary, "warning: numerical verdict contradicts the theorem prediction").ok();
        }
        if self.csv() {
            write_radial_profile(&self.path("profiles/extremal.csv"), &grid.nodes, &cont.extremal_u)?;
            write_branch_csv(&self.path("branch.csv"), std::slice::from_ref(&cont.fine.last_point))?;
        }
        self.reports.insert(
            "lambda_star".into(),
            json!({
                "low": cont.lambda_star_low,
                "high": cont.lambda_star_high,
                "fold_lambda": cont.extremal_lambda,
                "fold_gap_fine": cont.fine.fold_gap,
                "fold_gap_coarse": cont.coarse.as_ref().map(|c| c.fold_gap),
                "verdict": cont.verdict,
                "fitted_exponent": cont.fitted_exponent,
            }),
        );
        self.reports.insert("theorem".into(), to_value(&theorem));
        self.reports.insert("hypotheses".into(), to_value(&hyp));
        Ok(EXIT_OK)
    }

    fn verify_all(&mut self) -> Result<i32, RunError> {
        let cells = self.cfg.solver.cells;
        let specs = match self.cfg.task.matrix {
            Matrix::Default => default_matrix(cells),
            Matrix::Config => {
                if self.cfg.problem.geometry != Geometry::Radial {
                    return Err(ConfigError::Validation { key: "task.matrix".into(), message: "matrix = \"config\" requires a radial geometry".into() }.into());
                }
                vec![CaseSpec { f: self.cfg.nonlinearity(), n: self.cfg.problem.n, potential: self.cfg.radial_potential()?, cells }]
            }
        };
        let opts = SuiteOptions {
            solver: self.cfg.solver_options(),
            tol_bracket: self.cfg.solver.tol_bracket,
            fractions: self.cfg.task.fractions.clone(),
            ..SuiteOptions::default()
        };
        let outcomes: Vec<_> = specs.par_iter().map(|s| run_case(s, &opts)).collect();
        let mut all_pass = true;
        let mut cases = Vec::new();
        writeln!(self.summary, "{:<36} {:>22} {:>12} {:>26} {:>6}", "case", "lambda*_low", "verdict", "prediction", "pass").ok();
        for (k, (spec, outcome)) in specs.iter().zip(outcomes).enumerate() {
            let outcome = outcome?;
            let pass = outcome.pass();
            all_pass &= pass;
            writeln!(
                self.summary,
                "{:<36} {:>22} {:>12} {:>26} {:>6}",
                spec.label(),
                fmt_f(outcome.lambda_star_low),
                format!("{:?}", outcome.verdict),
                format!("{:?}", outcome.theorem.prediction),
                if pass { "yes" } else { "NO" }
            )
            .ok();
            for r in outcome.reports.iter().filter(|r| !r.pass) {
                writeln!(self.summary, "    failed: {} lhs={} rhs={}", r.name, fmt_f(r.lhs), fmt_f(r.rhs)).ok();
            }
            if self.csv() {
                write_branch_csv(&self.path(&format!("profiles/case_{k:02}_branch.csv")), &outcome.branch)?;
                write_radial_profile(&self.path(&format!("profiles/case_{k:02}_extremal.csv")), &outcome.continuation.nodes, &outcome.continuation.extremal_u)?;
            }
            cases.push(to_value(&outcome));
        }
        self.reports.insert("cases".into(), Value::Array(cases));
        let planar = planar_maximum_principle(self.seed)?;
        writeln!(self.summary, "planar maximum principle (seed {}):", self.seed).ok();
        all_pass &= self.add_reports("planar", &planar);
        writeln!(self.summary, "all checks pass: {all_pass}").ok();
        self.reports.insert("pass".into(), json!(all_pass));
        Ok(if all_pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
    }

    fn planar_grid(&self, m: usize) -> Result<PlanarGrid, RunError> {
        let gamma = self.cfg.gamma_expr()?;
        let mut drift = Drift::none();
        if !gamma.is_constant_zero() {
            let label = gamma.text().to_string();
            drift.gamma = Some((label, std::sync::Arc::new(move |x, y| gamma.eval(planar_r(x, y), x, y))));
        }
        if let Some([cx, cy]) = self.cfg.drift_exprs()? {
            let label = format!("({}, {})", cx.text(), cy.text());
            drift.field = Some((label, std::sync::Arc::new(move |x, y| {
                let r = planar_r(x, y);
                (cx.eval(r, x, y), cy.eval(r, x, y))
            })));
        }
        let grid = PlanarGrid::new(m, drift);
        Ok(if self.cfg.problem.geometry == Geometry::Disk { grid.with_mask(DiskMask::inscribed()) } else { grid })
    }

    fn planar(&mut self) -> Result<i32, RunError> {
        let f = self.cfg.nonlinearity();
        let opts = self.cfg.solver_options();
        let m = self.cfg.solver.m;
        let grid = self.planar_grid(m)?;
        let star = find_lambda_star_2d(&grid, &f, self.cfg.solver.tol_bracket, 1.0, &opts)?;
        writeln!(self.summary, "M: {m}\ndrift: {}", grid.drift.label()).ok();
        writeln!(self.summary, "lambda* in [{}, {}]", fmt_f(star.lambda_star_low), fmt_f(star.lambda_star_high)).ok();
        for w in &star.warnings {
            writeln!(self.summary, "warning: {w}").ok();
        }
        let lambda = self.cfg.task.lambda.unwrap_or(0.5 * star.lambda_star_low);
        let mut point = match minimal_solve_2d(&grid, &f, lambda, &opts) {
            Ok(p) => p,
            Err(SolveError::Quenched { lambda, iteration }) => {
                writeln!(self.summary, "quenched: no minimal solution at lambda = {} (iteration {iteration})", fmt_f(lambda)).ok();
                self.reports.insert("quenched".into(), json!({ "lambda": lambda, "iteration": iteration }));
                return Ok(EXIT_QUENCHED);
            }
            Err(e) => return Err(e.into()),
        };
        point.mu1 = Some(principal_eigenvalue_2d(&grid, &f, &point)?.mu1);
        writeln!(self.summary, "lambda: {}\nsup_u: {}\nmu1: {}", fmt_f(lambda), fmt_f(point.sup_u), fmt_f(point.mu1.unwrap_or(f64::NAN))).ok();

        let sweep_lambdas: Vec<f64> = self.cfg.task.fractions.iter().filter(|t| (SUP_BOUND_FRACTIONS.0..=SUP_BOUND_FRACTIONS.1).contains(*t)).map(|t| t * star.lambda_star_low).collect();
        let op = planar::assemble_advection_operator(&grid);
        let mut cache = crate::linalg::SparseFactorCache::new();
        let mut sweep: Vec<BranchPoint> = Vec::new();
        for l in sweep_lambdas {
            let start = sweep.last().map(|p| op.from_full(&p.u));
            sweep.push(planar::minimal_solve_2d_with(&op, m <= crate::linalg::DIRECT_SOLVE_MAX_SIDE, &mut cache, &f, l, start.as_deref(), &opts)?);
        }
        let mut reports = Vec::new();
        if !sweep.is_empty() {
            reports.push(sup_bound_sweep(&grid, &sweep, &f, self.cfg.task.q, SUP_BOUND_SPREAD)?);
        }
        reports.push(maximum_principle_check(&grid, MAX_PRINCIPLE_SOURCES, self.seed)?);
        let pass = self.add_reports("reports", &reports);

        if self.csv() {
            planar::write_xyu_csv(&self.path("profiles/planar.csv"), &grid, &point.u)?;
            write_branch_csv(&self.path("branch.csv"), &sweep)?;
        }
        if self.cfg.wants(Format::Binary) {
            planar::write_binary(&self.path("profiles/planar.bin"), m, &point.u)?;
        }
        self.reports.insert(
            "planar".into(),
            json!({
                "m": m,
                "drift": grid.drift.label(),
                "lambda_star_low": star.lambda_star_low,
                "lambda_star_high": star.lambda_star_high,
                "warnings": star.warnings,
                "solution": point_json(&point),
            }),
        );
        if !self.cfg.task.amplitudes.is_empty() {
            writeln!(self.summary, "shear flow c = A(-sin(pi y), 0):").ok();
            let mut table = Vec::new();
            for (a, r) in shear_flow_table(m, &f, &self.cfg.task.amplitudes, self.cfg.solver.tol_bracket, &opts) {
                let r = r?;
                writeln!(self.summary, "  A = {:>8}  lambda* in [{}, {}]", a, fmt_f(r.lambda_star_low), fmt_f(r.lambda_star_high)).ok();
                table.push(json!({ "amplitude": a, "lambda_star_low": r.lambda_star_low, "lambda_star_high": r.lambda_star_high }));
            }
            self.reports.insert("shear_flow".into(), Value::Array(table));
        }
        Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
    }
}

/// Planar `r`: distance to the square's centre scaled so the inscribed disk is `r < 1`.
fn planar_r(x: f64, y: f64) -> f64 {
    2.0 * (x - 0.5).hypot(y - 0.5)
}

fn point_json(p: &BranchPoint) -> Value {
    json!({
        "lambda": p.lambda,
        "sup_u": p.sup_u,
        "mu1": p.mu1,
        "iterations": p.iterations,
        "residual": p.residual,
        "min_increment": p.min_increment,
    })
}

fn branch_bounds(grid: &RadialGrid, f: &Nonlinearity, points: &[BranchPoint]) -> Vec<InequalityReport> {
    let h1 = vec![points.iter().map(|p| h1_energy(grid, p)).collect()];
    let ff = vec![points.iter().map(|p| ff_prime_integral(grid, f, p).value).collect()];
    vec![
        InequalityReport::bounded("h1_energy", &h1, BOUND_FACTOR, Default::default()),
        InequalityReport::bounded("ff_prime_integral", &ff, BOUND_FACTOR, Default::default()),
        pointwise_f_bound(&[(grid, points)], f),
    ]
}

/// Maximum principle on a few drift fields at a small grid.
fn planar_maximum_principle(seed: u64) -> Result<Vec<InequalityReport>, RunError> {
    let fields = [
        Drift::none(),
        Drift::field("16*(-sin(pi*y), 0)", |_, y| (-16.0 * (std::f64::consts::PI * y).sin(), 0.0)),
        Drift::field("200*(y-1/2, 1/2-x)", |x, y| (200.0 * (y - 0.5), 200.0 * (0.5 - x))),
    ];
    fields
        .into_iter()
        .enumerate()
        .map(|(k, d)| Ok(maximum_principle_check(&PlanarGrid::new(33, d), MAX_PRINCIPLE_SOURCES, seed.wrapping_add(k as u64))?))
        .collect()
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}
