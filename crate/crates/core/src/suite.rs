//! Radial verification matrix: threshold, minimal branch on two grids,
//! spectral stability, and the sweep-boundedness reports for each case.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::nonlinearity::{check_hypotheses, LimitSchedule, Nonlinearity, NonlinearityError};
use crate::radial::{branch_sweep, find_lambda_star, BranchPoint, ContinuationResult, RadialGrid, RadialPotential, SolveError, SolverOptions, Verdict};
use crate::stability::{hardy_check, principal_eigenvalue, stability_sweep, StabilityError, TestProfile, REPORT_TOL};
use crate::verification::{
    ff_prime_integral, h1_energy, pointwise_f_bound, regularity_verdict_theorem, decay_exponent_bound, InequalityReport, Setting, TheoremVerdict,
    BOUND_FACTOR,
};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("{0}")]
    Grid(String),
}

/// Slack for pointwise monotonicity of iterates and branches.
pub const MONOTONE_SLACK: f64 = 1e-10;
/// Allowed negative excursion of `μ₁` relative to `μ₁(0)`.
pub const STABILITY_SLACK: f64 = 1e-6;
/// Tolerance on `∫|∇ψ|² - λ∫f'(u)ψ² = μ₁ ∫ψ²` for the eigenfunction.
pub const MARGIN_TOL: f64 = 1e-6;
/// Allowed shortfall of the fitted decay exponent below the tabulated bound.
pub const EXPONENT_SLACK: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub f: Nonlinearity,
    pub n: usize,
    pub potential: RadialPotential,
    pub cells: usize,
}

impl CaseSpec {
    pub fn label(&self) -> String {
        format!("{} n={} gamma={} N={}", self.f.label(), self.n, self.potential.label(), self.cells)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub solver: SolverOptions,
    pub tol_bracket: f64,
    /// Sweep points as fractions of each grid's `λ*_low`, increasing.
    pub fractions: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            tol_bracket: 1e-8,
            fractions: default_fractions(),
            betas: vec![1.0, 1.5, 1.9],
        }
    }
}

pub fn default_fractions() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999]
}

/// `mems p ∈ {1, 2, 4}` × `n ∈ {2, 3, 7, 8, 10}`, no drift.
pub fn default_matrix(cells: usize) -> Vec<CaseSpec> {
    let mut out = Vec::new();
    for p in [1.0, 2.0, 4.0] {
        for n in [2, 3, 7, 8, 10] {
            out.push(CaseSpec { f: Nonlinearity::mems(p).expect("positive power"), n, potential: RadialPotential::Zero, cells });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub label: String,
    pub lambda_star_low: f64,
    pub lambda_star_high: f64,
    pub verdict: Verdict,
    pub fitted_exponent: Option<f64>,
    pub sup_extremal: f64,
    pub mu1_zero: f64,
    pub theorem: TheoremVerdict,
    pub reports: Vec<InequalityReport>,
    #[serde(skip)]
    pub continuation: ContinuationResult,
    /// Fine-grid branch with `μ₁` filled in.
    #[serde(skip)]
    pub branch: Vec<BranchPoint>,
}

impl CaseOutcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

fn sweep(grid: &RadialGrid, f: &Nonlinearity, lambda_star: f64, opts: &SuiteOptions) -> Result<Vec<BranchPoint>, SuiteError> {
    let lambdas: Vec<f64> = opts.fractions.iter().map(|t| t * lambda_star).collect();
    Ok(branch_sweep(grid, f, &lambdas, &opts.solver).into_iter().collect::<Result<_, _>>()?)
}

fn params(entries: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Largest pointwise decrease along the branch and within the iterations.
pub fn monotonicity_report(branch: &[BranchPoint]) -> InequalityReport {
    let within = branch.iter().map(|p| -p.min_increment).fold(0.0, f64::max);
    let across = branch
        .windows(2)
        .map(|w| w[0].u.iter().zip(&w[1].u).map(|(a, b)| a - b).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let worst = within.max(across);
    InequalityReport::single("monotone_iteration", worst, MONOTONE_SLACK, 0.0, params(&[("within_iterations", json!(within)), ("across_branch", json!(across))]))
}

/// `μ₁ ≥ -slack μ₁(0)` and `μ₁` nonincreasing in `λ`.
pub fn stability_reports(mu: &[f64], mu_zero: f64) -> [InequalityReport; 2] {
    let negative = mu.iter().map(|m| -m / mu_zero).fold(f64::NEG_INFINITY, f64::max);
    let rise = mu.windows(2).map(|w| (w[1] - w[0]) / mu_zero).fold(0.0, f64::max);
    [
        InequalityReport::single("stability_sign", negative, STABILITY_SLACK, 0.0, params(&[("mu1_zero", json!(mu_zero))])),
        InequalityReport::single("stability_monotone", rise, REPORT_TOL, 0.0, params(&[("mu1_zero", json!(mu_zero))])),
    ]
}

pub fn run_case(spec: &CaseSpec, opts: &SuiteOptions) -> Result<CaseOutcome, SuiteError> {
    let grid = RadialGrid::uniform(spec.n, spec.cells, spec.potential.clone()).map_err(|e| SuiteError::Grid(e.to_string()))?;
    let coarse = grid.coarsened().ok_or_else(|| SuiteError::Grid("grid too small to coarsen".into()))?;
    let f = &spec.f;
    let cont = find_lambda_star(&grid, f, opts.tol_bracket, &opts.solver)?;
    let coarse_star = cont.coarse.as_ref().map_or(cont.lambda_star_low, |c| c.lambda_low);

    let (fine_branch, coarse_branch) = rayon::join(|| sweep(&grid, f, cont.lambda_star_low, opts), || sweep(&coarse, f, coarse_star, opts));
    let mut branch = fine_branch?;
    let coarse_branch = coarse_branch?;
    let mu = stability_sweep(&grid, f, &branch)?;
    for (p, m) in branch.iter_mut().zip(&mu) {
        p.mu1 = Some(*m);
    }
    let zero = minimal_zero(&grid, f, &opts.solver)?;
    let mu_zero = principal_eigenvalue(&grid, f, &zero)?.mu1;

    let hyp = check_hypotheses(f, LimitSchedule::default())?;
    let theorem = regularity_verdict_theorem(Some(cont.verdict), &hyp, spec.n, Setting::radial(f, spec.potential.is_zero()));

    let mut reports = vec![InequalityReport::single(
        "theorem_verdict",
        f64::from(u8::from(theorem.contradiction)),
        0.0,
        0.0,
        params(&[("prediction", json!(theorem.prediction)), ("rule", json!(theorem.rule)), ("numerical", json!(cont.verdict))]),
    )];
    reports.push(monotonicity_report(&branch));
    reports.extend(stability_reports(&mu, mu_zero));

    let sweeps = [(&coarse, coarse_branch.as_slice()), (&grid, branch.as_slice())];
    let h1: Vec<Vec<f64>> = sweeps.iter().map(|(g, b)| b.iter().map(|p| h1_energy(g, p)).collect()).collect();
    reports.push(InequalityReport::bounded("h1_energy", &h1, BOUND_FACTOR, BTreeMap::new()));
    let mut warnings = Vec::new();
    let ff: Vec<Vec<f64>> = sweeps
        .iter()
        .map(|(g, b)| {
            b.iter()
                .map(|p| {
                    let q = ff_prime_integral(g, f, p);
                    warnings.extend(q.warning);
                    q.value
                })
                .collect()
        })
        .collect();
    let mut ff_report = InequalityReport::bounded("ff_prime_integral", &ff, BOUND_FACTOR, BTreeMap::new());
    ff_report.warnings = warnings;
    reports.push(ff_report);
    reports.push(pointwise_f_bound(&sweeps, f));

    let eigenfunctions: Vec<Vec<f64>> = branch.iter().map(|p| principal_eigenvalue(&grid, f, p).map(|e| e.eigenfunction)).collect::<Result<_, _>>()?;
    let profiles = [("paraboloid", TestProfile::Paraboloid.sample(&grid)), ("sine", TestProfile::Sine.sample(&grid))];
    for &beta in &opts.betas {
        for psi_name in ["eigenfunction", "paraboloid", "sine"] {
            let mut worst: Option<InequalityReport> = None;
            for (k, p) in branch.iter().enumerate() {
                let psi = match psi_name {
                    "eigenfunction" => &eigenfunctions[k],
                    "paraboloid" => &profiles[0].1,
                    _ => &profiles[1].1,
                };
                let r = hardy_check(&grid, f, p, beta, psi, 0.0)?;
                if worst.as_ref().is_none_or(|w| r.lhs / r.rhs > w.lhs / w.rhs) {
                    worst = Some(r);
                }
            }
            if let Some(mut r) = worst {
                r.params.insert("psi".into(), json!(psi_name));
                reports.push(r);
            }
        }
    }
    let top = branch.last().expect("nonempty sweep");
    let eig = principal_eigenvalue(&grid, f, top)?;
    let op = grid.assemble();
    let (grad, mass, react) = crate::stability::energy_terms(&op, f, top, &eig.eigenfunction);
    let expected = eig.mu1 * mass;
    reports.push(InequalityReport::single(
        "hardy_margin_identity",
        ((grad - react) - expected).abs() / expected.abs(),
        MARGIN_TOL,
        0.0,
        params(&[("margin", json!(grad - react)), ("mu1_mass", json!(expected))]),
    ));

    if let (Some(k), Ok(bound)) = (cont.fitted_exponent, decay_exponent_bound(spec.n)) {
        reports.push(InequalityReport::single("decay_exponent", bound - EXPONENT_SLACK, k, 0.0, params(&[("bound", json!(bound))])));
    }

    Ok(CaseOutcome {
        label: spec.label(),
        lambda_star_low: cont.lambda_star_low,
        lambda_star_high: cont.lambda_star_high,
        verdict: cont.verdict,
        fitted_exponent: cont.fitted_exponent,
        sup_extremal: cont.sup_extremal(),
        mu1_zero: mu_zero,
        theorem,
        reports,
        continuation: cont,
        branch,
    })
}

fn minimal_zero(grid: &RadialGrid, f: &Nonlinearity, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    crate::radial::minimal_solve(grid, f, 0.0, opts)
}
