//! Principal eigenvalue of the linearization `-Δ + c·∇ - λ f'(u)` and the
//! energy inequalities implied by stability of the minimal branch.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::linalg::{CsrMatrix, LinalgError, SparseFactorCache};
use crate::nonlinearity::Nonlinearity;
use crate::radial::{gradient_profile, BranchPoint, RadialGrid, RadialOperator};
use crate::verification::InequalityReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("{0}")]
    Domain(String),
    #[error("eigen-iteration did not converge in {iterations} steps")]
    NoConvergence { iterations: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    pub mu1: f64,
    /// Nodal values, maximum 1, positive.
    pub eigenfunction: Vec<f64>,
    pub iterations: usize,
    /// `‖Lφ - μ₁φ‖∞ / (‖diag L‖∞ ‖φ‖∞)`.
    pub residual: f64,
}

pub const EIGEN_ITER_MAX: usize = 500;
pub const EIGEN_TOL: f64 = 1e-10;

/// Diagonal of `-λ f'(u)`.
fn reaction_shift(f: &Nonlinearity, lambda: f64, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&t| -lambda * f.value_and_slope(t).1).collect()
}

pub fn principal_eigenvalue(grid: &RadialGrid, f: &Nonlinearity, point: &BranchPoint) -> Result<EigenResult, StabilityError> {
    principal_eigenvalue_with(&grid.assemble(), f, point)
}

/// Gradient case: the operator is symmetric in the `e^γ`-weighted inner
/// product. The shift comes from a Sturm bisection, the eigenvector from
/// shifted inverse iteration on the symmetrized matrix.
pub fn principal_eigenvalue_with(op: &RadialOperator, f: &Nonlinearity, point: &BranchPoint) -> Result<EigenResult, StabilityError> {
    let n = op.len();
    let shift = reaction_shift(f, point.lambda, &point.u);
    let sym = op.symmetric(&shift);
    let (lo, _) = sym.smallest_eigenvalue_bracket(1e-14);
    let sigma = lo - 1e-9 * lo.abs().max(1.0);
    let shifted = crate::linalg::Tridiagonal {
        lower: (0..n).map(|i| if i == 0 { 0.0 } else { sym.off[i - 1] }).collect(),
        diag: sym.diag.iter().map(|d| d - sigma).collect(),
        upper: (0..n).map(|i| if i + 1 == n { 0.0 } else { sym.off[i] }).collect(),
    };
    let mut y = vec![1.0; n];
    let mut iterations = 0;
    let mut mu_prev = f64::INFINITY;
    let mut mu = lo;
    for it in 1..=EIGEN_ITER_MAX {
        iterations = it;
        let z = shifted.solve_m_matrix(&y)?;
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        y = z.iter().map(|v| v / norm).collect();
        let ty = shifted.apply(&y);
        mu = sigma + y.iter().zip(&ty).map(|(a, b)| a * b).sum::<f64>();
        if (mu - mu_prev).abs() <= EIGEN_TOL * mu.abs().max(1.0) {
            break;
        }
        mu_prev = mu;
        if it == EIGEN_ITER_MAX {
            return Err(StabilityError::NoConvergence { iterations: it });
        }
    }
    let mut phi: Vec<f64> = y.iter().zip(&op.volume).map(|(v, w)| v / w.sqrt()).collect();
    let sign = if phi.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let max = phi.iter().map(|v| v * sign).fold(f64::NEG_INFINITY, f64::max);
    for v in phi.iter_mut() {
        *v *= sign / max;
    }
    let lphi = op.matrix.with_diagonal_shift(|i| shift[i]).apply(&phi);
    let dmax = op.matrix.diag.iter().zip(&shift).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    let residual = lphi.iter().zip(&phi).map(|(a, b)| (a - mu * b).abs()).fold(0.0, f64::max) / dmax;
    Ok(EigenResult { mu1: mu, eigenfunction: phi, iterations, residual })
}

/// Perron eigenvalue of a nonsymmetric Z-matrix `L` by inverse iteration on
/// `L - σI`, with `σ` raised to the Collatz–Wielandt lower bound as the
/// iterate improves. `σ` always stays below the Perron value, so every
/// shifted matrix is a nonsingular M-matrix and iterates remain positive.
pub fn perron_eigenvalue(l: &CsrMatrix, direct: bool) -> Result<EigenResult, StabilityError> {
    let n = l.n;
    let mut sigma = (0..n)
        .map(|i| l.row(i).map(|(c, v)| if c == i { v } else { -v.abs() }).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    sigma -= 1e-6 * sigma.abs().max(1.0);
    let mut cache = SparseFactorCache::new();
    let mut solver = cache.prepare(&l.with_diagonal_shift(|_| -sigma), direct)?;
    let mut x = vec![1.0; n];
    for it in 1..=EIGEN_ITER_MAX {
        let y = solver.solve(&x)?;
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        x = y.iter().map(|v| (v / max).max(f64::MIN_POSITIVE)).collect();
        let lx = l.apply(&x);
        let (lo, hi) = lx
            .iter()
            .zip(&x)
            .filter(|(_, &xi)| xi > 1e-12)
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q), hi.max(q)));
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= EIGEN_TOL * scale {
            let mu = 0.5 * (lo + hi);
            let dmax = l.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
            let residual = lx.iter().zip(&x).map(|(a, b)| (a - mu * b).abs()).fold(0.0, f64::max) / dmax;
            return Ok(EigenResult { mu1: mu, eigenfunction: x, iterations: it, residual });
        }
        // Krylov solves need a shifted matrix that stays well conditioned
        let target = if direct { lo - 1e-3 * (hi - lo) } else { lo - 0.05 * lo.abs().max(1.0) };
        if it % 4 == 0 && target > sigma + 1e-3 * (hi - lo) {
            sigma = target;
            solver = cache.prepare(&l.with_diagonal_shift(|_| -sigma), direct)?;
        }
    }
    Err(StabilityError::NoConvergence { iterations: EIGEN_ITER_MAX })
}

/// `μ₁` for each point of a branch (concurrently).
pub fn stability_sweep(grid: &RadialGrid, f: &Nonlinearity, branch: &[BranchPoint]) -> Result<Vec<f64>, StabilityError> {
    let op = grid.assemble();
    branch.par_iter().map(|p| principal_eigenvalue_with(&op, f, p).map(|e| e.mu1)).collect()
}

/// Built-in radial test functions vanishing at `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TestProfile {
    Paraboloid,
    Sine,
}

impl TestProfile {
    pub fn sample(self, grid: &RadialGrid) -> Vec<f64> {
        grid.nodes
            .iter()
            .map(|&r| match self {
                TestProfile::Paraboloid => 1.0 - r * r,
                TestProfile::Sine => (std::f64::consts::PI * r).sin(),
            })
            .collect()
    }
}

/// `∫ e^γ |∇ψ|²`, `∫ e^γ ψ²` and `λ ∫ e^γ f'(u) ψ²`.
pub fn energy_terms(op: &RadialOperator, f: &Nonlinearity, point: &BranchPoint, psi: &[f64]) -> (f64, f64, f64) {
    let grad = op.energy(psi, psi);
    let mass = op.mass(psi, psi);
    let slope: Vec<f64> = point.u.iter().map(|&t| f.value_and_slope(t).1).collect();
    let weighted: Vec<f64> = psi.iter().zip(&slope).map(|(p, s)| p * s).collect();
    let react = point.lambda * op.mass(&weighted, psi);
    (grad, mass, react)
}

pub const REPORT_TOL: f64 = 1e-8;

/// `λ ∫ e^γ f'(u) ψ² ≤ (2/β) ∫ e^γ |∇ψ|² + b²/(2(2-β)) ∫ e^γ ψ²`.
/// The report also carries the stability margin `∫ e^γ |∇ψ|² - λ ∫ e^γ f'(u) ψ²`.
pub fn hardy_check(
    grid: &RadialGrid,
    f: &Nonlinearity,
    point: &BranchPoint,
    beta: f64,
    psi: &[f64],
    b_inf: f64,
) -> Result<InequalityReport, StabilityError> {
    if !(1.0..2.0).contains(&beta) {
        return Err(StabilityError::Domain(format!("beta = {beta} must lie in [1, 2)")));
    }
    if !(b_inf >= 0.0) {
        return Err(StabilityError::Domain(format!("b_inf = {b_inf} must be >= 0")));
    }
    let op = grid.assemble();
    let (grad, mass, react) = energy_terms(&op, f, point, psi);
    let rhs = 2.0 / beta * grad + b_inf * b_inf / (2.0 * (2.0 - beta)) * mass;
    let mut params = BTreeMap::new();
    params.insert("beta".into(), json!(beta));
    params.insert("b_inf".into(), json!(b_inf));
    params.insert("lambda".into(), json!(point.lambda));
    params.insert("gradient_term".into(), json!(grad));
    params.insert("mass_term".into(), json!(mass));
    params.insert("stability_margin".into(), json!(grad - react));
    Ok(InequalityReport::single("hardy", react, rhs, REPORT_TOL, params))
}

/// Test profiles `η` for the gradient inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EtaProfile {
    Zero,
    /// `1/r0` on `[0, r0)`, `1/r` on `[r0, 1/2]`, `4(1-r)` on `(1/2, 1]`.
    Plateau { r0: f64 },
    /// `1/(r1 r0)` on `[0, r0)`, `1/(r1 s)` on `[r0, r1)`, `s^{-2}` on
    /// `[r1, 1/2]`, `8(1-s)` on `(1/2, 1]`.
    Stepped { r0: f64, r1: f64 },
}

impl EtaProfile {
    pub fn validate(self) -> Result<(), StabilityError> {
        match self {
            EtaProfile::Zero => Ok(()),
            EtaProfile::Plateau { r0 } if r0 > 0.0 && r0 <= 0.5 => Ok(()),
            EtaProfile::Stepped { r0, r1 } if r0 > 0.0 && r0 < r1 && r1 <= 0.5 => Ok(()),
            other => Err(StabilityError::Domain(format!("invalid eta profile {other:?}"))),
        }
    }

    /// `(η(r), (rη)'(r))`.
    pub fn eval(self, r: f64) -> (f64, f64) {
        match self {
            EtaProfile::Zero => (0.0, 0.0),
            EtaProfile::Plateau { r0 } => {
                if r < r0 {
                    (1.0 / r0, 1.0 / r0)
                } else if r <= 0.5 {
                    (1.0 / r, 0.0)
                } else {
                    (4.0 * (1.0 - r), 4.0 - 8.0 * r)
                }
            }
            EtaProfile::Stepped { r0, r1 } => {
                if r < r0 {
                    (1.0 / (r1 * r0), 1.0 / (r1 * r0))
                } else if r < r1 {
                    (1.0 / (r1 * r), 0.0)
                } else if r <= 0.5 {
                    (1.0 / (r * r), -1.0 / (r * r))
                } else {
                    (8.0 * (1.0 - r), 8.0 - 16.0 * r)
                }
            }
        }
    }
}

/// Power-law exponent below which a radial density near the origin is
/// flagged as unreliable for the cell quadrature.
pub const ETA_DENSITY_LIMIT: f64 = -0.9;

/// Least-squares exponent of `|density|` over the first cells.
pub(crate) fn origin_exponent(nodes: &[f64], density: &[f64], count: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = nodes
        .iter()
        .zip(density)
        .take(count)
        .filter(|(_, d)| d.abs() > 0.0)
        .map(|(r, d)| (r.ln(), d.abs().ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `∫ e^γ [ |(rη)'|² - (n-1)η² + γ'' r² η² ] u'² ≥ 0`, reported as
/// negative part (lhs) against positive part (rhs).
pub fn radial_eta_inequality_check(grid: &RadialGrid, point: &BranchPoint, eta: EtaProfile) -> Result<InequalityReport, StabilityError> {
    eta.validate()?;
    let op = grid.assemble();
    let du = gradient_profile(grid, &point.u);
    let n1 = (grid.n_dim - 1) as f64;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut density = Vec::with_capacity(grid.len());
    for (i, &r) in grid.nodes.iter().enumerate() {
        let (e, dre) = eta.eval(r);
        let bracket = dre * dre - n1 * e * e + grid.potential.d2(r) * r * r * e * e;
        let term = op.sphere_area * op.volume[i] * bracket * du[i] * du[i];
        if term >= 0.0 {
            pos += term;
        } else {
            neg -= term;
        }
        let width = grid.faces[i + 1] - grid.faces[i];
        density.push(term / width);
    }
    let mut params = BTreeMap::new();
    params.insert("eta".into(), json!(format!("{eta:?}")));
    params.insert("lambda".into(), json!(point.lambda));
    params.insert("n".into(), json!(grid.n_dim));
    let tol = REPORT_TOL * (pos + neg) / pos.max(f64::MIN_POSITIVE);
    let mut report = InequalityReport::single("eta_gradient", neg, pos, tol, params);
    if let Some(k) = origin_exponent(&grid.nodes, &density, 16) {
        if k < ETA_DENSITY_LIMIT {
            report.warnings.push(format!("QuadratureWarning: integrand behaves like r^{k:.3} near the origin"));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{minimal_solve, RadialPotential, SolverOptions};

    fn zero_point(cells: usize) -> BranchPoint {
        BranchPoint { lambda: 0.0, u: vec![0.0; cells], sup_u: 0.0, mu1: None, iterations: 0, residual: 0.0, min_increment: 0.0 }
    }

    #[test]
    fn laplacian_eigenvalue_on_ball_converges() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        let mut errs = Vec::new();
        for cells in [64, 128] {
            let g = RadialGrid::uniform(3, cells, RadialPotential::Zero).unwrap();
            let e = principal_eigenvalue(&g, &f, &zero_point(cells)).unwrap();
            assert!(e.residual < 1e-8, "{}", e.residual);
            assert!(e.eigenfunction.iter().all(|&v| v > 0.0));
            errs.push((e.mu1 - pi2).abs());
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn first_order_perturbation_in_lambda() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = RadialGrid::uniform(2, 256, RadialPotential::Zero).unwrap();
        let opts = SolverOptions::default();
        let mu0 = principal_eigenvalue(&g, &f, &zero_point(256)).unwrap().mu1;
        let l = 1e-4;
        let p = minimal_solve(&g, &f, l, &opts).unwrap();
        let mu = principal_eigenvalue(&g, &f, &p).unwrap().mu1;
        let slope = (mu0 - mu) / l;
        assert!((slope - 2.0).abs() < 1e-2, "{slope}");
    }

    #[test]
    fn rayleigh_quotients_are_bounded_below_by_mu1() {
        use rand::{Rng, SeedableRng};
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = RadialGrid::uniform(2, 128, RadialPotential::Quadratic { a: 0.25 }).unwrap();
        let op = g.assemble();
        let p = minimal_solve(&g, &f, 0.6, &SolverOptions::default()).unwrap();
        let e = principal_eigenvalue(&g, &f, &p).unwrap();
        let quotient = |psi: &[f64]| {
            let (grad, mass, react) = energy_terms(&op, &f, &p, psi);
            (grad - react) / mass
        };
        assert!((quotient(&e.eigenfunction) - e.mu1).abs() < 1e-6 * e.mu1.abs());
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let psi: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(quotient(&psi) >= e.mu1 * (1.0 - 1e-6));
        }
    }

    #[test]
    fn perron_matches_symmetric_solver() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = RadialGrid::uniform(2, 200, RadialPotential::Zero).unwrap();
        let op = g.assemble();
        let p = minimal_solve(&g, &f, 0.7, &SolverOptions::default()).unwrap();
        let sym = principal_eigenvalue_with(&op, &f, &p).unwrap();
        let m = &op.matrix;
        let rows = (0..200)
            .map(|i| {
                let mut row = vec![(i, m.diag[i] - 0.7 * f.value_and_slope(p.u[i]).1)];
                if i > 0 {
                    row.push((i - 1, m.lower[i]));
                }
                if i + 1 < 200 {
                    row.push((i + 1, m.upper[i]));
                }
                row
            })
            .collect();
        let csr = CsrMatrix::from_rows(rows);
        for direct in [true, false] {
            let e = perron_eigenvalue(&csr, direct).unwrap();
            assert!((e.mu1 - sym.mu1).abs() < 1e-7 * sym.mu1, "{} {}", e.mu1, sym.mu1);
        }
    }

    #[test]
    fn hardy_trivial_cases() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = RadialGrid::uniform(2, 64, RadialPotential::Zero).unwrap();
        let z = zero_point(64);
        let r = hardy_check(&g, &f, &z, 1.0, &vec![0.0; 64], 0.0).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        let psi = TestProfile::Paraboloid.sample(&g);
        let r = hardy_check(&g, &f, &z, 1.0, &psi, 0.0).unwrap();
        assert!(r.pass && r.margin > 1.0);
        assert!(hardy_check(&g, &f, &z, 2.0, &psi, 0.0).is_err());
        assert!(hardy_check(&g, &f, &z, 0.5, &psi, 0.0).is_err());
    }

    #[test]
    fn eta_inequality_trivial_and_stable_cases() {
        let g = RadialGrid::uniform(2, 512, RadialPotential::Zero).unwrap();
        let z = zero_point(512);
        let r = radial_eta_inequality_check(&g, &z, EtaProfile::Plateau { r0: 0.25 }).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        let f = Nonlinearity::mems(2.0).unwrap();
        let p = minimal_solve(&g, &f, 0.78, &SolverOptions::default()).unwrap();
        let r0 = radial_eta_inequality_check(&g, &p, EtaProfile::Zero).unwrap();
        assert!(r0.pass && r0.margin == 0.0);
        for eta in [EtaProfile::Plateau { r0: 0.25 }, EtaProfile::Stepped { r0: 0.05, r1: 0.2 }] {
            let r = radial_eta_inequality_check(&g, &p, eta).unwrap();
            assert!(r.pass, "{eta:?}: {r:?}");
        }
        assert!(radial_eta_inequality_check(&g, &p, EtaProfile::Stepped { r0: 0.3, r1: 0.2 }).is_err());
    }
}
