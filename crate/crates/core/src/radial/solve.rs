use serde::Serialize;
use thiserror::Error;

use super::grid::{RadialGrid, RadialOperator};
use crate::linalg::{LinalgError, Tridiagonal};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Sup-norm increment at which fixed-point iterations stop.
    pub tol_iter: f64,
    /// Relative residual accepted for a converged point.
    pub tol_res: f64,
    pub iter_max: usize,
    /// Iterates reaching `1 - eps_cap` are declared quenched.
    pub eps_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_iter: 1e-10, tol_res: 1e-9, iter_max: 10_000, eps_cap: 1e-6 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("iterate reached 1 - eps_cap at lambda = {lambda} (iteration {iteration})")]
    Quenched { lambda: f64, iteration: usize },
    #[error("no convergence within {iterations} iterations at lambda = {lambda}")]
    MaxIterations { lambda: f64, iterations: usize },
    #[error("newton line search exhausted at lambda = {lambda} (residual {residual:.3e})")]
    NewtonStall { lambda: f64, residual: f64 },
    #[error("negative parameter lambda = {0}")]
    NegativeLambda(f64),
    #[error("initial guess outside [0, 1 - eps_cap)")]
    BadInitialGuess,
    #[error("even lambda = {lambda} quenches; grid or nonlinearity invalid")]
    ScanFailure { lambda: f64 },
    #[error("bracket did not contain a fold")]
    FoldNotFound,
    #[error("fit window holds {found} nodes, need at least 8")]
    FitError { found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One converged minimal solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub sup_u: f64,
    pub mu1: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Smallest componentwise increment between successive iterates;
    /// nonnegative up to rounding for monotone schemes.
    pub min_increment: f64,
}

impl BranchPoint {
    fn new(lambda: f64, u: Vec<f64>, iterations: usize, residual: f64, min_increment: f64) -> Self {
        let sup_u = u.iter().copied().fold(0.0, f64::max);
        Self { lambda, u, sup_u, mu1: None, iterations, residual, min_increment }
    }
}

/// Relative residual `‖Au - λf(u)‖∞ / (‖diag(A) u‖∞ + λ‖f(u)‖∞)`.
pub fn residual(op: &RadialOperator, f: &Nonlinearity, lambda: f64, u: &[f64]) -> f64 {
    let au = op.apply(u);
    let mut num: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut fmax: f64 = 0.0;
    for i in 0..u.len() {
        let fu = f.value(u[i]);
        num = num.max((au[i] - lambda * fu).abs());
        scale = scale.max((op.matrix.diag[i] * u[i]).abs());
        fmax = fmax.max(fu);
    }
    let denom = scale + lambda * fmax;
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn min_diff(new: &[f64], old: &[f64]) -> f64 {
    new.iter().zip(old).map(|(x, y)| x - y).fold(f64::INFINITY, f64::min)
}

/// Picard iteration `A v_{k+1} = λ f(v_k)` from `v_0 = 0`.
pub fn monotone_solve(grid: &RadialGrid, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    let op = grid.assemble();
    monotone_solve_with(&op, f, lambda, opts)
}

pub fn monotone_solve_with(op: &RadialOperator, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    if !(lambda >= 0.0) {
        return Err(SolveError::NegativeLambda(lambda));
    }
    let n = op.len();
    let mut v = vec![0.0; n];
    if lambda == 0.0 {
        return Ok(BranchPoint::new(0.0, v, 1, 0.0, 0.0));
    }
    let cap = 1.0 - opts.eps_cap;
    let mut min_inc = f64::INFINITY;
    for it in 1..=opts.iter_max {
        let rhs: Vec<f64> = v.iter().map(|&t| lambda * f.value(t)).collect();
        let next = op.matrix.solve_m_matrix(&rhs)?;
        if next.iter().any(|&t| !(t < cap)) {
            return Err(SolveError::Quenched { lambda, iteration: it });
        }
        min_inc = min_inc.min(min_diff(&next, &v));
        let step = sup_diff(&next, &v);
        v = next;
        if step < opts.tol_iter {
            let res = residual(op, f, lambda, &v);
            return Ok(BranchPoint::new(lambda, v, it, res, min_inc));
        }
    }
    Err(SolveError::MaxIterations { lambda, iterations: opts.iter_max })
}

/// Decrease tolerated in the subsolution Newton scheme before the linearized
/// operator is considered to have lost the M-matrix property.
const MONOTONE_SLACK: f64 = 1e-7;

/// Minimal solution by Newton iteration from `v_0 = 0`:
/// `(A - λ f'(v_k)) v_{k+1} = λ (f(v_k) - f'(v_k) v_k)`.
/// By convexity every iterate is a subsolution below the minimal solution,
/// so the sequence is nondecreasing and quadratically convergent. Loss of
/// positivity of a pivot, a decreasing step or reaching the cap all signal
/// that no minimal solution exists at this `λ`.
pub fn minimal_solve(grid: &RadialGrid, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    let op = grid.assemble();
    minimal_solve_with(&op, f, lambda, opts)
}

pub fn minimal_solve_with(op: &RadialOperator, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    if !(lambda >= 0.0) {
        return Err(SolveError::NegativeLambda(lambda));
    }
    let n = op.len();
    let mut v = vec![0.0; n];
    if lambda == 0.0 {
        return Ok(BranchPoint::new(0.0, v, 1, 0.0, 0.0));
    }
    let cap = 1.0 - opts.eps_cap;
    let mut prev_step = f64::INFINITY;
    let mut min_inc = f64::INFINITY;
    let quench = |it| SolveError::Quenched { lambda, iteration: it };
    for it in 1..=opts.iter_max.min(500) {
        let mut slope = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let (fv, dfv) = f.value_and_slope(v[i]);
            slope[i] = -lambda * dfv;
            rhs[i] = lambda * (fv - dfv * v[i]);
        }
        let jac = op.matrix.with_diagonal_shift(|i| slope[i]);
        let mut next = match jac.solve_m_matrix(&rhs) {
            Ok(x) => x,
            Err(LinalgError::NonPositivePivot { .. }) => return Err(quench(it)),
            Err(e) => return Err(e.into()),
        };
        if next.iter().any(|t| !t.is_finite()) || next.iter().zip(&v).any(|(a, b)| *a < b - MONOTONE_SLACK) {
            return Err(quench(it));
        }
        if next.iter().any(|&t| !(t < cap)) {
            return Err(quench(it));
        }
        min_inc = min_inc.min(min_diff(&next, &v));
        for (a, b) in next.iter_mut().zip(&v) {
            *a = a.max(*b);
        }
        let step = sup_diff(&next, &v);
        v = next;
        // quadratic phase ends at the rounding floor
        if step < 1e-12 || step < opts.tol_iter.min(1e-7) && step > 0.25 * prev_step {
            let res = residual(op, f, lambda, &v);
            return Ok(BranchPoint::new(lambda, v, it, res, min_inc));
        }
        prev_step = step;
    }
    Err(SolveError::MaxIterations { lambda, iterations: opts.iter_max.min(500) })
}

/// History of a Newton refinement.
#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub point: BranchPoint,
    pub residual_history: Vec<f64>,
}

/// Tridiagonal solve with nonzero (not necessarily positive) pivots.
fn solve_general(m: &Tridiagonal, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = m.diag[0];
    if piv == 0.0 {
        return None;
    }
    c[0] = if n > 1 { m.upper[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = m.diag[i] - m.lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { m.upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - m.lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

const NEWTON_TOL: f64 = 1e-13;
const POLISH_STEPS: usize = 2;

/// Damped Newton on `R(u) = Au - λ f(u)` with backtracking; a step is
/// accepted only if the residual decreases and the iterate stays in
/// `[0, 1 - eps_cap)`.
pub fn newton_refine(grid: &RadialGrid, f: &Nonlinearity, lambda: f64, u_init: &[f64], opts: &SolverOptions) -> Result<NewtonReport, SolveError> {
    let op = grid.assemble();
    newton_refine_with(&op, f, lambda, u_init, opts)
}

pub fn newton_refine_with(
    op: &RadialOperator,
    f: &Nonlinearity,
    lambda: f64,
    u_init: &[f64],
    opts: &SolverOptions,
) -> Result<NewtonReport, SolveError> {
    let cap = 1.0 - opts.eps_cap;
    if u_init.len() != op.len() || u_init.iter().any(|&t| !(0.0..cap).contains(&t)) {
        return Err(SolveError::BadInitialGuess);
    }
    let mut u = u_init.to_vec();
    let mut res = residual(op, f, lambda, &u);
    let mut history = vec![res];
    let mut iterations = 0;
    // past NEWTON_TOL, up to POLISH_STEPS more full steps while the residual still drops
    let mut polish = 0;
    while iterations < 100 {
        if res <= NEWTON_TOL {
            if polish == POLISH_STEPS {
                break;
            }
            polish += 1;
        }
        iterations += 1;
        let au = op.apply(&u);
        let mut r = vec![0.0; u.len()];
        let mut shift = vec![0.0; u.len()];
        for i in 0..u.len() {
            let (fv, dfv) = f.value_and_slope(u[i]);
            r[i] = au[i] - lambda * fv;
            shift[i] = -lambda * dfv;
        }
        let jac = op.matrix.with_diagonal_shift(|i| shift[i]);
        let Some(delta) = solve_general(&jac, &r) else {
            return Err(SolveError::NewtonStall { lambda, residual: res });
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
            if trial.iter().all(|&x| (0.0..cap).contains(&x)) {
                let tr = residual(op, f, lambda, &trial);
                if tr < res {
                    u = trial;
                    res = tr;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            iterations -= 1;
            // at the rounding floor no step can lower the residual further
            if res <= opts.tol_res {
                break;
            }
            return Err(SolveError::NewtonStall { lambda, residual: res });
        }
        history.push(res);
    }
    if res > opts.tol_res {
        return Err(SolveError::NewtonStall { lambda, residual: res });
    }
    let point = BranchPoint::new(lambda, u, iterations, res, 0.0);
    Ok(NewtonReport { point, residual_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::RadialPotential;

    fn disk(cells: usize) -> RadialGrid {
        RadialGrid::uniform(2, cells, RadialPotential::Zero).unwrap()
    }

    #[test]
    fn zero_lambda_is_zero() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let p = monotone_solve(&disk(64), &f, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(p.iterations, 1);
        assert!(p.u.iter().all(|&x| x == 0.0));
        let r = newton_refine(&disk(64), &f, 0.0, &vec![0.0; 64], &SolverOptions::default()).unwrap();
        assert_eq!(r.point.residual, 0.0);
    }

    #[test]
    fn first_iterate_matches_torsion_function() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let mut errs = Vec::new();
        for cells in [64, 128, 256] {
            let g = disk(cells);
            let op = g.assemble();
            let v1 = op.matrix.solve_m_matrix(&vec![0.1 * f.value(0.0); cells]).unwrap();
            let err = g.nodes.iter().zip(&v1).map(|(r, v)| (v - 0.1 * (1.0 - r * r) / 4.0).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.5 && (errs[1] / errs[2] - 4.0).abs() < 0.5, "{errs:?}");
    }

    #[test]
    fn picard_and_newton_schemes_agree() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = disk(256);
        let opts = SolverOptions::default();
        let a = monotone_solve(&g, &f, 0.5, &opts).unwrap();
        let b = minimal_solve(&g, &f, 0.5, &opts).unwrap();
        assert!(a.min_increment >= -1e-12);
        assert!(b.min_increment >= -1e-7);
        assert!(sup_diff(&a.u, &b.u) < 1e-9);
        assert!(b.residual < 1e-12);
        assert!(a.u.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    }

    #[test]
    fn quenches_beyond_threshold() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = disk(128);
        assert!(matches!(minimal_solve(&g, &f, 1.0, &SolverOptions::default()), Err(SolveError::Quenched { .. })));
        assert!(matches!(minimal_solve(&g, &f, -1.0, &SolverOptions::default()), Err(SolveError::NegativeLambda(_))));
    }

    #[test]
    fn newton_from_monotone_output_is_quadratic() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = disk(512);
        let opts = SolverOptions { tol_iter: 1e-6, ..Default::default() };
        let start = monotone_solve(&g, &f, 0.39, &opts).unwrap();
        let rep = newton_refine(&g, &f, 0.39, &start.u, &SolverOptions::default()).unwrap();
        let steps = rep.residual_history.iter().position(|&r| r <= 1e-12).unwrap();
        assert!(steps <= 3, "{:?}", rep.residual_history);
        for w in rep.residual_history.windows(2) {
            if w[0] > 1e-11 {
                assert!(w[0] / w[1] >= 1e2, "{:?}", rep.residual_history);
            }
        }
    }

    #[test]
    fn newton_basin_is_stable_under_perturbation() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = disk(256);
        let opts = SolverOptions::default();
        let base = minimal_solve(&g, &f, 0.4, &opts).unwrap();
        let mut pert = base.u.clone();
        pert[100] += 1e-3;
        let rep = newton_refine(&g, &f, 0.4, &pert, &opts).unwrap();
        assert!(sup_diff(&rep.point.u, &base.u) < 1e-10);
    }

    #[test]
    fn rejects_bad_initial_guess() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = disk(32);
        let e = newton_refine(&g, &f, 0.1, &vec![1.0; 32], &SolverOptions::default());
        assert!(matches!(e, Err(SolveError::BadInitialGuess)));
    }
}
