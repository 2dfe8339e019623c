use rayon::prelude::*;
use serde::Serialize;

use super::grid::{RadialGrid, RadialOperator};
use super::solve::{minimal_solve_with, BranchPoint, SolveError, SolverOptions};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Regular,
    Singular,
    Undetermined,
}

/// Threshold data on a single grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridThreshold {
    pub cells: usize,
    pub lambda_low: f64,
    pub lambda_high: f64,
    /// `λ` at the discrete fold.
    pub fold_lambda: f64,
    /// `1 - sup u` at the discrete fold.
    pub fold_gap: f64,
    pub fold_profile: Vec<f64>,
    /// Minimal solution at `lambda_low`.
    pub last_point: BranchPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationResult {
    pub lambda_star_low: f64,
    pub lambda_star_high: f64,
    pub nodes: Vec<f64>,
    pub extremal_u: Vec<f64>,
    pub extremal_lambda: f64,
    pub verdict: Verdict,
    pub fitted_exponent: Option<f64>,
    pub fine: GridThreshold,
    pub coarse: Option<GridThreshold>,
}

impl ContinuationResult {
    pub fn sup_extremal(&self) -> f64 {
        self.extremal_u.iter().copied().fold(0.0, f64::max)
    }
}

/// Gap ratio band inside which two grids are said to agree.
pub const GAP_AGREEMENT: f64 = 0.05;
/// Gap ratio at or below which the fold is said to approach the singularity.
pub const GAP_COLLAPSE: f64 = 0.9;

/// Classifies the extremal solution from the fold gaps `1 - sup u` on a
/// grid and its refinement. A regular extremal has a gap that is resolved
/// and stable under refinement; a singular one has a gap that shrinks with
/// the mesh width (or sits at the cap on both grids).
pub fn classify(gap_coarse: f64, gap_fine: f64, eps_cap: f64) -> Verdict {
    let floor = 10.0 * eps_cap;
    if gap_fine <= floor && gap_coarse <= floor {
        return Verdict::Singular;
    }
    let ratio = gap_fine / gap_coarse;
    if (ratio - 1.0).abs() <= GAP_AGREEMENT && gap_fine > floor {
        Verdict::Regular
    } else if ratio <= GAP_COLLAPSE {
        Verdict::Singular
    } else {
        Verdict::Undetermined
    }
}

/// Brackets `λ*` on `grid` and its coarsening, locates the discrete folds,
/// and classifies the extremal solution.
pub fn find_lambda_star(grid: &RadialGrid, f: &Nonlinearity, tol_bracket: f64, opts: &SolverOptions) -> Result<ContinuationResult, SolveError> {
    let coarse_grid = grid.coarsened();
    let (fine, coarse) = rayon::join(
        || threshold_on_grid(grid, f, tol_bracket, opts, 1.0),
        || coarse_grid.as_ref().map(|g| threshold_on_grid(g, f, tol_bracket, opts, 1.0)),
    );
    let fine = fine?;
    let coarse = coarse.transpose()?;
    let verdict = match &coarse {
        Some(c) => classify(c.fold_gap, fine.fold_gap, opts.eps_cap),
        None => Verdict::Undetermined,
    };
    let fitted_exponent = if verdict == Verdict::Singular {
        let du = gradient_profile(grid, &fine.fold_profile);
        fit_decay_exponent(grid, &du, default_fit_window(grid)).ok()
    } else {
        None
    };
    Ok(ContinuationResult {
        lambda_star_low: fine.lambda_low,
        lambda_star_high: fine.lambda_high,
        nodes: grid.nodes.clone(),
        extremal_u: fine.fold_profile.clone(),
        extremal_lambda: fine.fold_lambda,
        verdict,
        fitted_exponent,
        fine,
        coarse,
    })
}

/// Doubling scan, bisection on the existence of a minimal solution, and
/// fold location by discrete shooting.
pub fn threshold_on_grid(grid: &RadialGrid, f: &Nonlinearity, tol_bracket: f64, opts: &SolverOptions, guess: f64) -> Result<GridThreshold, SolveError> {
    let op = grid.assemble();
    let exists = |lambda: f64| minimal_solve_with(&op, f, lambda, opts);
    let tiny = 1e-3 * guess;
    if exists(tiny).is_err() {
        return Err(SolveError::ScanFailure { lambda: tiny });
    }
    let (mut lo, mut hi) = if exists(guess).is_ok() {
        let mut lo = guess;
        loop {
            let next = 2.0 * lo;
            if exists(next).is_err() {
                break (lo, next);
            }
            lo = next;
            if lo > 1e12 {
                return Err(SolveError::ScanFailure { lambda: lo });
            }
        }
    } else {
        let mut hi = guess;
        loop {
            let next = 0.5 * hi;
            if exists(next).is_ok() {
                break (next, hi);
            }
            hi = next;
        }
    };
    while hi - lo > tol_bracket * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if exists(mid).is_ok() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let last_point = exists(lo)?;
    let fold = locate_fold(&op, f, &last_point, opts)?;
    Ok(GridThreshold {
        cells: grid.len(),
        lambda_low: lo,
        lambda_high: hi,
        fold_lambda: fold.lambda,
        fold_gap: 1.0 - fold.alpha,
        fold_profile: fold.profile,
        last_point,
    })
}

/// Profile obtained by marching the discrete equations outward from the
/// centre value `alpha`, with its sensitivities.
struct Shot {
    u: Vec<f64>,
    /// Boundary-row residual.
    b: f64,
    b_alpha: f64,
    b_lambda: f64,
}

fn march(op: &RadialOperator, f: &Nonlinearity, alpha: f64, lambda: f64) -> Option<Shot> {
    let m = &op.matrix;
    let n = op.len();
    let mut u = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    u[0] = alpha;
    y[0] = 1.0;
    let row = |i: usize, u: &[f64], y: &[f64], z: &[f64]| {
        let (fv, dfv) = f.value_and_slope(u[i]);
        let (pu, py, pz) = if i > 0 { (m.lower[i] * u[i - 1], m.lower[i] * y[i - 1], m.lower[i] * z[i - 1]) } else { (0.0, 0.0, 0.0) };
        let ru = m.diag[i] * u[i] + pu - lambda * fv;
        let ry = m.diag[i] * y[i] + py - lambda * dfv * y[i];
        let rz = m.diag[i] * z[i] + pz - lambda * dfv * z[i] - fv;
        (ru, ry, rz)
    };
    for i in 0..n - 1 {
        if !(u[i] < 1.0) {
            return None;
        }
        let (ru, ry, rz) = row(i, &u, &y, &z);
        u[i + 1] = -ru / m.upper[i];
        y[i + 1] = -ry / m.upper[i];
        z[i + 1] = -rz / m.upper[i];
    }
    if !(u[n - 1] < 1.0) || !u[n - 1].is_finite() {
        return None;
    }
    let (b, b_alpha, b_lambda) = row(n - 1, &u, &y, &z);
    if !(b.is_finite() && b_alpha.is_finite() && b_lambda.is_finite()) {
        return None;
    }
    Some(Shot { u, b, b_alpha, b_lambda })
}

/// Solves `B(alpha, λ) = 0` for `λ` by safeguarded Newton from `lambda0`.
fn lambda_for_alpha(op: &RadialOperator, f: &Nonlinearity, alpha: f64, lambda0: f64) -> Option<(f64, Shot)> {
    let mut lambda = lambda0;
    let mut prev = f64::INFINITY;
    for _ in 0..80 {
        let shot = march(op, f, alpha, lambda)?;
        if shot.b_lambda == 0.0 {
            return None;
        }
        let step = (shot.b / shot.b_lambda).abs();
        // quadratic phase ends at the rounding floor
        if step <= 1e-15 * lambda || step <= 1e-9 * lambda && step > 0.5 * prev {
            return Some((lambda, shot));
        }
        prev = step;
        lambda = (lambda - shot.b / shot.b_lambda).clamp(0.5 * lambda, 2.0 * lambda);
    }
    None
}

struct Fold {
    alpha: f64,
    lambda: f64,
    profile: Vec<f64>,
}

/// `dλ/dα` along the solution curve parametrised by the centre value.
fn slope_at(op: &RadialOperator, f: &Nonlinearity, alpha: f64, lambda0: f64) -> Option<(f64, f64, Shot)> {
    let (lambda, shot) = lambda_for_alpha(op, f, alpha, lambda0)?;
    Some((-shot.b_alpha / shot.b_lambda, lambda, shot))
}

/// Maximum of `λ(α)` on the first turning point above the minimal solution
/// `start`. If `λ(α)` still increases at `1 - eps_cap`, the fold is placed
/// at the cap.
fn locate_fold(op: &RadialOperator, f: &Nonlinearity, start: &BranchPoint, opts: &SolverOptions) -> Result<Fold, SolveError> {
    let cap = 1.0 - opts.eps_cap;
    let mut a_lo = start.u[0];
    let (s0, mut l_lo, mut shot_lo) = slope_at(op, f, a_lo, start.lambda).ok_or(SolveError::FoldNotFound)?;
    // step back onto the rising part if rounding placed the start past the fold
    let mut back = 0;
    let mut s_lo = s0;
    while s_lo <= 0.0 {
        back += 1;
        if back > 40 {
            return Err(SolveError::FoldNotFound);
        }
        a_lo = 1.0 - (1.0 - a_lo) / 0.7;
        if a_lo <= 0.0 {
            return Err(SolveError::FoldNotFound);
        }
        (s_lo, l_lo, shot_lo) = slope_at(op, f, a_lo, l_lo).ok_or(SolveError::FoldNotFound)?;
    }
    let mut gap = 1.0 - a_lo;
    let a_hi = loop {
        gap *= 0.7;
        let a = 1.0 - gap;
        if a >= cap {
            let (lambda, shot) = lambda_for_alpha(op, f, cap, l_lo).ok_or(SolveError::FoldNotFound)?;
            return Ok(Fold { alpha: cap, lambda, profile: shot.u });
        }
        match slope_at(op, f, a, l_lo) {
            Some((s, l, shot)) if s > 0.0 => {
                a_lo = a;
                l_lo = l;
                shot_lo = shot;
            }
            Some(_) => break a,
            None => return Err(SolveError::FoldNotFound),
        }
    };
    let (mut lo, mut hi) = (a_lo, a_hi);
    let mut best = (l_lo, shot_lo, a_lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let Some((s, l, shot)) = slope_at(op, f, mid, best.0) else { break };
        if l > best.0 {
            best = (l, shot, mid);
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let (lambda, shot, alpha) = best;
    Ok(Fold { alpha, lambda, profile: shot.u })
}

/// `u'` at the nodes by the three-point formula on the (possibly nonuniform)
/// node set, using the even reflection across `r = 0` and `u(1) = 0`.
pub fn gradient_profile(grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let r = &grid.nodes;
    (0..n)
        .map(|i| {
            let (x0, u0) = if i == 0 { (-r[0], u[0]) } else { (r[i - 1], u[i - 1]) };
            let (x2, u2) = if i + 1 == n { (1.0, 0.0) } else { (r[i + 1], u[i + 1]) };
            let h1 = r[i] - x0;
            let h2 = x2 - r[i];
            -u0 * h2 / (h1 * (h1 + h2)) + u[i] * (h2 - h1) / (h1 * h2) + u2 * h1 / (h2 * (h1 + h2))
        })
        .collect()
}

/// Default fit window `[2h, 0.1]`.
pub fn default_fit_window(grid: &RadialGrid) -> (f64, f64) {
    (2.0 * grid.h_min(), 0.1)
}

/// Least-squares slope of `ln|u'|` against `ln r` over nodes in `window`.
pub fn fit_decay_exponent(grid: &RadialGrid, du: &[f64], window: (f64, f64)) -> Result<f64, SolveError> {
    let pts: Vec<(f64, f64)> = grid
        .nodes
        .iter()
        .zip(du)
        .filter(|(&r, &d)| r >= window.0 && r <= window.1 && d != 0.0)
        .map(|(&r, &d)| (r.ln(), d.abs().ln()))
        .collect();
    if pts.len() < 8 {
        return Err(SolveError::FitError { found: pts.len() });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Minimal solutions at each `λ`, computed independently (in parallel).
pub fn branch_sweep(grid: &RadialGrid, f: &Nonlinearity, lambdas: &[f64], opts: &SolverOptions) -> Vec<Result<BranchPoint, SolveError>> {
    let op = grid.assemble();
    lambdas.par_iter().map(|&l| minimal_solve_with(&op, f, l, opts)).collect()
}
