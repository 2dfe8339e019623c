//! The problem for `v = -ln(1 - u)`, discretized on the same fluxes:
//! `Σ_j κ_ij (e^{v_i - v_j} - 1) / V_i = λ g(v_i)`, with `v = 0` on the
//! boundary face. Row `i` equals row `i` of the discrete problem for `u`
//! multiplied by `e^{v_i}`.

use super::grid::RadialOperator;
use super::solve::{SolveError, SolverOptions};
use crate::linalg::Tridiagonal;
use crate::nonlinearity::Nonlinearity;

/// Evaluates `N(v)` and its Jacobian.
fn flux_operator(op: &RadialOperator, v: &[f64]) -> (Vec<f64>, Tridiagonal) {
    let n = v.len();
    let mut val = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let w = op.volume[i];
        if i > 0 {
            let e = (v[i] - v[i - 1]).exp();
            let k = op.kappa[i] / w;
            val[i] += k * (e - 1.0);
            diag[i] += k * e;
            lower[i] = -k * e;
        }
        let right = if i + 1 < n { v[i + 1] } else { 0.0 };
        let e = (v[i] - right).exp();
        let k = op.kappa[i + 1] / w;
        val[i] += k * (e - 1.0);
        diag[i] += k * e;
        if i + 1 < n {
            upper[i] = -k * e;
        }
    }
    (val, Tridiagonal { lower, diag, upper })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves `N(w) = rhs` by Newton from `w0`; `N` is convex with M-matrix
/// Jacobian, so the iteration converges monotonically after one step.
fn invert_flux(op: &RadialOperator, rhs: &[f64], w0: &[f64]) -> Result<Vec<f64>, SolveError> {
    let mut w = w0.to_vec();
    for _ in 0..100 {
        let (val, jac) = flux_operator(op, &w);
        let r: Vec<f64> = val.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let d = jac.solve_m_matrix(&r)?;
        let step = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi -= di;
        }
        if step < 1e-14 * (1.0 + w.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Ok(w);
        }
    }
    Ok(w)
}

/// Minimal solution of the transformed problem: outer monotone iteration
/// `N(v_{k+1}) = λ g(v_k)` from `v_0 = 0`, finished by full Newton.
pub fn transformed_solve(op: &RadialOperator, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<Vec<f64>, SolveError> {
    let n = op.len();
    let cap = -(opts.eps_cap.ln());
    let mut v = vec![0.0; n];
    let mut converged = false;
    for it in 1..=opts.iter_max {
        let rhs: Vec<f64> = v.iter().map(|&x| lambda * f.g_value_and_slope(x).0).collect();
        let next = invert_flux(op, &rhs, &v)?;
        if next.iter().any(|&x| !(x < cap)) {
            return Err(SolveError::Quenched { lambda, iteration: it });
        }
        let step = sup_diff(&next, &v);
        v = next;
        if step < opts.tol_iter {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolveError::MaxIterations { lambda, iterations: opts.iter_max });
    }
    for _ in 0..20 {
        let (val, jac) = flux_operator(op, &v);
        let mut r = vec![0.0; n];
        let mut shift = vec![0.0; n];
        for i in 0..n {
            let (g, dg) = f.g_value_and_slope(v[i]);
            r[i] = val[i] - lambda * g;
            shift[i] = -lambda * dg;
        }
        let d = jac.with_diagonal_shift(|i| shift[i]).solve_m_matrix(&r)?;
        let step = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (vi, di) in v.iter_mut().zip(&d) {
            *vi -= di;
        }
        if step < 1e-14 {
            break;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{minimal_solve, RadialGrid, RadialPotential};

    #[test]
    fn zero_parameter_gives_zero() {
        let g = RadialGrid::uniform(2, 32, RadialPotential::Zero).unwrap();
        let f = Nonlinearity::mems(1.0).unwrap();
        let v = transformed_solve(&g.assemble(), &f, 0.0, &SolverOptions::default()).unwrap();
        assert!(v.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn matches_logarithm_of_direct_solution() {
        let g = RadialGrid::uniform(3, 128, RadialPotential::Quadratic { a: 0.5 }).unwrap();
        let f = Nonlinearity::exp_singular();
        let opts = SolverOptions::default();
        let p = minimal_solve(&g, &f, 0.2, &opts).unwrap();
        let v = transformed_solve(&g.assemble(), &f, 0.2, &opts).unwrap();
        for (ui, vi) in p.u.iter().zip(&v) {
            assert!((vi + (1.0 - ui).ln()).abs() < 1e-10);
        }
    }
}
