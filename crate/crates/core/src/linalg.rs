//! Linear algebra kernels: tridiagonal systems for the radial operator and
//! sparse systems for the planar operator.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::Solve;
use faer::Col;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("nonpositive pivot {pivot:.3e} at row {row}")]
    NonPositivePivot { row: usize, pivot: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("iterative solver stopped after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Tridiagonal matrix stored by rows: row `i` reads
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Same matrix with `shift[i]` added to the diagonal.
    pub fn with_diagonal_shift(&self, shift: impl Fn(usize) -> f64) -> Self {
        let mut m = self.clone();
        for (i, d) in m.diag.iter_mut().enumerate() {
            *d += shift(i);
        }
        m
    }

    /// Thomas algorithm without pivoting. Every pivot must be positive, which
    /// for a Z-matrix certifies a nonsingular M-matrix.
    pub fn solve_m_matrix(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if !(pivot > 0.0) {
            return Err(LinalgError::NonPositivePivot { row: 0, pivot });
        }
        c[0] = if n > 1 { self.upper[0] / pivot } else { 0.0 };
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if !(pivot > 0.0) {
                return Err(LinalgError::NonPositivePivot { row: i, pivot });
            }
            c[i] = if i + 1 < n { self.upper[i] / pivot } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Symmetric tridiagonal matrix (diagonal `a`, off-diagonal `b[i]` coupling
/// rows `i` and `i+1`).
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    /// Number of eigenvalues strictly below `x` (Sturm count of the `LDLᵀ`
    /// pivots of `T - xI`).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.diag.len();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..n {
            if i > 0 {
                let b = self.off[i - 1];
                let prev = if q == 0.0 { f64::EPSILON * (b.abs() + 1.0) } else { q };
                q = self.diag[i] - x - b * b / prev;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Smallest eigenvalue by Sturm bisection; returns a bracket `[a, b]`
    /// with `b - a <= rel_tol * max(1, |a|)`.
    pub fn smallest_eigenvalue_bracket(&self, rel_tol: f64) -> (f64, f64) {
        let (mut a, mut b) = self.gershgorin();
        let width = (b - a).abs().max(1.0);
        a -= 1e-12 * width;
        b += 1e-12 * width;
        for _ in 0..200 {
            if b - a <= rel_tol * a.abs().max(1.0) {
                break;
            }
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.count_below(m) >= 1 {
                b = m;
            } else {
                a = m;
            }
        }
        (a, b)
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).find(|&(c, _)| c == i).map_or(0.0, |e| e.1)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Same matrix with `shift[i]` added to the diagonal.
    pub fn with_diagonal_shift(&self, shift: impl Fn(usize) -> f64) -> Self {
        let mut m = self.clone();
        for i in 0..m.n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                if m.col_idx[k] == i {
                    m.values[k] += shift(i);
                }
            }
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinalgError> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(c, v)| Triplet::new(i, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| LinalgError::Factorization(format!("{e:?}")))
    }
}

/// Largest grid side for which sparse direct factorization is used.
pub const DIRECT_SOLVE_MAX_SIDE: usize = 257;
/// Relative residual target of the iterative path.
pub const ITERATIVE_TOL: f64 = 1e-10;

/// Factorized (or preconditioned) sparse operator ready for repeated solves.
pub enum SparseSolver {
    Direct(Lu<usize, f64>),
    Iterative { matrix: CsrMatrix, inv_diag: Vec<f64> },
}

/// Cached symbolic analysis reused across matrices with the same pattern.
#[derive(Default)]
pub struct SparseFactorCache {
    symbolic: Option<SymbolicLu<usize>>,
}

impl SparseFactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prepares `a` for solves. `direct` selects sparse LU; otherwise a
    /// Jacobi-preconditioned BiCGSTAB iteration is used.
    pub fn prepare(&mut self, a: &CsrMatrix, direct: bool) -> Result<SparseSolver, LinalgError> {
        if !direct {
            let inv_diag = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
            return Ok(SparseSolver::Iterative { matrix: a.clone(), inv_diag });
        }
        let m = a.to_faer()?;
        let symbolic = match &self.symbolic {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(m.symbolic()).map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
                self.symbolic = Some(s.clone());
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, m.as_ref()).map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        Ok(SparseSolver::Direct(lu))
    }
}

impl SparseSolver {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.solve_from(rhs, None)
    }

    /// As `solve`; the iterative path starts from `guess` when given.
    pub fn solve_from(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, LinalgError> {
        match self {
            SparseSolver::Direct(lu) => {
                let b = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
                let x = lu.solve(&b);
                let out: Vec<f64> = (0..rhs.len()).map(|i| x[i]).collect();
                if out.iter().all(|v| v.is_finite()) {
                    Ok(out)
                } else {
                    Err(LinalgError::Factorization("singular matrix".into()))
                }
            }
            SparseSolver::Iterative { matrix, inv_diag } => bicgstab(matrix, inv_diag, rhs, guess, ITERATIVE_TOL, 20 * matrix.n.max(100)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB with a diagonal preconditioner.
pub fn bicgstab(a: &CsrMatrix, inv_diag: &[f64], b: &[f64], guess: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>, LinalgError> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r: Vec<f64> = b.iter().zip(a.apply(&x)).map(|(bi, ai)| bi - ai).collect();
    if norm(&r) / bnorm <= tol {
        return Ok(x);
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let precond = |z: &[f64]| -> Vec<f64> { z.iter().zip(inv_diag).map(|(a, d)| a * d).collect() };
    let mut res = 1.0;
    for it in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(LinalgError::NoConvergence { iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.apply(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(LinalgError::NoConvergence { iterations: it, residual: res });
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.apply(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        if omega == 0.0 {
            return Err(LinalgError::NoConvergence { iterations: it, residual: res });
        }
    }
    Err(LinalgError::NoConvergence { iterations: max_iter, residual: res })
}
