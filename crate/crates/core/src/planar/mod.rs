//! Finite differences on the unit square: 5-point Laplacian plus first-order
//! upwind drift, Dirichlet data on the boundary. Unknowns are the `M × M`
//! interior nodes `(i h, j h)`, `h = 1/(M+1)`, stored row-major in `j`.

mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub use io::{read_binary, write_binary, write_xyu_csv, BINARY_MAGIC};

use crate::linalg::{CsrMatrix, SparseFactorCache, SparseSolver, DIRECT_SOLVE_MAX_SIDE};
use crate::nonlinearity::Nonlinearity;
use crate::radial::{BranchPoint, SolveError, SolverOptions};
use crate::stability::{perron_eigenvalue, EigenResult, StabilityError};
use crate::verification::InequalityReport;

pub type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

/// Drift `c = ∇γ + b`; either part may be absent.
#[derive(Clone, Default)]
pub struct Drift {
    pub gamma: Option<(String, ScalarField)>,
    pub field: Option<(String, VectorField)>,
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drift")
            .field("gamma", &self.gamma.as_ref().map(|g| &g.0))
            .field("field", &self.field.as_ref().map(|g| &g.0))
            .finish()
    }
}

impl Drift {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn field(label: impl Into<String>, c: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Self { gamma: None, field: Some((label.into(), Arc::new(c))) }
    }

    pub fn gradient(label: impl Into<String>, gamma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { gamma: Some((label.into(), Arc::new(gamma))), field: None }
    }

    pub fn label(&self) -> String {
        match (&self.gamma, &self.field) {
            (None, None) => "0".into(),
            (Some(g), None) => format!("grad({})", g.0),
            (None, Some(c)) => c.0.clone(),
            (Some(g), Some(c)) => format!("grad({}) + {}", g.0, c.0),
        }
    }
}

/// Disk `|x - centre| < radius`; nodes outside carry `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiskMask {
    pub centre: (f64, f64),
    pub radius: f64,
}

impl DiskMask {
    pub fn inscribed() -> Self {
        Self { centre: (0.5, 0.5), radius: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct PlanarGrid {
    pub m: usize,
    pub h: f64,
    pub drift: Drift,
    pub mask: Option<DiskMask>,
}

impl PlanarGrid {
    pub fn new(m: usize, drift: Drift) -> Self {
        Self { m, h: 1.0 / (m as f64 + 1.0), drift, mask: None }
    }

    pub fn with_mask(mut self, mask: DiskMask) -> Self {
        self.mask = Some(mask);
        self
    }

    /// Coordinates of node `(i, j)`, `0 ≤ i, j < M`.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        ((i + 1) as f64 * self.h, (j + 1) as f64 * self.h)
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        match self.mask {
            None => true,
            Some(d) => {
                let (x, y) = self.coords(i, j);
                (x - d.centre.0).hypot(y - d.centre.1) < d.radius
            }
        }
    }

    fn direct(&self) -> bool {
        self.m <= DIRECT_SOLVE_MAX_SIDE
    }

    /// Node drift from the explicit field plus central differences of `γ`.
    fn node_drift(&self, i: usize, j: usize) -> (f64, f64) {
        let (x, y) = self.coords(i, j);
        let h = self.h;
        let mut c = (0.0, 0.0);
        if let Some((_, g)) = &self.drift.gamma {
            c.0 += (g(x + h, y) - g(x - h, y)) / (2.0 * h);
            c.1 += (g(x, y + h) - g(x, y - h)) / (2.0 * h);
        }
        if let Some((_, b)) = &self.drift.field {
            let v = b(x, y);
            c.0 += v.0;
            c.1 += v.1;
        }
        c
    }
}

/// Assembled operator on the active nodes.
#[derive(Debug, Clone)]
pub struct PlanarOperator {
    pub matrix: CsrMatrix,
    /// Full-grid index of each unknown.
    pub nodes: Vec<usize>,
    pub m: usize,
    pub warnings: Vec<String>,
}

impl PlanarOperator {
    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    /// Scatters unknowns into an `M × M` row-major field with zeros elsewhere.
    pub fn to_full(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.m * self.m];
        for (k, &g) in self.nodes.iter().enumerate() {
            full[g] = u[k];
        }
        full
    }

    pub fn from_full(&self, full: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&g| full[g]).collect()
    }
}

/// Péclet bound above which a warning is attached.
pub const PECLET_WARN: f64 = 2.0;

pub fn assemble_advection_operator(grid: &PlanarGrid) -> PlanarOperator {
    let m = grid.m;
    let h = grid.h;
    let mut index = vec![usize::MAX; m * m];
    let mut nodes = Vec::new();
    for j in 0..m {
        for i in 0..m {
            if grid.is_active(i, j) {
                index[j * m + i] = nodes.len();
                nodes.push(j * m + i);
            }
        }
    }
    let drifts: Vec<(f64, f64)> = nodes.par_iter().map(|&g| grid.node_drift(g % m, g / m)).collect();
    let rows: Vec<Vec<(usize, f64)>> = nodes
        .par_iter()
        .zip(&drifts)
        .map(|(&g, &(cx, cy))| {
            let (i, j) = ((g % m) as isize, (g / m) as isize);
            let k = index[g];
            let diff = 1.0 / (h * h);
            let mut row = vec![(k, 4.0 * diff + (cx.abs() + cy.abs()) / h)];
            let mut push = |di: isize, dj: isize, w: f64| {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && (a as usize) < m && (b as usize) < m {
                    let idx = index[b as usize * m + a as usize];
                    if idx != usize::MAX && w != 0.0 {
                        row.push((idx, -w));
                    }
                }
            };
            // upwind: information flows from the side the drift points away from
            push(-1, 0, diff + cx.max(0.0) / h);
            push(1, 0, diff + (-cx).max(0.0) / h);
            push(0, -1, diff + cy.max(0.0) / h);
            push(0, 1, diff + (-cy).max(0.0) / h);
            row
        })
        .collect();
    let mut warnings = Vec::new();
    let cmax = drifts.iter().map(|c| c.0.abs().max(c.1.abs())).fold(0.0, f64::max);
    if cmax * h > PECLET_WARN {
        warnings.push(format!("cell Peclet number |c|h = {:.3} exceeds {PECLET_WARN}", cmax * h));
    }
    if let (Some((_, g)), Some((_, b))) = (&grid.drift.gamma, &grid.drift.field) {
        let div = weighted_divergence(grid, g, b);
        if div > 1e-3 {
            warnings.push(format!("discrete div(e^gamma b) reaches {div:.3e}"));
        }
    }
    PlanarOperator { matrix: CsrMatrix::from_rows(rows), nodes, m, warnings }
}

/// `max |div(e^γ b)| / max |e^γ b|` by central differences.
fn weighted_divergence(grid: &PlanarGrid, g: &ScalarField, b: &VectorField) -> f64 {
    let h = grid.h;
    let flux = |x: f64, y: f64| {
        let e = g(x, y).exp();
        let v = b(x, y);
        (e * v.0, e * v.1)
    };
    let mut div_max: f64 = 0.0;
    let mut flux_max: f64 = 0.0;
    for j in 0..grid.m {
        for i in 0..grid.m {
            let (x, y) = grid.coords(i, j);
            let d = (flux(x + h, y).0 - flux(x - h, y).0 + flux(x, y + h).1 - flux(x, y - h).1) / (2.0 * h);
            let fl = flux(x, y);
            div_max = div_max.max(d.abs());
            flux_max = flux_max.max(fl.0.abs().max(fl.1.abs()));
        }
    }
    if flux_max > 0.0 {
        div_max / flux_max
    } else {
        0.0
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_residual(op: &PlanarOperator, f: &Nonlinearity, lambda: f64, u: &[f64]) -> f64 {
    let au = op.matrix.apply(u);
    let diag = op.matrix.diagonal();
    let mut num: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut fmax: f64 = 0.0;
    for k in 0..u.len() {
        let fu = f.value(u[k]);
        num = num.max((au[k] - lambda * fu).abs());
        scale = scale.max((diag[k] * u[k]).abs());
        fmax = fmax.max(fu);
    }
    let d = scale + lambda * fmax;
    if d > 0.0 {
        num / d
    } else {
        num
    }
}

fn point_from(op: &PlanarOperator, f: &Nonlinearity, lambda: f64, u: Vec<f64>, iterations: usize, min_increment: f64) -> BranchPoint {
    let residual = rel_residual(op, f, lambda, &u);
    let sup_u = u.iter().copied().fold(0.0, f64::max);
    BranchPoint { lambda, u: op.to_full(&u), sup_u, mu1: None, iterations, residual, min_increment }
}

/// Picard iteration `A v_{k+1} = λ f(v_k)` from `v_0 = 0`; the operator is
/// factorized once.
pub fn monotone_solve_2d(grid: &PlanarGrid, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    let op = assemble_advection_operator(grid);
    monotone_solve_2d_with(&op, grid.direct(), f, lambda, opts)
}

pub fn monotone_solve_2d_with(op: &PlanarOperator, direct: bool, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    if !(lambda >= 0.0) {
        return Err(SolveError::NegativeLambda(lambda));
    }
    let n = op.unknowns();
    let mut v = vec![0.0; n];
    if lambda == 0.0 {
        return Ok(point_from(op, f, 0.0, v, 1, 0.0));
    }
    let solver = SparseFactorCache::new().prepare(&op.matrix, direct)?;
    let cap = 1.0 - opts.eps_cap;
    let mut min_inc = f64::INFINITY;
    for it in 1..=opts.iter_max {
        let rhs: Vec<f64> = v.iter().map(|&t| lambda * f.value(t)).collect();
        let next = solver.solve_from(&rhs, Some(&v))?;
        if next.iter().any(|&t| !(t < cap)) {
            return Err(SolveError::Quenched { lambda, iteration: it });
        }
        min_inc = min_inc.min(next.iter().zip(&v).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min));
        let step = sup_diff(&next, &v);
        v = next;
        if step < opts.tol_iter {
            return Ok(point_from(op, f, lambda, v, it, min_inc));
        }
    }
    Err(SolveError::MaxIterations { lambda, iterations: opts.iter_max })
}

const MONOTONE_SLACK: f64 = 1e-7;

/// Subsolution Newton iteration (as in the radial solver) started from a
/// subsolution `start` (zero, or a minimal solution at a smaller `λ`).
pub fn minimal_solve_2d_with(
    op: &PlanarOperator,
    direct: bool,
    cache: &mut SparseFactorCache,
    f: &Nonlinearity,
    lambda: f64,
    start: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<BranchPoint, SolveError> {
    if !(lambda >= 0.0) {
        return Err(SolveError::NegativeLambda(lambda));
    }
    let n = op.unknowns();
    let mut v = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if lambda == 0.0 {
        return Ok(point_from(op, f, 0.0, vec![0.0; n], 1, 0.0));
    }
    let cap = 1.0 - opts.eps_cap;
    let mut prev = f64::INFINITY;
    let mut min_inc = f64::INFINITY;
    let quench = |it| SolveError::Quenched { lambda, iteration: it };
    for it in 1..=200 {
        let mut shift = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let (fv, dfv) = f.value_and_slope(v[k]);
            shift[k] = -lambda * dfv;
            rhs[k] = lambda * (fv - dfv * v[k]);
        }
        let jac = op.matrix.with_diagonal_shift(|k| shift[k]);
        let solver: SparseSolver = match cache.prepare(&jac, direct) {
            Ok(s) => s,
            Err(_) => return Err(quench(it)),
        };
        let Ok(mut next) = solver.solve_from(&rhs, Some(&v)) else { return Err(quench(it)) };
        if next.iter().any(|t| !t.is_finite()) || next.iter().zip(&v).any(|(a, b)| *a < b - MONOTONE_SLACK) {
            return Err(quench(it));
        }
        if next.iter().any(|&t| !(t < cap)) {
            return Err(quench(it));
        }
        min_inc = min_inc.min(next.iter().zip(&v).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min));
        for (a, b) in next.iter_mut().zip(&v) {
            *a = a.max(*b);
        }
        let step = sup_diff(&next, &v);
        v = next;
        if step < 1e-12 || step < 1e-7 && step > 0.25 * prev {
            return Ok(point_from(op, f, lambda, v, it, min_inc));
        }
        prev = step;
    }
    Err(SolveError::MaxIterations { lambda, iterations: 200 })
}

pub fn minimal_solve_2d(grid: &PlanarGrid, f: &Nonlinearity, lambda: f64, opts: &SolverOptions) -> Result<BranchPoint, SolveError> {
    let op = assemble_advection_operator(grid);
    minimal_solve_2d_with(&op, grid.direct(), &mut SparseFactorCache::new(), f, lambda, None, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanarThreshold {
    pub m: usize,
    pub lambda_star_low: f64,
    pub lambda_star_high: f64,
    pub last_point: BranchPoint,
    pub warnings: Vec<String>,
}

/// Doubling scan and bisection on existence of the minimal solution;
/// each probe starts from the minimal solution at the current lower end.
pub fn find_lambda_star_2d(grid: &PlanarGrid, f: &Nonlinearity, tol: f64, guess: f64, opts: &SolverOptions) -> Result<PlanarThreshold, SolveError> {
    let op = assemble_advection_operator(grid);
    let direct = grid.direct();
    let mut cache = SparseFactorCache::new();
    let tiny = 1e-3 * guess;
    let mut base = minimal_solve_2d_with(&op, direct, &mut cache, f, tiny, None, opts).map_err(|_| SolveError::ScanFailure { lambda: tiny })?;
    let mut probe = |lambda: f64, base: &BranchPoint| {
        let start = op.from_full(&base.u);
        minimal_solve_2d_with(&op, direct, &mut cache, f, lambda, Some(&start), opts)
    };
    let (mut lo, mut hi);
    match probe(guess, &base) {
        Ok(p) => {
            lo = guess;
            base = p;
            loop {
                match probe(2.0 * lo, &base) {
                    Ok(p) => {
                        lo *= 2.0;
                        base = p;
                    }
                    Err(_) => {
                        hi = 2.0 * lo;
                        break;
                    }
                }
                if lo > 1e12 {
                    return Err(SolveError::ScanFailure { lambda: lo });
                }
            }
        }
        Err(_) => {
            hi = guess;
            lo = tiny;
            let mut trial = 0.5 * guess;
            while trial > tiny {
                match probe(trial, &base) {
                    Ok(p) => {
                        lo = trial;
                        base = p;
                        break;
                    }
                    Err(_) => {
                        hi = trial;
                        trial *= 0.5;
                    }
                }
            }
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        match probe(mid, &base) {
            Ok(p) => {
                lo = mid;
                base = p;
            }
            Err(_) => hi = mid,
        }
    }
    Ok(PlanarThreshold { m: grid.m, lambda_star_low: lo, lambda_star_high: hi, last_point: base, warnings: op.warnings.clone() })
}

/// `L = A - λ f'(u)` on the active nodes.
pub fn linearized_operator(op: &PlanarOperator, f: &Nonlinearity, point: &BranchPoint) -> CsrMatrix {
    let u = op.from_full(&point.u);
    op.matrix.with_diagonal_shift(|k| -point.lambda * f.value_and_slope(u[k]).1)
}

/// Perron eigenvalue of the (nonsymmetric) linearization.
pub fn principal_eigenvalue_2d(grid: &PlanarGrid, f: &Nonlinearity, point: &BranchPoint) -> Result<EigenResult, StabilityError> {
    let op = assemble_advection_operator(grid);
    let l = linearized_operator(&op, f, point);
    let mut e = perron_eigenvalue(&l, grid.direct())?;
    e.eigenfunction = op.to_full(&e.eigenfunction);
    Ok(e)
}

/// Quadrature weights on the closed square: `h²` inside, `h²/2` on edges,
/// `h²/4` at corners; boundary values enter through `boundary_value`.
fn lq_norm(grid: &PlanarGrid, interior: &[f64], boundary_value: f64, q: f64) -> f64 {
    let m = grid.m;
    let h2 = grid.h * grid.h;
    let inner: f64 = interior.iter().map(|v| v.abs().powf(q)).sum::<f64>() * h2;
    let edge_nodes = 4.0 * m as f64;
    let boundary = boundary_value.abs().powf(q) * (edge_nodes * 0.5 * h2 + 4.0 * 0.25 * h2);
    (inner + boundary).powf(1.0 / q)
}

/// `sup v` against `‖g(v)‖_q` with `v = -ln(1 - u)`.
pub fn sup_bound_check(grid: &PlanarGrid, point: &BranchPoint, f: &Nonlinearity, q: f64) -> Result<InequalityReport, SolveError> {
    if !(q > 1.0) {
        return Err(SolveError::Linalg(crate::linalg::LinalgError::Factorization(format!("q = {q} must exceed n/2 = 1"))));
    }
    let v: Vec<f64> = point.u.iter().map(|&t| -(1.0 - t).ln()).collect();
    let g: Vec<f64> = v.iter().map(|&x| f.g_value_and_slope(x).0).collect();
    let norm = lq_norm(grid, &g, f.value(0.0), q);
    let sup_v = v.iter().copied().fold(0.0, f64::max);
    let mut params = BTreeMap::new();
    params.insert("q".into(), json!(q));
    params.insert("lambda".into(), json!(point.lambda));
    params.insert("ratio".into(), json!(sup_v / norm));
    Ok(InequalityReport::single("sup_bound", sup_v, norm, 0.0, params))
}

/// Ratio `sup v / ‖g(v)‖_q` along a sweep; bounded when `max/min ≤ factor`.
pub fn sup_bound_sweep(grid: &PlanarGrid, points: &[BranchPoint], f: &Nonlinearity, q: f64, factor: f64) -> Result<InequalityReport, SolveError> {
    let ratios: Vec<f64> = points
        .iter()
        .map(|p| sup_bound_check(grid, p, f, q).map(|r| r.params["ratio"].as_f64().unwrap_or(f64::NAN)))
        .collect::<Result<_, _>>()?;
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let mut params = BTreeMap::new();
    params.insert("q".into(), json!(q));
    params.insert("max_ratio".into(), json!(max));
    params.insert("min_ratio".into(), json!(min));
    let mut r = InequalityReport::single("sup_bound_sweep", max / min, factor, 0.0, params);
    r.series = ratios;
    Ok(r)
}

/// Rounding allowance for the sign of discrete solutions, relative to `max u`.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-12;

/// Solves `A u = s` for `sources` random nonnegative `s`; the report's `lhs`
/// is the largest negative excursion `max(-u)` relative to `max u`.
pub fn maximum_principle_check(grid: &PlanarGrid, sources: usize, seed: u64) -> Result<InequalityReport, SolveError> {
    let op = assemble_advection_operator(grid);
    let solver = SparseFactorCache::new().prepare(&op.matrix, grid.direct())?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sources {
        let sparse = rng.gen_bool(0.5);
        let s: Vec<f64> = (0..op.unknowns()).map(|_| if sparse && rng.gen_bool(0.9) { 0.0 } else { rng.gen::<f64>() }).collect();
        let u = solver.solve(&s)?;
        let top = u.iter().copied().fold(0.0, f64::max);
        let low = u.iter().copied().fold(0.0, f64::min);
        if top > 0.0 {
            worst = worst.max((0.0 - low) / top);
        }
    }
    let mut params = BTreeMap::new();
    params.insert("sources".into(), json!(sources));
    params.insert("seed".into(), json!(seed));
    params.insert("drift".into(), json!(grid.drift.label()));
    params.insert("m".into(), json!(grid.m));
    Ok(InequalityReport::single("maximum_principle", worst, MAX_PRINCIPLE_SLACK, 0.0, params))
}

/// `λ*` for the shear flows `c = A(-sin(πy), 0)`.
pub fn shear_flow_table(m: usize, f: &Nonlinearity, amplitudes: &[f64], tol: f64, opts: &SolverOptions) -> Vec<(f64, Result<PlanarThreshold, SolveError>)> {
    amplitudes
        .par_iter()
        .map(|&a| {
            let drift = if a == 0.0 {
                Drift::none()
            } else {
                Drift::field(format!("{a}*(-sin(pi*y), 0)"), move |_, y| (-a * (std::f64::consts::PI * y).sin(), 0.0))
            };
            let grid = PlanarGrid::new(m, drift);
            (a, find_lambda_star_2d(&grid, f, tol, 1.0, opts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_of_eigenfunction() {
        let g = PlanarGrid::new(63, Drift::none());
        let op = assemble_advection_operator(&g);
        let u: Vec<f64> = (0..63 * 63)
            .map(|k| {
                let (x, y) = g.coords(k % 63, k / 63);
                (PI * x).sin() * (PI * y).sin()
            })
            .collect();
        let au = op.matrix.apply(&u);
        let err = au.iter().zip(&u).map(|(a, b)| (a - 2.0 * PI * PI * b).abs()).fold(0.0, f64::max);
        assert!(err < 2e-2, "{err}");
    }

    #[test]
    fn drift_matches_hand_computation() {
        let g = PlanarGrid::new(40, Drift::field("(1,0)", |_, _| (1.0, 0.0)));
        let op = assemble_advection_operator(&g);
        let u: Vec<f64> = (0..1600)
            .map(|k| {
                let (x, y) = g.coords(k % 40, k / 40);
                x * (1.0 - x) * y * (1.0 - y)
            })
            .collect();
        let au = op.matrix.apply(&u);
        for (k, v) in au.iter().enumerate() {
            let (x, y) = g.coords(k % 40, k / 40);
            let exact = 2.0 * y * (1.0 - y) + 2.0 * x * (1.0 - x) + (1.0 - 2.0 * x) * y * (1.0 - y);
            assert!((v - exact).abs() < 2.0 * g.h, "{v} vs {exact}");
        }
    }

    #[test]
    fn m_matrix_for_strong_drift() {
        let g = PlanarGrid::new(20, Drift::field("swirl", |x, y| (300.0 * (y - 0.5), -300.0 * (x - 0.5))));
        let op = assemble_advection_operator(&g);
        assert!(!op.warnings.is_empty());
        for i in 0..op.matrix.n {
            let mut sum = 0.0;
            for (c, v) in op.matrix.row(i) {
                if c == i {
                    assert!(v > 0.0);
                } else {
                    assert!(v <= 0.0);
                }
                sum += v;
            }
            assert!(sum >= -1e-9);
        }
    }

    #[test]
    fn zero_lambda_and_gradient_paths_agree() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let opts = SolverOptions::default();
        let direct = PlanarGrid::new(33, Drift::field("(1,0)", |_, _| (1.0, 0.0)));
        let grad = PlanarGrid::new(33, Drift::gradient("x", |x, _| x));
        assert!(monotone_solve_2d(&direct, &f, 0.0, &opts).unwrap().u.iter().all(|&v| v == 0.0));
        let a = monotone_solve_2d(&direct, &f, 2.0, &opts).unwrap();
        let b = monotone_solve_2d(&grad, &f, 2.0, &opts).unwrap();
        assert!(sup_diff(&a.u, &b.u) < 1e-6);
        assert!(a.min_increment >= -1e-12);
    }

    #[test]
    fn perron_eigenvalue_of_square() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = PlanarGrid::new(31, Drift::none());
        let z = BranchPoint { lambda: 0.0, u: vec![0.0; 31 * 31], sup_u: 0.0, mu1: None, iterations: 0, residual: 0.0, min_increment: 0.0 };
        let e = principal_eigenvalue_2d(&g, &f, &z).unwrap();
        let h = g.h;
        let exact = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((e.mu1 - exact).abs() < 1e-8 * exact, "{} {exact}", e.mu1);
        assert!(e.eigenfunction.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn sup_bound_domain_and_small_lambda() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = PlanarGrid::new(15, Drift::none());
        let z = BranchPoint { lambda: 0.0, u: vec![0.0; 225], sup_u: 0.0, mu1: None, iterations: 0, residual: 0.0, min_increment: 0.0 };
        assert!(sup_bound_check(&g, &z, &f, 1.0).is_err());
        let r = sup_bound_check(&g, &z, &f, 2.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!((r.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximum_principle_on_random_sources() {
        let g = PlanarGrid::new(17, Drift::field("swirl", |x, y| (40.0 * (y - 0.5), -40.0 * (x - 0.5))));
        let r = maximum_principle_check(&g, 20, 7).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn mask_zeroes_exterior() {
        let f = Nonlinearity::mems(2.0).unwrap();
        let g = PlanarGrid::new(41, Drift::none()).with_mask(DiskMask::inscribed());
        let p = minimal_solve_2d(&g, &f, 1.0, &SolverOptions::default()).unwrap();
        for j in 0..41 {
            for i in 0..41 {
                if !g.is_active(i, j) {
                    assert_eq!(p.u[j * 41 + i], 0.0);
                }
            }
        }
        assert!(p.sup_u > 0.0);
    }
}
