//! Numeric pass/fail reports for the a-priori estimates along the minimal
//! branch and theorem-based regularity predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::nonlinearity::{critical_dimension, dimension_bound, Delta, HypothesisReport, Nonlinearity, NonlinearityKind};
use crate::radial::{BranchPoint, RadialGrid, Verdict};
use crate::stability::origin_exponent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("{0}")]
    Domain(String),
}

/// Default factor for sweep-boundedness claims.
pub const BOUND_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub params: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

impl InequalityReport {
    /// `pass ⇔ lhs ≤ rhs (1 + tol)`.
    pub fn single(name: &str, lhs: f64, rhs: f64, tol: f64, params: BTreeMap<String, Value>) -> Self {
        let pass = lhs.is_finite() && rhs.is_finite() && lhs <= rhs + tol * rhs.abs();
        Self { name: name.into(), lhs, rhs, margin: rhs - lhs, pass, params, series: Vec::new(), warnings: Vec::new() }
    }

    /// Sweep boundedness on one or more grids: on every grid,
    /// `max ≤ factor × median`. `lhs` is the worst `max / median`.
    pub fn bounded(name: &str, sweeps: &[Vec<f64>], factor: f64, mut params: BTreeMap<String, Value>) -> Self {
        let mut worst: f64 = 0.0;
        let mut finite = !sweeps.is_empty();
        for (k, s) in sweeps.iter().enumerate() {
            if s.is_empty() || s.iter().any(|v| !v.is_finite()) {
                finite = false;
                continue;
            }
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let med = median(s);
            let ratio = if med > 0.0 { max / med } else if max <= 0.0 { 1.0 } else { f64::INFINITY };
            params.insert(format!("grid{k}_max"), json!(max));
            params.insert(format!("grid{k}_median"), json!(med));
            worst = worst.max(ratio);
        }
        let pass = finite && worst <= factor;
        let series = sweeps.last().cloned().unwrap_or_default();
        Self { name: name.into(), lhs: worst, rhs: factor, margin: factor - worst, pass, params, series, warnings: Vec::new() }
    }
}

/// `∫ |∇u|²` over the ball.
pub fn h1_energy(grid: &RadialGrid, point: &BranchPoint) -> f64 {
    grid.assemble().plain_energy(&point.u)
}

/// Quadrature value with an optional reliability warning.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub warning: Option<String>,
}

/// Unweighted ball volume of each cell.
fn plain_volumes(grid: &RadialGrid) -> Vec<f64> {
    let n = grid.n_dim as i32;
    let area = grid.sphere_area();
    grid.faces.windows(2).map(|w| area * (w[1].powi(n) - w[0].powi(n)) / n as f64).collect()
}

/// `∫ f'(u) f(u)` over the ball; warns when the integrand grows faster than
/// `r^{-(n - 0.1)}` near the origin.
pub fn ff_prime_integral(grid: &RadialGrid, f: &Nonlinearity, point: &BranchPoint) -> Quadrature {
    let vol = plain_volumes(grid);
    let integrand: Vec<f64> = point
        .u
        .iter()
        .map(|&t| {
            let (fv, dfv) = f.value_and_slope(t);
            fv * dfv
        })
        .collect();
    let value = integrand.iter().zip(&vol).map(|(a, w)| a * w).sum();
    let limit = -(grid.n_dim as f64 - 0.1);
    let warning = origin_exponent(&grid.nodes, &integrand, 16)
        .filter(|&k| k < limit)
        .map(|k| format!("QuadratureWarning: f'(u)f(u) behaves like r^{k:.3} near the origin"));
    Quadrature { value, warning }
}

/// `sup_r r f(u(r))` for `n = 2`, `sup_r r² f'(u(r))` for `n ≥ 3`.
pub fn pointwise_f_value(grid: &RadialGrid, f: &Nonlinearity, point: &BranchPoint) -> f64 {
    grid.nodes
        .iter()
        .zip(&point.u)
        .map(|(&r, &t)| {
            let (fv, dfv) = f.value_and_slope(t);
            if grid.n_dim == 2 {
                r * fv
            } else {
                r * r * dfv
            }
        })
        .fold(0.0, f64::max)
}

/// Sweep-boundedness of [`pointwise_f_value`] over branches on one or more grids.
pub fn pointwise_f_bound(grids: &[(&RadialGrid, &[BranchPoint])], f: &Nonlinearity) -> InequalityReport {
    let sweeps: Vec<Vec<f64>> = grids.iter().map(|(g, pts)| pts.iter().map(|p| pointwise_f_value(g, f, p)).collect()).collect();
    let mut params = BTreeMap::new();
    params.insert("nonlinearity".into(), json!(f.label()));
    if let Some((g, _)) = grids.first() {
        params.insert("quantity".into(), json!(if g.n_dim == 2 { "sup r f(u)" } else { "sup r^2 f'(u)" }));
    }
    InequalityReport::bounded("pointwise_f", &sweeps, BOUND_FACTOR, params)
}

/// Gradient-decay exponent bound: `-1` for `n ≥ 10`, else `-n/2 + 1 + √(n-1)`.
pub fn decay_exponent_bound(n: usize) -> Result<f64, VerificationError> {
    if n < 3 {
        return Err(VerificationError::Domain(format!("n = {n} must be >= 3")));
    }
    if n >= 10 {
        return Ok(-1.0);
    }
    let nf = n as f64;
    Ok(-nf / 2.0 + 1.0 + (nf - 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Prediction {
    PredictedRegular,
    PredictedSingularPossible,
    NoTheoremApplies,
}

/// Geometry and drift of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Setting {
    pub radial_ball: bool,
    /// Drift is a gradient field (self-adjoint case).
    pub gradient_field: bool,
    pub zero_drift: bool,
    /// Pure power nonlinearity, for which the critical dimension is sharp.
    pub pure_power: bool,
}

impl Setting {
    pub fn radial(f: &Nonlinearity, zero_drift: bool) -> Self {
        Self {
            radial_ball: true,
            gradient_field: true,
            zero_drift,
            pure_power: matches!(f.kind(), NonlinearityKind::MemsPower { .. }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremVerdict {
    pub prediction: Prediction,
    /// Name of the criterion that produced the prediction.
    pub rule: Option<&'static str>,
    pub numerical: Option<Verdict>,
    pub contradiction: bool,
}

/// Applies, in order: radial planar regularity; the power critical
/// dimension; the fast-growth rule for `n ≤ 9`; the `(δ, μ)` dimension
/// bound; the planar rule under the log-growth conditions.
pub fn regularity_verdict_theorem(numerical: Option<Verdict>, report: &HypothesisReport, n: usize, setting: Setting) -> TheoremVerdict {
    let power_np = report.limit_h2prime.and_then(|p| critical_dimension(p).ok());
    let nf = n as f64;
    let regular = |rule| (Prediction::PredictedRegular, Some(rule));
    let (prediction, rule) = if n == 2 && setting.radial_ball && setting.gradient_field {
        regular("radial_plane")
    } else if power_np.is_some_and(|np| nf < np) {
        regular("power_critical_dimension")
    } else if report.delta == Some(Delta::Infinite) && report.growth_monotone.holds() && n <= 9 {
        regular("fast_growth")
    } else if delta_bound_applies(report, nf) {
        regular("growth_dimension_bound")
    } else if n == 2 && report.holds_h1.holds() && report.holds_h2.holds() {
        regular("planar_log_growth")
    } else if power_np.is_some() {
        (Prediction::PredictedSingularPossible, Some("power_critical_dimension"))
    } else {
        (Prediction::NoTheoremApplies, None)
    };
    let sharp = setting.radial_ball && setting.zero_drift && setting.pure_power;
    let contradiction = match (prediction, numerical) {
        (Prediction::PredictedRegular, Some(Verdict::Singular)) => true,
        (Prediction::PredictedSingularPossible, Some(Verdict::Regular)) => sharp,
        _ => false,
    };
    TheoremVerdict { prediction, rule, numerical, contradiction }
}

fn delta_bound_applies(report: &HypothesisReport, n: f64) -> bool {
    let (Some(delta), Some(mu)) = (report.delta, report.mu) else { return false };
    let threshold_ok = match delta {
        Delta::Finite(d) => mu > 1.0 / (1.0 + d),
        Delta::Infinite => mu > 0.0,
    };
    threshold_ok && dimension_bound(delta, mu).is_some_and(|b| n < b)
}
