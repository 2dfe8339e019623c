use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{SymTridiagonal, Tridiagonal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension n = {0} must be at least 2")]
    Dimension(usize),
    #[error("need at least 4 cells, got {0}")]
    TooFewCells(usize),
    #[error("faces must increase strictly from 0 to 1 (violation at index {0})")]
    NonMonotone(usize),
    #[error("potential is not smooth at the origin: gamma'({r:e}) = {slope:e}")]
    SingularPotential { r: f64, slope: f64 },
    #[error("potential is not finite at r = {0}")]
    NonFinitePotential(f64),
}

type RadialFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Radial potential `γ(r)`; the radial operator is
/// `-e^{-γ} r^{1-n} (e^γ r^{n-1} u')'`.
#[derive(Clone)]
pub enum RadialPotential {
    Zero,
    /// `γ = a r²`.
    Quadratic { a: f64 },
    /// Arbitrary smooth `γ`; derivatives by central differences.
    Function { label: String, gamma: Arc<RadialFn> },
}

impl fmt::Debug for RadialPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

const FD_STEP: f64 = 1e-4;

impl RadialPotential {
    pub fn function(label: impl Into<String>, gamma: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function { label: label.into(), gamma: Arc::new(gamma) }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Zero => "0".into(),
            Self::Quadratic { a } => format!("{a}*r^2"),
            Self::Function { label, .. } => label.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero) || matches!(self, Self::Quadratic { a } if *a == 0.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { a } => a * r * r,
            Self::Function { gamma, .. } => gamma(r),
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { a } => 2.0 * a * r,
            Self::Function { gamma, .. } => {
                let h = FD_STEP;
                (8.0 * (gamma(r + h) - gamma(r - h)) - (gamma(r + 2.0 * h) - gamma(r - 2.0 * h))) / (12.0 * h)
            }
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { a } => 2.0 * a,
            Self::Function { gamma, .. } => {
                let h = 1e-3;
                (gamma(r + h) - 2.0 * gamma(r) + gamma(r - h)) / (h * h)
            }
        }
    }
}

/// Cell-centred radial grid on the unit ball. Cell `i` spans
/// `[faces[i], faces[i+1]]` and carries the node `r_i` at its midpoint;
/// `faces[0] = 0` is a zero-flux face and `faces[N] = 1` carries `u = 0`.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub n_dim: usize,
    pub faces: Vec<f64>,
    pub nodes: Vec<f64>,
    pub potential: RadialPotential,
    /// `γ` at the nodes.
    pub gamma: Vec<f64>,
    /// `γ'` at the nodes.
    pub gamma_prime: Vec<f64>,
}

impl RadialGrid {
    /// Uniform grid with `cells` cells, `h = 1/cells`, `r_i = (i - 1/2) h`.
    pub fn uniform(n_dim: usize, cells: usize, potential: RadialPotential) -> Result<Self, GridError> {
        let h = 1.0 / cells as f64;
        let faces = (0..=cells).map(|i| if i == cells { 1.0 } else { i as f64 * h }).collect();
        Self::from_faces(n_dim, faces, potential)
    }

    pub fn from_faces(n_dim: usize, faces: Vec<f64>, potential: RadialPotential) -> Result<Self, GridError> {
        if n_dim < 2 {
            return Err(GridError::Dimension(n_dim));
        }
        if faces.len() < 5 {
            return Err(GridError::TooFewCells(faces.len().saturating_sub(1)));
        }
        if faces[0] != 0.0 {
            return Err(GridError::NonMonotone(0));
        }
        if let Some(k) = (1..faces.len()).find(|&k| !(faces[k] > faces[k - 1])) {
            return Err(GridError::NonMonotone(k));
        }
        let last = faces.len() - 1;
        if faces[last] != 1.0 {
            return Err(GridError::NonMonotone(last));
        }
        let probe = 1e-6;
        let slope = potential.d1(probe);
        if !(slope.abs() <= 1e-3) {
            return Err(GridError::SingularPotential { r: probe, slope });
        }
        let nodes: Vec<f64> = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let gamma: Vec<f64> = nodes.iter().map(|&r| potential.value(r)).collect();
        let gamma_prime: Vec<f64> = nodes.iter().map(|&r| potential.d1(r)).collect();
        for (&r, &g) in nodes.iter().zip(&gamma) {
            if !g.is_finite() {
                return Err(GridError::NonFinitePotential(r));
            }
        }
        for &r in &faces {
            if !potential.value(r).is_finite() {
                return Err(GridError::NonFinitePotential(r));
            }
        }
        Ok(Self { n_dim, faces, nodes, potential, gamma, gamma_prime })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Width of the first cell.
    pub fn h_min(&self) -> f64 {
        self.faces.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Grid keeping every other face; `None` for an odd cell count.
    pub fn coarsened(&self) -> Option<Self> {
        if self.len() % 2 != 0 || self.len() < 8 {
            return None;
        }
        let faces = self.faces.iter().step_by(2).copied().collect();
        Self::from_faces(self.n_dim, faces, self.potential.clone()).ok()
    }

    /// Grid with every cell split in two.
    pub fn refined(&self) -> Self {
        let mut faces = Vec::with_capacity(2 * self.faces.len());
        for w in self.faces.windows(2) {
            faces.push(w[0]);
            faces.push(0.5 * (w[0] + w[1]));
        }
        faces.push(1.0);
        Self::from_faces(self.n_dim, faces, self.potential.clone()).expect("refinement preserves validity")
    }

    /// Surface measure of the unit sphere in `R^n`.
    pub fn sphere_area(&self) -> f64 {
        let n = self.n_dim as f64;
        2.0 * std::f64::consts::PI.powf(0.5 * n) / gamma_fn(0.5 * n)
    }

    pub fn assemble(&self) -> RadialOperator {
        let n = self.n_dim as i32;
        let cells = self.len();
        let mut kappa = vec![0.0; cells + 1];
        for k in 1..=cells {
            let f = self.faces[k];
            let dist = if k == cells { 1.0 - self.nodes[cells - 1] } else { self.nodes[k] - self.nodes[k - 1] };
            kappa[k] = self.potential.value(f).exp() * f.powi(n - 1) / dist;
        }
        let volume: Vec<f64> = (0..cells)
            .map(|i| self.gamma[i].exp() * (self.faces[i + 1].powi(n) - self.faces[i].powi(n)) / n as f64)
            .collect();
        let mut plain_kappa = vec![0.0; cells + 1];
        for k in 1..=cells {
            let f = self.faces[k];
            let dist = if k == cells { 1.0 - self.nodes[cells - 1] } else { self.nodes[k] - self.nodes[k - 1] };
            plain_kappa[k] = f.powi(n - 1) / dist;
        }
        let lower: Vec<f64> = (0..cells).map(|i| if i == 0 { 0.0 } else { -kappa[i] / volume[i] }).collect();
        let upper: Vec<f64> = (0..cells).map(|i| if i + 1 == cells { 0.0 } else { -kappa[i + 1] / volume[i] }).collect();
        let diag: Vec<f64> = (0..cells).map(|i| (kappa[i] + kappa[i + 1]) / volume[i]).collect();
        RadialOperator {
            matrix: Tridiagonal { lower, diag, upper },
            kappa,
            plain_kappa,
            volume,
            sphere_area: self.sphere_area(),
        }
    }
}

/// Flux-form radial operator with its quadrature data. Row `i` reads
/// `(κ_{i-1/2}(u_i - u_{i-1}) + κ_{i+1/2}(u_i - u_{i+1})) / V_i` with
/// `κ_{1/2} = 0` and `u_{N+1} = 0`.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub matrix: Tridiagonal,
    /// Face conductances `e^γ r^{n-1} / Δr`, index `k` for face `k`.
    pub kappa: Vec<f64>,
    /// Conductances without the `e^γ` weight.
    pub plain_kappa: Vec<f64>,
    /// Weighted cell volumes `e^{γ(r_i)} ∫ r^{n-1} dr` over cell `i`.
    pub volume: Vec<f64>,
    pub sphere_area: f64,
}

impl RadialOperator {
    pub fn len(&self) -> usize {
        self.volume.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volume.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.apply(u)
    }

    fn face_jump(u: &[f64], k: usize) -> f64 {
        let n = u.len();
        if k == n {
            u[n - 1]
        } else {
            u[k - 1] - u[k]
        }
    }

    /// `∫ e^γ ∇u·∇v` over the ball.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.len();
        self.sphere_area * (1..=n).map(|k| self.kappa[k] * Self::face_jump(u, k) * Self::face_jump(v, k)).sum::<f64>()
    }

    /// `∫ |∇u|²` over the ball, without the weight.
    pub fn plain_energy(&self, u: &[f64]) -> f64 {
        let n = self.len();
        self.sphere_area * (1..=n).map(|k| self.plain_kappa[k] * Self::face_jump(u, k).powi(2)).sum::<f64>()
    }

    /// `∫ e^γ u v` over the ball.
    pub fn mass(&self, u: &[f64], v: &[f64]) -> f64 {
        self.sphere_area * self.volume.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum::<f64>()
    }

    /// Symmetric form `D^{1/2} (A + diag(shift)) D^{-1/2}` with `D = diag(V)`.
    pub fn symmetric(&self, shift: &[f64]) -> SymTridiagonal {
        let n = self.len();
        let diag = (0..n).map(|i| self.matrix.diag[i] + shift[i]).collect();
        let off = (0..n - 1).map(|i| -self.kappa[i + 1] / (self.volume[i] * self.volume[i + 1]).sqrt()).collect();
        SymTridiagonal { diag, off }
    }
}

/// Lanczos approximation of `Γ(x)` for `x > 0`.
pub(crate) fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_laplacian_of_paraboloid() {
        for n in [2usize, 3, 5, 8] {
            let g = RadialGrid::uniform(n, 64, RadialPotential::Zero).unwrap();
            let a = g.assemble();
            let u: Vec<f64> = g.nodes.iter().map(|r| 1.0 - r * r).collect();
            let au = a.apply(&u);
            for &v in &au[..63] {
                assert!((v - 2.0 * n as f64).abs() < 1e-9, "n={n}: {v}");
            }
        }
    }

    #[test]
    fn drift_term_of_quadratic_potential() {
        let g = RadialGrid::uniform(2, 256, RadialPotential::Quadratic { a: 1.0 }).unwrap();
        let a = g.assemble();
        let u: Vec<f64> = g.nodes.iter().map(|r| 1.0 - r * r).collect();
        let au = a.apply(&u);
        for (i, &r) in g.nodes.iter().enumerate().take(255) {
            assert!((au[i] - (4.0 + 4.0 * r * r)).abs() < 1e-3, "r={r}: {}", au[i]);
        }
    }

    #[test]
    fn m_matrix_structure() {
        let g = RadialGrid::uniform(4, 32, RadialPotential::function("sin(r^2)", |r| (r * r).sin())).unwrap();
        let a = g.assemble().matrix;
        for i in 0..32 {
            assert!(a.diag[i] > 0.0);
            assert!(a.lower[i] <= 0.0 && a.upper[i] <= 0.0);
            assert!(a.diag[i] + a.lower[i] + a.upper[i] >= -1e-9 * a.diag[i]);
        }
    }

    #[test]
    fn summation_by_parts() {
        let g = RadialGrid::uniform(3, 40, RadialPotential::Quadratic { a: 0.7 }).unwrap();
        let a = g.assemble();
        let u: Vec<f64> = g.nodes.iter().map(|r| (1.0 - r).powi(2) + r).collect();
        let v: Vec<f64> = g.nodes.iter().map(|r| (3.0 * r).cos()).collect();
        let au = a.apply(&u);
        let lhs = a.mass(&au, &v);
        let rhs = a.energy(&u, &v);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(RadialGrid::from_faces(2, vec![0.0, 0.3, 0.2, 0.5, 0.7, 1.0], RadialPotential::Zero), Err(GridError::NonMonotone(2))));
        assert!(matches!(RadialGrid::uniform(1, 16, RadialPotential::Zero), Err(GridError::Dimension(1))));
        assert!(matches!(RadialGrid::uniform(2, 16, RadialPotential::function("r", |r| r)), Err(GridError::SingularPotential { .. })));
    }

    #[test]
    fn sphere_areas() {
        let g2 = RadialGrid::uniform(2, 8, RadialPotential::Zero).unwrap();
        let g3 = RadialGrid::uniform(3, 8, RadialPotential::Zero).unwrap();
        assert!((g2.sphere_area() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((g3.sphere_area() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn coarsen_refine_roundtrip() {
        let g = RadialGrid::uniform(2, 16, RadialPotential::Zero).unwrap();
        let c = g.coarsened().unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c.refined().faces, g.faces);
    }
}
