//! Radial problem on the unit ball in `R^n`:
//! `-u'' - (n-1)u'/r - γ'u' = λ f(u)`, `u'(0) = 0`, `u(1) = 0`,
//! discretized in the self-adjoint form `-(e^γ r^{n-1} u')' = λ e^γ r^{n-1} f(u)`.

mod extremal;
mod grid;
mod solve;
mod transformed;

pub use extremal::{
    branch_sweep, classify, default_fit_window, find_lambda_star, fit_decay_exponent, gradient_profile, threshold_on_grid,
    ContinuationResult, GridThreshold, Verdict, GAP_AGREEMENT, GAP_COLLAPSE,
};
pub use grid::{GridError, RadialGrid, RadialOperator, RadialPotential};
pub use solve::{
    minimal_solve, minimal_solve_with, monotone_solve, monotone_solve_with, newton_refine, newton_refine_with, residual, BranchPoint,
    NewtonReport, SolveError, SolverOptions,
};
pub use transformed::transformed_solve;
