//! Numerical solver and verification harness for the singular semilinear
//! elliptic problem
//!
//! ```text
//!     -Δu + c·∇u = λ f(u)   in Ω,     u = 0 on ∂Ω,
//! ```
//!
//! where `f` is positive, nondecreasing and convex on `[0, 1)` and blows up at
//! `u = 1`. The crate computes the branch of minimal solutions, brackets the
//! extremal parameter `λ*`, resolves the extremal profile, measures the
//! principal eigenvalue of the linearization and checks the a-priori estimates
//! that hold along the minimal branch.
//!
//! The radial solver works on the unit ball in any dimension `n ≥ 2` with a
//! radial potential `γ`; the planar solver handles an arbitrary advection field
//! on the unit square.

pub mod cli;
pub mod expr;
pub mod linalg;
pub mod nonlinearity;
pub mod planar;
pub mod radial;
pub mod stability;
pub mod suite;
pub mod verification;

pub use nonlinearity::{HypothesisReport, Nonlinearity, NonlinearityError};
pub use radial::{BranchPoint, ContinuationResult, RadialGrid, SolveError, SolverOptions, Verdict};
pub use stability::EigenResult;
pub use verification::InequalityReport;
