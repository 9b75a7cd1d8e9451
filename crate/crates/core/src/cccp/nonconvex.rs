//! CCCP on the nonconvex MAP QP.
//!
//! Each outer iteration linearizes the concave part at the current beliefs
//! and solves the resulting convex program exactly, node by node. The QP
//! objective never decreases, and end-of-iteration beliefs satisfy the KKT
//! conditions of the per-node subproblem (see [`super::kkt_residual`]).

use super::{CccpState, InnerSolution, QpForm};
use crate::error::Result;
use crate::model::{Beliefs, PairwiseMrf};
use crate::solver::{self, SolveReport, SolverConfig, SolverKind};

/// Builds the per-node workspaces. `mrf` must be nonnegative and unary-free;
/// a label with `θ̂ = 0` (or an isolated node) is a degenerate-node error.
pub fn setup(mrf: &PairwiseMrf, init: Beliefs) -> Result<CccpState<'_>> {
    CccpState::new(mrf, QpForm::Nonconvex, init)
}

/// The zeros-set inner loop with denominator `θ̂`.
pub fn inner_loop(gradient: &[f64], theta_hat: &[f64]) -> InnerSolution {
    super::inner_loop(gradient, theta_hat)
}

/// Best of `config.restarts` runs on the absorbed, shifted model.
pub fn solve(mrf: &PairwiseMrf, config: &SolverConfig) -> Result<SolveReport> {
    solver::solve_cccp(SolverKind::Cccp, QpForm::Nonconvex, mrf, config)
}
