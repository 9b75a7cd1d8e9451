//! CCCP on the convex QP relaxation.
//!
//! The relaxation adds a diagonal term per label,
//!
//! ```text
//! Σ_i Σ_x p_i(x) d_i(x) + Σ_(i,j) Σ p_i p_j θ_ij − Σ_i Σ_x p_i(x)² d_i(x),
//! d_i(x) = Σ_{j∈Ne(i)} Σ_{x_j} |θ_ij(x, x_j)| / 2,
//! ```
//!
//! which makes the objective concave while agreeing with the MAP QP on
//! integral beliefs. Messages are the same δ as in the nonconvex solver; the
//! gradient gains `+d` and the subproblem denominator becomes `θ̂ + 2d`. Any
//! stationary point is the global optimum of the relaxation.

use super::{CccpState, InnerSolution, QpForm};
use crate::error::{MrfError, Result};
use crate::messages::row_sums;
use crate::model::{Beliefs, PairwiseMrf};
use crate::solver::{self, SolveReport, SolverConfig, SolverKind};

/// Per-node diagonal terms `d_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalTerms(Vec<Vec<f64>>);

impl DiagonalTerms {
    pub fn node(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.0
    }
}

pub fn diagonal_terms(mrf: &PairwiseMrf) -> DiagonalTerms {
    DiagonalTerms(
        (0..mrf.num_nodes())
            .map(|i| row_sums(mrf, i, |v| v.abs() / 2.0))
            .collect(),
    )
}

/// The relaxed objective. Equals [`PairwiseMrf::qp_objective`] on integral beliefs.
pub fn convex_qp_objective(mrf: &PairwiseMrf, p: &Beliefs, d: &DiagonalTerms) -> Result<f64> {
    mrf.check_beliefs_shape(p)?;
    if d.0.len() != mrf.num_nodes()
        || d.0.iter().enumerate().any(|(i, di)| di.len() != mrf.domain_size(i))
    {
        return Err(MrfError::Shape("diagonal terms do not match the model".into()));
    }
    Ok(relaxed_objective(mrf, p, d.0.iter().map(Vec::as_slice)))
}

pub(crate) fn relaxed_objective<'a>(
    mrf: &PairwiseMrf,
    p: &Beliefs,
    diagonal: impl Iterator<Item = &'a [f64]>,
) -> f64 {
    let bilinear = mrf.qp_objective(p).expect("shape checked by caller");
    let mut diag = 0.0;
    for (pi, di) in p.nodes().iter().zip(diagonal) {
        for (&v, &d) in pi.iter().zip(di) {
            // p − p², kept as one product so integral beliefs cancel exactly.
            diag += v * (1.0 - v) * d;
        }
    }
    diag + bilinear
}

/// The zeros-set inner loop with denominator `2d + θ̂`.
pub fn convex_inner_update(gradient: &[f64], theta_hat: &[f64], d: &[f64]) -> Result<InnerSolution> {
    if gradient.len() != theta_hat.len() || gradient.len() != d.len() {
        return Err(MrfError::Shape("gradient, θ̂ and d differ in length".into()));
    }
    let denominator: Vec<f64> = theta_hat.iter().zip(d).map(|(&t, &dv)| 2.0 * dv + t).collect();
    if let Some(x) = denominator.iter().position(|&v| !(v > 0.0)) {
        return Err(MrfError::DegenerateNode {
            node: 0,
            reason: format!("label {x} has a zero subproblem denominator"),
        });
    }
    Ok(super::inner_loop(gradient, &denominator))
}

pub fn setup_convex(mrf: &PairwiseMrf, init: Beliefs) -> Result<CccpState<'_>> {
    CccpState::new(mrf, QpForm::Convex, init)
}

/// Sweeps until the relaxed objective settles. The decoded assignment is the
/// per-node argmax of the relaxed optimum.
pub fn solve_convex(mrf: &PairwiseMrf, config: &SolverConfig) -> Result<SolveReport> {
    solver::solve_cccp(SolverKind::Convex, QpForm::Convex, mrf, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Assignment;
    use crate::solver::Init;

    fn two_node() -> PairwiseMrf {
        let mut m = PairwiseMrf::new(vec![2, 2]).unwrap();
        m.add_edge(0, 1, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        m
    }

    #[test]
    fn diagonal_terms_examples() {
        let m = two_node();
        let d = diagonal_terms(&m);
        assert_eq!(d.node(0), &[1.0, 0.5]);
        assert_eq!(d.node(1), &[1.0, 0.5]);

        let mut zero = PairwiseMrf::new(vec![2, 2]).unwrap();
        zero.add_edge(0, 1, vec![0.0; 4]).unwrap();
        assert_eq!(diagonal_terms(&zero).node(0), &[0.0, 0.0]);

        let mut signed = PairwiseMrf::new(vec![2, 2]).unwrap();
        signed.add_edge(0, 1, vec![-2.0, 1.0, 0.0, -3.0]).unwrap();
        assert_eq!(diagonal_terms(&signed).node(0), &[1.5, 1.5]);
    }

    #[test]
    fn diagonal_is_half_theta_hat_when_nonnegative() {
        let m = two_node();
        let d = diagonal_terms(&m);
        for i in 0..2 {
            let th = crate::messages::theta_hat(&m, i);
            for x in 0..2 {
                assert_eq!(d.node(i)[x], th[x] / 2.0);
            }
        }
    }

    #[test]
    fn convex_objective_examples() {
        let m = two_node();
        let d = diagonal_terms(&m);
        let integral = Beliefs::indicator(m.domains(), &Assignment::new(vec![0, 0])).unwrap();
        assert_eq!(convex_qp_objective(&m, &integral, &d).unwrap(), 2.0);
        let uniform = Beliefs::uniform(m.domains());
        assert!((convex_qp_objective(&m, &uniform, &d).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn convex_inner_update_worked_example() {
        let m = two_node();
        let mut s = setup_convex(&m, Beliefs::uniform(m.domains())).unwrap();
        s.send_messages();
        let ws = &s.workspaces()[0];
        let g = ws.gradient_v(&[0.5, 0.5]).unwrap();
        assert_eq!(g, vec![3.0, 1.5]);
        assert_eq!(ws.denominator(), &[4.0, 2.0]);
        let sol = convex_inner_update(&g, ws.theta_hat(), ws.diagonal()).unwrap();
        assert!((sol.lambda - 2.0 / 3.0).abs() < 1e-15);
        assert!((sol.beliefs[0] - 7.0 / 12.0).abs() < 1e-15);
        assert!((sol.beliefs[1] - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn convex_inner_update_symmetric_and_clamped() {
        let s = convex_inner_update(&[3.0, 3.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(s.beliefs, vec![0.5, 0.5]);
        // Denominators (1, 1): same passes as the nonconvex example.
        let s = convex_inner_update(&[10.0, 0.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(s.lambda_trace, vec![4.5, 9.0]);
        assert_eq!(s.zeros, vec![1]);
        assert_eq!(s.beliefs, vec![1.0, 0.0]);
    }

    #[test]
    fn convex_inner_update_rejects_zero_denominator() {
        assert!(matches!(
            convex_inner_update(&[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]),
            Err(MrfError::DegenerateNode { .. })
        ));
    }

    #[test]
    fn solve_convex_two_node_decodes_map() {
        let config = SolverConfig { tolerance: 1e-12, max_iterations: 10_000, ..SolverConfig::for_solver(SolverKind::Convex) };
        let r = solve_convex(&two_node(), &config).unwrap();
        assert_eq!(r.assignment.labels(), &[0, 0]);
        assert_eq!(r.integral_objective, 2.0);
        assert!(r.convex_objective.is_some());
    }

    #[test]
    fn zero_potentials_reject_or_stay_uniform() {
        // All-zero tables leave no denominator, which is degenerate.
        let mut zero = PairwiseMrf::new(vec![2, 2]).unwrap();
        zero.add_edge(0, 1, vec![0.0; 4]).unwrap();
        assert!(solve_convex(&zero, &SolverConfig::default()).is_err());
        // Constant tables: uniform beliefs are a fixed point of the relaxation.
        let mut flat = PairwiseMrf::new(vec![2, 2]).unwrap();
        flat.add_edge(0, 1, vec![1.0; 4]).unwrap();
        let mut s = setup_convex(&flat, Beliefs::uniform(flat.domains())).unwrap();
        s.outer_iteration().unwrap();
        assert_eq!(s.beliefs(), &Beliefs::uniform(flat.domains()));
        let config = SolverConfig { init: Init::Uniform, ..SolverConfig::for_solver(SolverKind::Convex) };
        assert_eq!(solve_convex(&flat, &config).unwrap().assignment.labels(), &[0, 0]);
    }
}
