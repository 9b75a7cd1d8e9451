//! Multiplicative updates from the geometric-programming view of the MAP QP.
//!
//! Substituting `p = e^y` and taking the log of the objective turns each CCCP
//! step into a closed-form update with no inner loop:
//!
//! ```text
//! p_i'(x) = p_i(x) · Σ_{j∈Ne(i)} δ_j(x) / C_i
//! ```
//!
//! with `C_i` the normalizer. This is the EM update for MAP as likelihood
//! maximization. Positive beliefs stay positive, and the QP objective never
//! decreases under synchronous updates.

use crate::error::{MrfError, Result};
use crate::exec::{self, Parallelism};
use crate::messages::{fill_incoming, sum_incoming};
use crate::model::{Beliefs, PairwiseMrf};
use crate::solver::{self, SolveReport, SolverConfig, SolverKind, Sweeper};
use crate::cccp::InnerLoopStats;

/// Belief entries are kept at or above this so support is never lost to
/// underflow. Losing labels decay geometrically and reach it in normal runs.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// One multiplicative update for a node, given `Σ_j δ_j`.
///
/// Returns the new beliefs and the normalizer `C_i`.
pub fn gp_update(node: usize, p: &[f64], message_sum: &[f64]) -> Result<(Vec<f64>, f64)> {
    if p.len() != message_sum.len() {
        return Err(MrfError::Shape(format!(
            "node {node}: {} beliefs but {} message entries",
            p.len(),
            message_sum.len()
        )));
    }
    let mut out: Vec<f64> = p.iter().zip(message_sum).map(|(a, b)| a * b).collect();
    let normalizer: f64 = out.iter().sum();
    if !(normalizer > 0.0) {
        return Err(MrfError::DegenerateNode {
            node,
            reason: "all incoming message weight is zero".into(),
        });
    }
    out.iter_mut().for_each(|v| *v /= normalizer);
    Ok((out, normalizer))
}

#[derive(Debug, Clone)]
struct GpNode {
    incoming: Vec<f64>,
    message_sum: Vec<f64>,
    normalizer: f64,
    failed: bool,
    floor_hits: usize,
}

/// Synchronous multiplicative-update state.
#[derive(Debug, Clone)]
pub struct GpState<'m> {
    mrf: &'m PairwiseMrf,
    beliefs: Beliefs,
    nodes: Vec<GpNode>,
    parallelism: Parallelism,
}

impl<'m> GpState<'m> {
    /// `init` must be strictly positive.
    pub fn new(mrf: &'m PairwiseMrf, init: Beliefs) -> Result<Self> {
        mrf.check_beliefs_shape(&init)?;
        if let Some(i) = init.nodes().iter().position(|p| p.iter().any(|&v| !(v > 0.0))) {
            return Err(MrfError::InvalidConfig(format!(
                "multiplicative updates need strictly positive beliefs (node {i})"
            )));
        }
        let nodes = (0..mrf.num_nodes())
            .map(|i| GpNode {
                incoming: vec![0.0; mrf.degree(i) * mrf.domain_size(i)],
                message_sum: vec![0.0; mrf.domain_size(i)],
                normalizer: f64::NAN,
                failed: false,
                floor_hits: 0,
            })
            .collect();
        Ok(GpState { mrf, beliefs: init, nodes, parallelism: Parallelism::Serial })
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn beliefs(&self) -> &Beliefs {
        &self.beliefs
    }

    /// Normalizers `C_i` from the last sweep.
    pub fn normalizers(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.normalizer).collect()
    }

    /// `Σ_j δ_j` per node from the last message phase.
    pub fn message_sums(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.message_sum.clone()).collect()
    }

    /// Entries raised to [`POSITIVITY_FLOOR`] so far.
    pub fn floor_hits(&self) -> usize {
        self.nodes.iter().map(|n| n.floor_hits).sum()
    }

    pub fn qp_objective(&self) -> f64 {
        self.mrf.qp_objective(&self.beliefs).expect("shape fixed at construction")
    }

    pub fn sweep(&mut self) -> Result<()> {
        let mrf = self.mrf;
        let beliefs = &self.beliefs;
        exec::for_each_mut(self.parallelism, &mut self.nodes, |i, node| {
            fill_incoming(mrf, beliefs, i, &mut node.incoming);
            sum_incoming(&node.incoming, mrf.domain_size(i), &mut node.message_sum);
        });
        exec::zip_for_each_mut(
            self.parallelism,
            &mut self.nodes,
            self.beliefs.nodes_mut(),
            |i, node, p| match gp_update(i, p, &node.message_sum) {
                Ok((mut next, c)) => {
                    for v in next.iter_mut().filter(|v| **v < POSITIVITY_FLOOR) {
                        *v = POSITIVITY_FLOOR;
                        node.floor_hits += 1;
                    }
                    *p = next;
                    node.normalizer = c;
                    node.failed = false;
                }
                Err(_) => node.failed = true,
            },
        );
        if let Some(i) = self.nodes.iter().position(|n| n.failed) {
            return Err(MrfError::DegenerateNode {
                node: i,
                reason: "all incoming message weight is zero".into(),
            });
        }
        Ok(())
    }
}

impl Sweeper for GpState<'_> {
    fn sweep(&mut self) -> Result<()> {
        GpState::sweep(self)
    }

    fn monitored(&self) -> f64 {
        GpState::qp_objective(self)
    }

    fn qp_objective(&self) -> f64 {
        GpState::qp_objective(self)
    }

    fn convex_objective(&self) -> Option<f64> {
        None
    }

    fn beliefs(&self) -> &Beliefs {
        &self.beliefs
    }

    fn inner_stats(&self) -> Option<&InnerLoopStats> {
        None
    }
}

/// Best of `config.restarts` runs of synchronous multiplicative updates.
pub fn solve_gp(mrf: &PairwiseMrf, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let (working, offset) = solver::prepare(mrf)?;
    if let Some(i) = (0..working.num_nodes()).find(|&i| working.degree(i) == 0) {
        return Err(MrfError::DegenerateNode { node: i, reason: "node has no incident edges".into() });
    }
    let inner = if config.restarts > 1 && config.parallelism.is_parallel() {
        Parallelism::Serial
    } else {
        config.parallelism
    };
    solver::best_of_restarts(SolverKind::GpEm, offset, config, |r| {
        let init = config.init.sample(working.domains(), &mut config.restart_rng(r));
        let state = GpState::new(&working, init)?.with_parallelism(inner);
        solver::run_to_convergence(state, mrf, config)
    })
}
