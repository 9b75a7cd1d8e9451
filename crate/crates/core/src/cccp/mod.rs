//! Concave-convex procedure for the MAP QPs.
//!
//! Both QP forms split the (negated) objective as `u(p) − v(p)` with a
//! separable convex `u`, so one CCCP step decomposes into an independent
//! subproblem per node:
//!
//! ```text
//! minimize   Σ_x  denom(x)/2 · p(x)² − grad(x) · p(x)
//! subject to Σ_x p(x) = 1,  p ≥ 0
//! ```
//!
//! where `grad = ∇v` at the previous iterate and `denom = θ̂` (nonconvex
//! form) or `θ̂ + 2d` (convex relaxation). [`inner_loop`] solves it exactly by
//! growing a set of labels clamped to zero and re-solving the normalization
//! multiplier over the rest.
//!
//! A sweep is synchronous: every node's incoming δ messages are computed from
//! the same iterate, then every node solves its subproblem.

pub mod convex;
pub mod nonconvex;

use log::warn;

use crate::error::{MrfError, Result};
use crate::exec::{self, Parallelism};
use crate::messages::{fill_incoming, row_sums, sum_incoming, theta_hat};
use crate::model::{Beliefs, PairwiseMrf};

/// Domain size from which λ uses compensated summation.
pub const COMPENSATED_SUM_MIN_K: usize = 64;
/// λ may drop by at most this much between passes before it is flagged.
pub const LAMBDA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpForm {
    Nonconvex,
    Convex,
}

/// Result of one inner loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub beliefs: Vec<f64>,
    pub lambda: f64,
    /// Labels clamped to zero, in the order they were clamped.
    pub zeros: Vec<usize>,
    pub passes: usize,
    /// Multiplier computed in each pass.
    pub lambda_trace: Vec<f64>,
}

impl InnerSolution {
    /// Passes in which λ failed to increase (beyond [`LAMBDA_SLACK`]).
    pub fn lambda_violations(&self) -> usize {
        self.lambda_trace
            .windows(2)
            .filter(|w| w[1] - w[0] < -LAMBDA_SLACK)
            .count()
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Exact solution of the per-node CCCP subproblem.
///
/// `denominator` must be strictly positive. Each pass sets
/// `λ = (Σ_A grad/denom − 1) / Σ_A 1/denom` over the active labels `A`,
/// assigns `p = (grad − λ)/denom` on `A`, and clamps every negative label.
/// The active set shrinks every pass, so this stops after at most `k` passes.
pub fn inner_loop(gradient: &[f64], denominator: &[f64]) -> InnerSolution {
    let k = gradient.len();
    debug_assert_eq!(k, denominator.len());
    let compensated = k >= COMPENSATED_SUM_MIN_K;
    let mut active = vec![true; k];
    let mut p = vec![0.0; k];
    let mut zeros = Vec::new();
    let mut lambda_trace = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        let weighted = sum_active(&active, compensated, |x| gradient[x] / denominator[x]);
        let inverse = sum_active(&active, compensated, |x| 1.0 / denominator[x]);
        let lambda = (weighted - 1.0) / inverse;
        lambda_trace.push(lambda);

        let mut negatives = Vec::new();
        for x in 0..k {
            if active[x] {
                p[x] = (gradient[x] - lambda) / denominator[x];
                if p[x] < 0.0 {
                    negatives.push(x);
                }
            }
        }
        if negatives.is_empty() {
            break;
        }
        if negatives.len() == k - zeros.len() {
            // Rounding made every active label negative; keep the largest.
            let keep = *negatives
                .iter()
                .max_by(|&&a, &&b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
                .expect("nonempty");
            negatives.retain(|&x| x != keep);
        }
        for &x in &negatives {
            active[x] = false;
            p[x] = 0.0;
            zeros.push(x);
        }
        debug_assert!(passes <= k, "inner loop exceeded {k} passes");
    }
    let lambda = *lambda_trace.last().expect("at least one pass");
    let solution = InnerSolution { beliefs: p, lambda, zeros, passes, lambda_trace };
    if solution.lambda_violations() > 0 {
        warn!(
            "multiplier did not increase across inner passes: gradient={gradient:?} denominator={denominator:?} trace={:?}",
            solution.lambda_trace
        );
    }
    solution
}

fn sum_active(active: &[bool], compensated: bool, f: impl Fn(usize) -> f64) -> f64 {
    let terms = (0..active.len()).filter(|&x| active[x]).map(f);
    if compensated {
        compensated_sum(terms)
    } else {
        terms.sum()
    }
}

/// KKT residuals of a subproblem solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `max |denom·p − grad + λ|` over labels with `p > 0`.
    pub stationarity: f64,
    /// `min (λ − grad)` over clamped labels: the recovered inequality
    /// multipliers. `+∞` when nothing is clamped.
    pub min_multiplier: f64,
}

pub fn kkt_residual(
    gradient: &[f64],
    denominator: &[f64],
    beliefs: &[f64],
    lambda: f64,
    zeros: &[usize],
) -> KktResidual {
    let mut stationarity = 0.0f64;
    for x in 0..beliefs.len() {
        if beliefs[x] > 0.0 {
            let r = denominator[x] * beliefs[x] - gradient[x] + lambda;
            stationarity = stationarity.max(r.abs());
        }
    }
    let min_multiplier = zeros
        .iter()
        .map(|&x| lambda - gradient[x])
        .fold(f64::INFINITY, f64::min);
    KktResidual { stationarity, min_multiplier }
}

/// Inner-loop counters accumulated over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InnerLoopStats {
    pub calls: u64,
    pub max_passes: usize,
    /// `pass_histogram[r]` counts inner loops that took `r` passes.
    pub pass_histogram: Vec<u64>,
    /// Inner loops that took more passes than the node has labels.
    pub pass_bound_violations: u64,
    pub lambda_violations: u64,
}

impl InnerLoopStats {
    fn record(&mut self, passes: usize, k: usize, lambda_violations: usize) {
        self.calls += 1;
        self.max_passes = self.max_passes.max(passes);
        if self.pass_histogram.len() <= passes {
            self.pass_histogram.resize(passes + 1, 0);
        }
        self.pass_histogram[passes] += 1;
        if passes > k {
            self.pass_bound_violations += 1;
        }
        self.lambda_violations += lambda_violations as u64;
    }

    pub fn merge(&mut self, other: &InnerLoopStats) {
        self.calls += other.calls;
        self.max_passes = self.max_passes.max(other.max_passes);
        if self.pass_histogram.len() < other.pass_histogram.len() {
            self.pass_histogram.resize(other.pass_histogram.len(), 0);
        }
        for (a, b) in self.pass_histogram.iter_mut().zip(&other.pass_histogram) {
            *a += b;
        }
        self.pass_bound_violations += other.pass_bound_violations;
        self.lambda_violations += other.lambda_violations;
    }
}

/// Per-node solver state.
#[derive(Debug, Clone)]
pub struct NodeWorkspace {
    theta_hat: Vec<f64>,
    diagonal: Vec<f64>,
    denominator: Vec<f64>,
    incoming: Vec<f64>,
    messages_ready: bool,
    gradient: Vec<f64>,
    lambda: f64,
    zeros: Vec<usize>,
    passes: usize,
    lambda_violations: usize,
}

impl NodeWorkspace {
    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    /// Diagonal terms `d_i`; all zero for the nonconvex form.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Subproblem denominator: `θ̂` or `θ̂ + 2d`.
    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Incoming δ messages, one length-`k` block per neighbor.
    pub fn incoming(&self) -> &[f64] {
        &self.incoming
    }

    /// Gradient used by the most recent node update.
    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }

    pub fn last_passes(&self) -> usize {
        self.passes
    }

    /// `∇v(x) = p(x)·θ̂(x) + Σ_j δ_j(x) + d(x)` at the iterate the messages came from.
    pub fn gradient_v(&self, p: &[f64]) -> Result<Vec<f64>> {
        if !self.messages_ready {
            return Err(MrfError::Protocol("gradient requested before messages arrived".into()));
        }
        let k = self.theta_hat.len();
        if p.len() != k {
            return Err(MrfError::Shape(format!("beliefs have {} entries, expected {k}", p.len())));
        }
        let mut g = vec![0.0; k];
        sum_incoming(&self.incoming, k, &mut g);
        for x in 0..k {
            g[x] += p[x] * self.theta_hat[x] + self.diagonal[x];
        }
        Ok(g)
    }
}

/// Synchronous CCCP iteration state for either QP form.
#[derive(Debug, Clone)]
pub struct CccpState<'m> {
    mrf: &'m PairwiseMrf,
    form: QpForm,
    beliefs: Beliefs,
    workspaces: Vec<NodeWorkspace>,
    stats: InnerLoopStats,
    parallelism: Parallelism,
    sweeps: usize,
}

impl<'m> CccpState<'m> {
    /// Precomputes `θ̂` (and `d` for the convex form) and checks that every
    /// subproblem denominator is strictly positive.
    pub fn new(mrf: &'m PairwiseMrf, form: QpForm, init: Beliefs) -> Result<Self> {
        mrf.check_beliefs_shape(&init)?;
        let mut workspaces = Vec::with_capacity(mrf.num_nodes());
        for i in 0..mrf.num_nodes() {
            let k = mrf.domain_size(i);
            if mrf.degree(i) == 0 {
                return Err(MrfError::DegenerateNode {
                    node: i,
                    reason: "node has no incident edges".into(),
                });
            }
            let theta_hat = theta_hat(mrf, i);
            let diagonal = match form {
                QpForm::Nonconvex => vec![0.0; k],
                QpForm::Convex => row_sums(mrf, i, |v| v.abs() / 2.0),
            };
            let denominator: Vec<f64> = theta_hat
                .iter()
                .zip(&diagonal)
                .map(|(&t, &d)| t + 2.0 * d)
                .collect();
            if let Some(x) = denominator.iter().position(|&v| !(v > 0.0)) {
                return Err(MrfError::DegenerateNode {
                    node: i,
                    reason: format!("label {x} has zero total incident potential"),
                });
            }
            workspaces.push(NodeWorkspace {
                theta_hat,
                diagonal,
                denominator,
                incoming: vec![0.0; mrf.degree(i) * k],
                messages_ready: false,
                gradient: vec![0.0; k],
                lambda: f64::NAN,
                zeros: Vec::new(),
                passes: 0,
                lambda_violations: 0,
            });
        }
        Ok(CccpState {
            mrf,
            form,
            beliefs: init,
            workspaces,
            stats: InnerLoopStats::default(),
            parallelism: Parallelism::Serial,
            sweeps: 0,
        })
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    /// Message phase: every node gathers δ from the current iterate.
    pub fn send_messages(&mut self) {
        let mrf = self.mrf;
        let beliefs = &self.beliefs;
        exec::for_each_mut(self.parallelism, &mut self.workspaces, |i, ws| {
            fill_incoming(mrf, beliefs, i, &mut ws.incoming);
            ws.messages_ready = true;
        });
    }

    /// Node phase: every node solves its subproblem from the delivered messages.
    pub fn update_nodes(&mut self) -> Result<()> {
        if let Some(i) = self.workspaces.iter().position(|ws| !ws.messages_ready) {
            return Err(MrfError::Protocol(format!("node {i} has no messages for this sweep")));
        }
        exec::zip_for_each_mut(
            self.parallelism,
            &mut self.workspaces,
            self.beliefs.nodes_mut(),
            |_, ws, p| {
                let gradient = ws.gradient_v(p).expect("messages checked above");
                let solution = inner_loop(&gradient, &ws.denominator);
                ws.lambda_violations = solution.lambda_violations();
                ws.passes = solution.passes;
                ws.lambda = solution.lambda;
                ws.zeros = solution.zeros;
                ws.gradient = gradient;
                *p = solution.beliefs;
                ws.messages_ready = false;
            },
        );
        for ws in &self.workspaces {
            self.stats.record(ws.passes, ws.theta_hat.len(), ws.lambda_violations);
        }
        self.sweeps += 1;
        Ok(())
    }

    /// One synchronous CCCP step.
    pub fn outer_iteration(&mut self) -> Result<()> {
        self.send_messages();
        self.update_nodes()
    }

    pub fn form(&self) -> QpForm {
        self.form
    }

    pub fn mrf(&self) -> &'m PairwiseMrf {
        self.mrf
    }

    pub fn beliefs(&self) -> &Beliefs {
        &self.beliefs
    }

    pub fn into_beliefs(self) -> Beliefs {
        self.beliefs
    }

    pub fn workspaces(&self) -> &[NodeWorkspace] {
        &self.workspaces
    }

    pub fn stats(&self) -> &InnerLoopStats {
        &self.stats
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn qp_objective(&self) -> f64 {
        self.mrf.qp_objective(&self.beliefs).expect("shape fixed at setup")
    }

    /// The objective this form ascends: the QP itself or its convex relaxation.
    pub fn objective(&self) -> f64 {
        match self.form {
            QpForm::Nonconvex => self.qp_objective(),
            QpForm::Convex => self.convex_objective(),
        }
    }

    pub fn convex_objective(&self) -> f64 {
        let diag = self.workspaces.iter().map(|ws| ws.diagonal.as_slice());
        convex::relaxed_objective(self.mrf, &self.beliefs, diag)
    }

    /// KKT residuals of the last node update, one per node.
    pub fn kkt_residuals(&self) -> Vec<KktResidual> {
        self.workspaces
            .iter()
            .zip(self.beliefs.nodes())
            .map(|(ws, p)| kkt_residual(&ws.gradient, &ws.denominator, p, ws.lambda, &ws.zeros))
            .collect()
    }
}
