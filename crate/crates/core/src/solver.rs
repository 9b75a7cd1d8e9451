//! Shared solver configuration, restart driver and reports.

use std::fmt;
use std::str::FromStr;

use crate::cccp::{CccpState, InnerLoopStats, QpForm};
use crate::error::{MrfError, Result};
use crate::exec::{self, Parallelism};
use crate::model::{Assignment, Beliefs, ObjectiveOffset, PairwiseMrf};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// CCCP on the nonconvex QP.
    Cccp,
    /// CCCP on the convex QP relaxation.
    Convex,
    /// Multiplicative (GP / EM) updates.
    GpEm,
    MaxProduct,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Cccp,
        SolverKind::Convex,
        SolverKind::GpEm,
        SolverKind::MaxProduct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Cccp => "cccp",
            SolverKind::Convex => "convex",
            SolverKind::GpEm => "gpem",
            SolverKind::MaxProduct => "maxprod",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = MrfError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MrfError::InvalidConfig(format!("unknown solver {s:?}")))
    }
}

/// Starting beliefs for a restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform,
    /// Uniform scaled by `1 + ε·U[0,1)` per entry, then renormalized.
    UniformPerturbed { epsilon: f64 },
    /// Flat Dirichlet draw per node.
    RandomDirichlet,
}

impl Default for Init {
    fn default() -> Self {
        Init::UniformPerturbed { epsilon: 0.01 }
    }
}

impl Init {
    pub fn sample(&self, domains: &[usize], rng: &mut Rng) -> Beliefs {
        let nodes = domains
            .iter()
            .map(|&k| {
                let raw: Vec<f64> = match *self {
                    Init::Uniform => vec![1.0; k],
                    Init::UniformPerturbed { epsilon } => {
                        (0..k).map(|_| 1.0 + epsilon * rng::unit(rng)).collect()
                    }
                    Init::RandomDirichlet => (0..k).map(|_| -rng::unit_open(rng).ln()).collect(),
                };
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect();
        Beliefs::from_vecs_unchecked(nodes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
    pub restarts: usize,
    pub init: Init,
    pub seed: u64,
    /// Max-product damping; `None` picks 0 on forests and 0.5 otherwise.
    pub damping: Option<f64>,
    /// Max-product only: restarts after the first start from messages drawn
    /// from `U[0, message_noise)`.
    pub message_noise: f64,
    pub parallelism: Parallelism,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 500,
            tolerance: 1e-8,
            restarts: 10,
            init: Init::default(),
            seed: 0,
            damping: None,
            message_noise: 0.1,
            parallelism: Parallelism::default(),
        }
    }
}

impl SolverConfig {
    /// Defaults tuned per solver: 1000 sweeps and a single run for the
    /// convex relaxation, 1000 iterations for max-product.
    pub fn for_solver(kind: SolverKind) -> Self {
        let base = SolverConfig::default();
        match kind {
            SolverKind::Cccp | SolverKind::GpEm => base,
            SolverKind::Convex => SolverConfig { max_iterations: 1000, restarts: 1, ..base },
            SolverKind::MaxProduct => SolverConfig { max_iterations: 1000, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(MrfError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(MrfError::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(MrfError::InvalidConfig("tolerance must be nonnegative".into()));
        }
        if let Init::UniformPerturbed { epsilon } = self.init {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(MrfError::InvalidConfig("perturbation must be finite and nonnegative".into()));
            }
        }
        if let Some(d) = self.damping {
            if !(0.0..=1.0).contains(&d) {
                return Err(MrfError::InvalidConfig("damping must lie in [0, 1]".into()));
            }
        }
        if !(self.message_noise >= 0.0 && self.message_noise.is_finite()) {
            return Err(MrfError::InvalidConfig("message noise must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub(crate) fn restart_rng(&self, restart: usize) -> Rng {
        rng::seeded_stream(self.seed, restart as u64)
    }
}

/// One row of a solver trace. Iteration 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Bilinear QP objective on the solver's working (nonnegative, unary-free) model.
    pub qp_objective: f64,
    /// Decoded assignment scored on the original model.
    pub integral_objective: f64,
    pub convex_objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartSummary {
    pub restart: usize,
    pub integral_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver: SolverKind,
    pub assignment: Assignment,
    /// Score of `assignment` on the original model (unshifted, with unaries).
    pub integral_objective: f64,
    pub qp_objective: f64,
    pub convex_objective: Option<f64>,
    /// Trace of the winning restart.
    pub trace: Vec<TraceRecord>,
    pub beliefs: Beliefs,
    pub iterations: usize,
    pub converged: bool,
    pub winning_restart: usize,
    pub restarts: Vec<RestartSummary>,
    /// Inner-loop counters summed over every restart (empty for solvers
    /// without an inner loop).
    pub inner_stats: InnerLoopStats,
    pub offset: ObjectiveOffset,
}

impl SolveReport {
    /// Trace as CSV: `iter,qp_objective,integral_objective[,convex_objective]`.
    pub fn trace_csv(&self) -> String {
        let convex = self.trace.iter().any(|t| t.convex_objective.is_some());
        let mut out = String::from("iter,qp_objective,integral_objective");
        if convex {
            out.push_str(",convex_objective");
        }
        out.push('\n');
        for t in &self.trace {
            out.push_str(&format!("{},{},{}", t.iteration, t.qp_objective, t.integral_objective));
            if convex {
                out.push_str(&format!(",{}", t.convex_objective.unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}

/// Folds unaries into edges, then shifts tables to be nonnegative.
pub fn prepare(mrf: &PairwiseMrf) -> Result<(PairwiseMrf, ObjectiveOffset)> {
    Ok(mrf.absorb_unary()?.normalize_nonnegative())
}

/// Runs `kind` with `config` on `mrf`.
pub fn solve(kind: SolverKind, mrf: &PairwiseMrf, config: &SolverConfig) -> Result<SolveReport> {
    match kind {
        SolverKind::Cccp => crate::cccp::nonconvex::solve(mrf, config),
        SolverKind::Convex => crate::cccp::convex::solve_convex(mrf, config),
        SolverKind::GpEm => crate::gp_em::solve_gp(mrf, config),
        SolverKind::MaxProduct => crate::max_product::solve_mp(mrf, config),
    }
}

/// A solver advanced one synchronous sweep at a time.
pub(crate) trait Sweeper {
    fn sweep(&mut self) -> Result<()>;
    /// The objective the solver ascends monotonically.
    fn monitored(&self) -> f64;
    fn qp_objective(&self) -> f64;
    fn convex_objective(&self) -> Option<f64>;
    fn beliefs(&self) -> &Beliefs;
    fn inner_stats(&self) -> Option<&InnerLoopStats>;
}

impl Sweeper for CccpState<'_> {
    fn sweep(&mut self) -> Result<()> {
        self.outer_iteration()
    }

    fn monitored(&self) -> f64 {
        self.objective()
    }

    fn qp_objective(&self) -> f64 {
        CccpState::qp_objective(self)
    }

    fn convex_objective(&self) -> Option<f64> {
        match self.form() {
            QpForm::Convex => Some(CccpState::convex_objective(self)),
            QpForm::Nonconvex => None,
        }
    }

    fn beliefs(&self) -> &Beliefs {
        CccpState::beliefs(self)
    }

    fn inner_stats(&self) -> Option<&InnerLoopStats> {
        Some(self.stats())
    }
}

pub(crate) struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub beliefs: Beliefs,
    pub assignment: Assignment,
    pub integral_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stats: InnerLoopStats,
}

pub(crate) fn relative_change(previous: f64, current: f64) -> f64 {
    let delta = (current - previous).abs();
    if delta == 0.0 {
        0.0
    } else {
        delta / previous.abs().max(f64::MIN_POSITIVE)
    }
}

fn record<S: Sweeper>(solver: &S, original: &PairwiseMrf, iteration: usize) -> Result<TraceRecord> {
    let decoded = solver.beliefs().decode();
    Ok(TraceRecord {
        iteration,
        qp_objective: solver.qp_objective(),
        integral_objective: original.evaluate_assignment(&decoded)?,
        convex_objective: solver.convex_objective(),
    })
}

pub(crate) fn run_to_convergence<S: Sweeper>(
    mut solver: S,
    original: &PairwiseMrf,
    config: &SolverConfig,
) -> Result<RunOutcome> {
    let mut trace = vec![record(&solver, original, 0)?];
    let mut previous = solver.monitored();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        solver.sweep()?;
        iterations += 1;
        trace.push(record(&solver, original, iterations)?);
        let current = solver.monitored();
        let change = relative_change(previous, current);
        previous = current;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let assignment = solver.beliefs().decode();
    let integral_objective = original.evaluate_assignment(&assignment)?;
    Ok(RunOutcome {
        trace,
        beliefs: solver.beliefs().clone(),
        assignment,
        integral_objective,
        iterations,
        converged,
        stats: solver.inner_stats().cloned().unwrap_or_default(),
    })
}

/// Runs every restart and keeps the best decoded assignment. Ties keep the
/// earliest restart.
pub(crate) fn best_of_restarts<F>(
    kind: SolverKind,
    offset: ObjectiveOffset,
    config: &SolverConfig,
    run: F,
) -> Result<SolveReport>
where
    F: Fn(usize) -> Result<RunOutcome> + Send + Sync,
{
    config.validate()?;
    let outcomes = exec::map_indexed(config.parallelism, config.restarts, run)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut stats = InnerLoopStats::default();
    let mut summaries = Vec::with_capacity(outcomes.len());
    let mut best = 0;
    for (r, o) in outcomes.iter().enumerate() {
        stats.merge(&o.stats);
        summaries.push(RestartSummary {
            restart: r,
            integral_objective: o.integral_objective,
            iterations: o.iterations,
            converged: o.converged,
        });
        if o.integral_objective > outcomes[best].integral_objective {
            best = r;
        }
    }
    let winner = outcomes.into_iter().nth(best).expect("at least one restart");
    let last = *winner.trace.last().expect("trace starts at iteration 0");
    Ok(SolveReport {
        solver: kind,
        assignment: winner.assignment,
        integral_objective: winner.integral_objective,
        qp_objective: last.qp_objective,
        convex_objective: last.convex_objective,
        trace: winner.trace,
        beliefs: winner.beliefs,
        iterations: winner.iterations,
        converged: winner.converged,
        winning_restart: best,
        restarts: summaries,
        inner_stats: stats,
        offset,
    })
}

/// Restart driver for the two CCCP forms.
pub(crate) fn solve_cccp(
    kind: SolverKind,
    form: QpForm,
    mrf: &PairwiseMrf,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let (working, offset) = prepare(mrf)?;
    // Surface degeneracy once, before spawning restarts.
    CccpState::new(&working, form, Beliefs::uniform(working.domains()))?;
    let inner = if config.restarts > 1 && config.parallelism.is_parallel() {
        Parallelism::Serial
    } else {
        config.parallelism
    };
    best_of_restarts(kind, offset, config, |r| {
        let init = config.init.sample(working.domains(), &mut config.restart_rng(r));
        let state = CccpState::new(&working, form, init)?.with_parallelism(inner);
        run_to_convergence(state, mrf, config)
    })
}
