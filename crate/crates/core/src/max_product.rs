//! Damped synchronous max-product, the quality baseline.
//!
//! Messages live in the log domain of `p(x) ∝ exp(Σ θ)`, so an edge's log
//! potential is `θ_ij` itself:
//!
//! ```text
//! m_{i→j}(x_j) = max_{x_i} [θ_ij(x_i, x_j) + Σ_{u∈Ne(i)\j} m_{u→i}(x_i)]
//! ```
//!
//! Each new message is mixed with the previous one (`damping` is the weight
//! of the old message) and shifted so its maximum is zero. Decoding is the
//! independent per-node argmax of the summed incoming messages.

use crate::cccp::InnerLoopStats;
use crate::error::Result;
use crate::exec::{self, Parallelism};
use crate::model::{argmax, Beliefs, PairwiseMrf};
use crate::rng::{self, Rng};
use crate::solver::{self, RunOutcome, SolveReport, SolverConfig, SolverKind, TraceRecord};

/// Damping used on graphs with cycles when none is configured.
pub const LOOPY_DAMPING: f64 = 0.5;

/// Incoming log-domain messages for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct MpMessages {
    /// `incoming[j]` holds one length-`k_j` block per incidence of `j`.
    incoming: Vec<Vec<f64>>,
}

impl MpMessages {
    pub fn zeros(mrf: &PairwiseMrf) -> Self {
        MpMessages {
            incoming: (0..mrf.num_nodes())
                .map(|j| vec![0.0; mrf.degree(j) * mrf.domain_size(j)])
                .collect(),
        }
    }

    /// Messages drawn from `U[0, scale)`, max-normalized.
    pub fn noisy(mrf: &PairwiseMrf, scale: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(mrf);
        for (j, block) in m.incoming.iter_mut().enumerate() {
            let k = mrf.domain_size(j);
            for msg in block.chunks_mut(k) {
                msg.iter_mut().for_each(|v| *v = rng::uniform(rng, 0.0, scale));
                max_normalize(msg);
            }
        }
        m
    }

    /// Message from the `t`-th neighbor of `j` into `j`.
    pub fn message(&self, mrf: &PairwiseMrf, j: usize, t: usize) -> &[f64] {
        let k = mrf.domain_size(j);
        &self.incoming[j][t * k..(t + 1) * k]
    }

    /// Message `from → to`, if the edge exists.
    pub fn between(&self, mrf: &PairwiseMrf, from: usize, to: usize) -> Option<&[f64]> {
        let t = mrf.neighbors(to).iter().position(|inc| inc.neighbor == from)?;
        Some(self.message(mrf, to, t))
    }

    /// Max-marginal scores: summed incoming messages per node.
    pub fn max_marginals(&self, mrf: &PairwiseMrf) -> Vec<Vec<f64>> {
        (0..mrf.num_nodes())
            .map(|j| {
                let k = mrf.domain_size(j);
                let mut total = vec![0.0; k];
                for msg in self.incoming[j].chunks(k) {
                    total.iter_mut().zip(msg).for_each(|(t, &m)| *t += m);
                }
                total
            })
            .collect()
    }
}

fn max_normalize(msg: &mut [f64]) {
    let max = msg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    msg.iter_mut().for_each(|v| *v -= max);
}

/// For each node `j` and incidence `t` (neighbor `i`), the position of
/// `j` in `i`'s adjacency list.
fn reverse_incidences(mrf: &PairwiseMrf) -> Vec<Vec<usize>> {
    (0..mrf.num_nodes())
        .map(|j| {
            mrf.neighbors(j)
                .iter()
                .map(|inc| {
                    mrf.neighbors(inc.neighbor)
                        .iter()
                        .position(|back| back.edge == inc.edge)
                        .expect("adjacency is symmetric")
                })
                .collect()
        })
        .collect()
}

/// One synchronous damped sweep. Returns the new messages and the largest
/// absolute change of any entry.
pub fn mp_iteration(
    mrf: &PairwiseMrf,
    messages: &MpMessages,
    damping: f64,
    parallelism: Parallelism,
) -> (MpMessages, f64) {
    let reverse = reverse_incidences(mrf);
    mp_iteration_with(mrf, messages, damping, parallelism, &reverse)
}

fn mp_iteration_with(
    mrf: &PairwiseMrf,
    messages: &MpMessages,
    damping: f64,
    parallelism: Parallelism,
    reverse: &[Vec<usize>],
) -> (MpMessages, f64) {
    let totals = messages.max_marginals(mrf);
    let mut next = messages.incoming.clone();
    let mut changes = vec![0.0f64; mrf.num_nodes()];
    exec::zip_for_each_mut(parallelism, &mut next, &mut changes, |j, block, change| {
        let kj = mrf.domain_size(j);
        for (t, inc) in mrf.neighbors(j).iter().enumerate() {
            let i = inc.neighbor;
            let ki = mrf.domain_size(i);
            let back = reverse[j][t];
            let excluded = &messages.incoming[i][back * ki..(back + 1) * ki];
            let cavity: Vec<f64> = totals[i].iter().zip(excluded).map(|(a, b)| a - b).collect();
            let view = mrf.incidence_view(inc);
            let old = &messages.incoming[j][t * kj..(t + 1) * kj];
            let msg = &mut block[t * kj..(t + 1) * kj];
            for (xj, m) in msg.iter_mut().enumerate() {
                let best = (0..ki)
                    .map(|xi| view.get(xj, xi) + cavity[xi])
                    .fold(f64::NEG_INFINITY, f64::max);
                *m = (1.0 - damping) * best + damping * old[xj];
            }
            max_normalize(msg);
            for (a, b) in msg.iter().zip(old) {
                *change = change.max((a - b).abs());
            }
        }
    });
    let change = changes.into_iter().fold(0.0, f64::max);
    (MpMessages { incoming: next }, change)
}

fn softmax_beliefs(scores: &[Vec<f64>]) -> Beliefs {
    Beliefs::from_vecs_unchecked(
        scores
            .iter()
            .map(|s| {
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect(),
    )
}

fn run_mp(
    original: &PairwiseMrf,
    working: &PairwiseMrf,
    config: &SolverConfig,
    damping: f64,
    init: MpMessages,
    parallelism: Parallelism,
) -> Result<RunOutcome> {
    let reverse = reverse_incidences(working);
    let decode = |m: &MpMessages| {
        crate::model::Assignment::new(m.max_marginals(working).iter().map(|s| argmax(s)).collect())
    };
    let mut messages = init;
    let first = decode(&messages);
    let mut trace = vec![TraceRecord {
        iteration: 0,
        qp_objective: working.evaluate_assignment(&first)?,
        integral_objective: original.evaluate_assignment(&first)?,
        convex_objective: None,
    }];
    let mut best: Option<(crate::model::Assignment, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let (next, change) = mp_iteration_with(working, &messages, damping, parallelism, &reverse);
        messages = next;
        iterations += 1;
        let a = decode(&messages);
        let value = original.evaluate_assignment(&a)?;
        trace.push(TraceRecord {
            iteration: iterations,
            qp_objective: working.evaluate_assignment(&a)?,
            integral_objective: value,
            convex_objective: None,
        });
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((a, value));
        }
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let (assignment, integral_objective) = best.expect("at least one iteration");
    Ok(RunOutcome {
        trace,
        beliefs: softmax_beliefs(&messages.max_marginals(working)),
        assignment,
        integral_objective,
        iterations,
        converged,
        stats: InnerLoopStats::default(),
    })
}

/// Best of `config.restarts` max-product runs. The first run starts from zero
/// messages, later ones from noisy messages. Each run reports the best
/// decoded assignment seen at any iteration.
pub fn solve_mp(mrf: &PairwiseMrf, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    let (working, offset) = solver::prepare(mrf)?;
    let damping = config
        .damping
        .unwrap_or(if working.is_forest() { 0.0 } else { LOOPY_DAMPING });
    let inner = if config.restarts > 1 && config.parallelism.is_parallel() {
        Parallelism::Serial
    } else {
        config.parallelism
    };
    solver::best_of_restarts(SolverKind::MaxProduct, offset, config, |r| {
        let init = if r == 0 {
            MpMessages::zeros(&working)
        } else {
            MpMessages::noisy(&working, config.message_noise, &mut config.restart_rng(r))
        };
        run_mp(mrf, &working, config, damping, init, inner)
    })
}
