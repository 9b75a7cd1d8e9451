//! Ising benchmark harness: best-of-restarts quality and wall time per
//! solver, grid size and coupling bound.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{MrfError, Result};
use crate::exec::{self, Parallelism};
use crate::generators::{gen_ising_grid, IsingSpec};
use crate::rng::derive_seed;
use crate::solver::{solve, SolverConfig, SolverKind};

pub const SUMMARY_HEADER: &str = "solver,size,beta,mean_quality,mean_time_s,converged_frac";
pub const GAINS_HEADER: &str = "solver_a,solver_b,size,beta,gain";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    /// Side lengths of square grids.
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub instances: usize,
    pub restarts: usize,
    pub solvers: Vec<SolverKind>,
    pub seed: u64,
    /// Overrides every solver's iteration cap.
    pub max_iterations: Option<usize>,
    /// Run instances of a cell concurrently. Solvers stay single-threaded,
    /// but timings are then less comparable.
    pub parallel_instances: bool,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            sizes: vec![10],
            betas: vec![0.5, 1.0, 2.0],
            instances: 10,
            restarts: 10,
            solvers: vec![SolverKind::Cccp, SolverKind::MaxProduct],
            seed: 0,
            max_iterations: None,
            parallel_instances: false,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            (self.sizes.is_empty(), "sizes"),
            (self.betas.is_empty(), "betas"),
            (self.solvers.is_empty(), "solvers"),
        ];
        if let Some((_, what)) = empty.iter().find(|(e, _)| *e) {
            return Err(MrfError::InvalidConfig(format!("benchmark plan has no {what}")));
        }
        if self.instances == 0 || self.restarts == 0 || self.sizes.contains(&0) {
            return Err(MrfError::InvalidConfig("benchmark counts must be at least 1".into()));
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(MrfError::InvalidConfig(format!("beta must be positive, got {b}")));
        }
        if self.max_iterations == Some(0) {
            return Err(MrfError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed of the instance generator for one cell entry.
    pub fn instance_seed(&self, size: usize, beta: f64, instance: usize) -> u64 {
        derive_seed(self.seed, &[size as u64, beta.to_bits(), instance as u64, 0])
    }

    /// Restart seed shared by every solver on one instance.
    pub fn restart_seed(&self, size: usize, beta: f64, instance: usize) -> u64 {
        derive_seed(self.seed, &[size as u64, beta.to_bits(), instance as u64, 1])
    }

    pub fn solver_config(&self, kind: SolverKind, seed: u64) -> SolverConfig {
        let base = SolverConfig::for_solver(kind);
        SolverConfig {
            restarts: self.restarts,
            seed,
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            parallelism: Parallelism::Serial,
            ..base
        }
    }
}

/// One solver on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub solver: SolverKind,
    pub size: usize,
    pub beta: f64,
    pub instance: usize,
    /// Best decoded objective over restarts, on the original model.
    pub quality: f64,
    pub time_s: f64,
    pub restarts: usize,
    pub converged_restarts: usize,
    /// Outer iterations of every restart.
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub solver: SolverKind,
    pub size: usize,
    pub beta: f64,
    pub mean_quality: f64,
    pub mean_time_s: f64,
    pub converged_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub solver_a: SolverKind,
    pub solver_b: SolverKind,
    pub size: usize,
    pub beta: f64,
    /// `(mean Q_A − mean Q_B) / mean Q_B` over the cell's instances.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub instances: Vec<InstanceResult>,
    pub summary: Vec<CellSummary>,
    pub gains: Vec<GainRow>,
}

impl BenchResult {
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for c in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.solver, c.size, c.beta, c.mean_quality, c.mean_time_s, c.converged_frac
            );
        }
        out
    }

    pub fn gains_csv(&self) -> String {
        let mut out = format!("{GAINS_HEADER}\n");
        for g in &self.gains {
            let _ = writeln!(out, "{},{},{},{},{}", g.solver_a, g.solver_b, g.size, g.beta, g.gain);
        }
        out
    }

    pub fn cell(&self, solver: SolverKind, size: usize, beta: f64) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.solver == solver && c.size == size && c.beta == beta)
    }

    pub fn gain(&self, a: SolverKind, b: SolverKind, size: usize, beta: f64) -> Option<f64> {
        self.gains
            .iter()
            .find(|g| g.solver_a == a && g.solver_b == b && g.size == size && g.beta == beta)
            .map(|g| g.gain)
    }
}

fn run_instance(plan: &BenchPlan, size: usize, beta: f64, instance: usize) -> Result<Vec<InstanceResult>> {
    let mrf = gen_ising_grid(&IsingSpec::new(size, size, beta, plan.instance_seed(size, beta, instance)))?;
    let seed = plan.restart_seed(size, beta, instance);
    plan.solvers
        .iter()
        .map(|&kind| {
            let config = plan.solver_config(kind, seed);
            let start = Instant::now();
            let report = solve(kind, &mrf, &config)?;
            let time_s = start.elapsed().as_secs_f64();
            Ok(InstanceResult {
                solver: kind,
                size,
                beta,
                instance,
                quality: report.integral_objective,
                time_s,
                restarts: report.restarts.len(),
                converged_restarts: report.restarts.iter().filter(|r| r.converged).count(),
                iterations: report.restarts.iter().map(|r| r.iterations).collect(),
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Runs every (size, β) cell. Instances and restart seeds depend only on the
/// plan, so every solver sees the same instances and seeds.
pub fn run_benchmark(plan: &BenchPlan) -> Result<BenchResult> {
    plan.validate()?;
    let mode = if plan.parallel_instances { Parallelism::Parallel } else { Parallelism::Serial };
    let mut instances = Vec::new();
    let mut summary = Vec::new();
    let mut gains = Vec::new();
    for &size in &plan.sizes {
        for &beta in &plan.betas {
            let cell: Vec<InstanceResult> = exec::map_indexed(mode, plan.instances, |t| {
                run_instance(plan, size, beta, t)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
            let of = |kind: SolverKind| cell.iter().filter(move |r| r.solver == kind);
            for &kind in &plan.solvers {
                let runs: usize = of(kind).map(|r| r.restarts).sum();
                let converged: usize = of(kind).map(|r| r.converged_restarts).sum();
                summary.push(CellSummary {
                    solver: kind,
                    size,
                    beta,
                    mean_quality: mean(of(kind).map(|r| r.quality)),
                    mean_time_s: mean(of(kind).map(|r| r.time_s)),
                    converged_frac: converged as f64 / runs as f64,
                });
            }
            for (a_pos, &a) in plan.solvers.iter().enumerate() {
                for &b in &plan.solvers[a_pos + 1..] {
                    let qa = mean(of(a).map(|r| r.quality));
                    let qb = mean(of(b).map(|r| r.quality));
                    gains.push(GainRow { solver_a: a, solver_b: b, size, beta, gain: (qa - qb) / qb });
                }
            }
            instances.extend(cell);
        }
    }
    Ok(BenchResult { instances, summary, gains })
}
