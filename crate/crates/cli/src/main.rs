use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mrfqp::bench::{run_benchmark, BenchPlan};
use mrfqp::generators::{gen_ising_grid, gen_random_mrf, IsingSpec, NODE_POTENTIAL_BOUND};
use mrfqp::io::{parse_uai, write_uai, ParseOptions};
use mrfqp::{solve, MrfError, ParseError, SolverConfig, SolverKind};

#[derive(Parser)]
#[command(name = "mrfqp", version, about = "MAP estimation in pairwise MRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a UAI MARKOV model.
    Solve(SolveArgs),
    /// Write a synthetic model as UAI.
    #[command(subcommand)]
    Generate(Generate),
    /// Run the Ising benchmark and write summary and gain CSVs.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "cccp")]
    solver: SolverKind,
    /// Defaults to the solver's own setting.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the winning run's trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Read tables as probabilities and take entrywise logs.
    #[arg(long)]
    log_transform: bool,
}

#[derive(Subcommand)]
enum Generate {
    /// Binary grid with couplings from U[-beta, beta].
    Ising {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = NODE_POTENTIAL_BOUND)]
        node_bound: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Connected random graph with tables from U[0, scale).
    Random {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        labels: usize,
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Grid side lengths.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, value_delimiter = ',', default_value = "cccp,maxprod")]
    solvers: Vec<SolverKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Run instances concurrently (timings become less comparable).
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    gains: Option<PathBuf>,
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_solve(args: &SolveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let mrf = parse_uai(&text, ParseOptions { log_transform: args.log_transform })
        .with_context(|| format!("parsing {}", args.input.display()))?;
    let base = SolverConfig::for_solver(args.solver);
    let config = SolverConfig {
        restarts: args.restarts.unwrap_or(base.restarts),
        max_iterations: args.max_iters.unwrap_or(base.max_iterations),
        tolerance: args.tol.unwrap_or(base.tolerance),
        seed: args.seed,
        ..base
    };
    let start = Instant::now();
    let report = solve(args.solver, &mrf, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    let labels: Vec<String> = report.assignment.labels().iter().map(|l| l.to_string()).collect();
    println!("solver: {}", report.solver);
    println!("assignment: {}", labels.join(" "));
    println!("objective: {}", report.integral_objective);
    println!("iterations: {}", report.iterations);
    println!("converged: {}", report.converged);
    println!("time_s: {elapsed}");
    if let Some(path) = &args.trace {
        fs::write(path, report.trace_csv()).with_context(|| format!("writing {}", path.display()))?;
        info!("trace written to {}", path.display());
    }
    Ok(())
}

fn run_generate(cmd: &Generate) -> Result<()> {
    let (mrf, output) = match cmd {
        Generate::Ising { rows, cols, beta, node_bound, seed, output } => {
            let spec = IsingSpec { rows: *rows, cols: *cols, beta: *beta, node_potential_bound: *node_bound, seed: *seed };
            (gen_ising_grid(&spec)?, output)
        }
        Generate::Random { nodes, labels, density, scale, seed, output } => {
            (gen_random_mrf(*nodes, *labels, *density, *scale, *seed)?, output)
        }
    };
    info!("generated {} variables, {} edges", mrf.num_nodes(), mrf.num_edges());
    write_or_print(output.as_ref(), &write_uai(&mrf))
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let plan = BenchPlan {
        sizes: args.sizes.clone(),
        betas: args.betas.clone(),
        instances: args.instances,
        restarts: args.restarts,
        solvers: args.solvers.clone(),
        seed: args.seed,
        max_iterations: args.max_iters,
        parallel_instances: args.parallel,
    };
    let start = Instant::now();
    let result = run_benchmark(&plan)?;
    info!("benchmark finished in {:.1}s", start.elapsed().as_secs_f64());
    write_or_print(args.summary.as_ref(), &result.summary_csv())?;
    match &args.gains {
        Some(p) => write_or_print(Some(p), &result.gains_csv()),
        None if args.summary.is_none() => {
            println!();
            write_or_print(None, &result.gains_csv())
        }
        None => Ok(()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ParseError>().is_some() {
        2
    } else if err.downcast_ref::<MrfError>().is_some_and(MrfError::is_degenerate) {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Generate(cmd) => run_generate(cmd),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
