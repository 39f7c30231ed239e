//! Command-line front end for the OCA Potts toolkit.
//!
//! Exit codes: 0 on success, 2 for usage and input problems, 3 for
//! numerical failures (a non-finite objective).

mod cfg;
mod commands;

use clap::{Parser, Subcommand};

use cfg::{usage, CliResult, Resolver};

/// Ordered conditional approximations for Potts and hidden Potts
/// models on 2-D lattices: simulation, likelihood curves, coupling
/// estimation, posterior inference, and benchmarks.
#[derive(Parser, Debug)]
#[command(name = "potts-oca", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Draw one Potts field, optionally with Gaussian observations
    Simulate(commands::SimulateArgs),
    /// Windowed log-likelihood over a beta grid
    LoglikCurve(commands::LoglikCurveArgs),
    /// Maximum-likelihood coupling estimate from a label field
    Fit(commands::FitArgs),
    /// Repeated field draws with agreement-statistic summaries
    Sample(commands::SampleArgs),
    /// Posterior sampling for the hidden model or the mixture baseline
    Gibbs(commands::GibbsArgs),
    /// Hold out sites, refit, and score predictions by CRPS
    PredictHeldout(commands::PredictHeldoutArgs),
    /// Wall-clock scaling of likelihood evaluation
    Benchmark(commands::BenchmarkArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Simulate(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "simulate")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_simulate(a, &mut res))
        }
        Cmd::LoglikCurve(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "loglik-curve")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_loglik_curve(a, &mut res))
        }
        Cmd::Fit(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "fit")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_fit(a, &mut res))
        }
        Cmd::Sample(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "sample")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_sample(a, &mut res))
        }
        Cmd::Gibbs(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "gibbs")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_gibbs(a, &mut res))
        }
        Cmd::PredictHeldout(a) => {
            let mut res = Resolver::load(a.config.as_deref(), "predict-heldout")?;
            let threads = res.opt("threads", a.threads)?;
            with_pool(threads, move || commands::run_predict_heldout(a, &mut res))
        }
        Cmd::Benchmark(a) => {
            // benchmark manages its own pools, one per ladder point
            let mut res = Resolver::load(a.config.as_deref(), "benchmark")?;
            commands::run_benchmark(a, &mut res)
        }
    }
}

/// Runs the command inside a rayon pool of the requested size; without
/// --threads the default global pool is used.
fn with_pool<F>(threads: Option<usize>, f: F) -> CliResult<()>
where
    F: FnOnce() -> CliResult<()> + Send,
{
    match threads {
        None => f(),
        Some(0) => Err(usage("--threads must be positive")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
            pool.install(f)
        }
    }
}
