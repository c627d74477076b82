use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use myerson_lab::experiments::{experiment_examples, run_loss_experiment, LossConfig};
use myerson_lab::learner::{loss_bound, required_samples_iid};
use myerson_lab::online::{run_no_regret, run_no_regret_doubling, RegretTrace, TRACE_HEADER};
use myerson_lab::oracle::{exact_revenue, expected_revenue, optimal_plan, preferred_exact_method};
use myerson_lab::{
    compute_auction, engine, BidProfile, Environment, Error, IroningPlan, RevenueMethod,
    ValueDistribution,
};

const THREADS_VAR: &str = "MYERSON_LAB_THREADS";

#[derive(Parser)]
#[command(
    name = "myerson-lab",
    version,
    about = "Learn, run and audit empirical Myerson auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an ironing plan from a samples file (one value per line).
    Learn {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long = "h-max")]
        h_max: f64,
        /// Plan JSON destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a plan on one bid profile and print the outcome as JSON.
    Run {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Bids separated by commas or newlines, in bidder order.
        #[arg(long)]
        bids: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the optimal plan of a discrete distribution and its revenue.
    Oracle {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        env: PathBuf,
    },
    /// Expected revenue of a plan.
    Eval {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// enum, quad or mc.
        #[arg(long, default_value = "enum")]
        method: String,
        /// Monte Carlo trials.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(subcommand)]
    Experiment(Experiment),
    #[command(subcommand)]
    Calc(Calc),
}

#[derive(Subcommand)]
enum Experiment {
    /// Sample, learn and measure additive loss for each sample size.
    Loss {
        #[command(flatten)]
        problem: Problem,
        /// Comma-separated, strictly ascending sample sizes.
        #[arg(long = "m-list", value_delimiter = ',', required = true)]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// enum or quad; defaults to quad, or enum for matroids.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated auctions that relearn from past bids, one trace per seed.
    Regret {
        #[command(flatten)]
        problem: Problem,
        #[arg(long = "T", alias = "rounds")]
        rounds: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Number of runs; run i uses seed `seed + i`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restart with doubling horizons instead of fixing T in advance.
        #[arg(long)]
        doubling: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ironing-value and over-ironing demonstrations, as JSON.
    Examples {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Problem {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    env: PathBuf,
}

#[derive(Subcommand)]
enum Calc {
    /// Samples sufficient for additive loss `eps` with probability 1 − delta.
    Samples {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long = "h-max")]
        h_max: f64,
    },
    /// Additive loss bound 3εnH after m samples.
    Bound {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long = "h-max")]
        h_max: f64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn numbers(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .with_context(|| format!("{}: {s:?} is not a number", path.display()))
        })
        .collect()
}

fn read_samples(path: &Path, h_max: f64) -> anyhow::Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut samples = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().with_context(|| {
            format!(
                "{}:{}: {line:?} is not a number",
                path.display(),
                line_no + 1
            )
        })?;
        if !(0.0..=h_max).contains(&v) {
            bail!(
                "{}:{}: sample {v} outside [0, {h_max}]",
                path.display(),
                line_no + 1
            );
        }
        samples.push(v);
    }
    Ok(samples)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn exact_method(arg: Option<&str>, env: &Environment) -> anyhow::Result<RevenueMethod> {
    Ok(match arg {
        Some(s) => s.parse()?,
        None => preferred_exact_method(env),
    })
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Learn {
            samples,
            delta,
            h_max,
            out,
        } => {
            let samples = read_samples(&samples, h_max)?;
            let plan = compute_auction(&samples, delta, h_max)?;
            let mut out = output(out.as_deref())?;
            writeln!(out, "{}", plan.to_json())?;
            out.flush()?;
        }
        Command::Run {
            env,
            plan,
            bids,
            seed,
        } => {
            let env: Environment = read_json(&env)?;
            let plan: IroningPlan = read_json(&plan)?;
            let bids = BidProfile::new(numbers(&bids)?)?;
            let outcome = engine::run_auction(&env, &plan, &bids, seed)?;
            emit_json(None, &serde_json::to_value(outcome)?)?;
        }
        Command::Oracle { dist, env } => {
            let dist: ValueDistribution = read_json(&dist)?;
            let env: Environment = read_json(&env)?;
            let plan = optimal_plan(&dist)?;
            let method = preferred_exact_method(&env);
            let revenue = exact_revenue(&dist, &env, &plan, method)?;
            emit_json(
                None,
                &json!({ "plan": plan, "expected_revenue": revenue, "method": method }),
            )?;
        }
        Command::Eval {
            dist,
            env,
            plan,
            method,
            trials,
            seed,
        } => {
            let dist: ValueDistribution = read_json(&dist)?;
            let env: Environment = read_json(&env)?;
            let plan: IroningPlan = read_json(&plan)?;
            let report = expected_revenue(&dist, &env, &plan, method.parse()?, trials, seed)?;
            emit_json(None, &serde_json::to_value(report)?)?;
        }
        Command::Experiment(Experiment::Loss {
            problem,
            m_list,
            trials,
            delta,
            seed,
            method,
            out,
        }) => {
            let dist: ValueDistribution = read_json(&problem.dist)?;
            let env: Environment = read_json(&problem.env)?;
            let config = LossConfig {
                m_list,
                trials,
                delta,
                seed,
                method: exact_method(method.as_deref(), &env)?,
            };
            let mut out = output(out.as_deref())?;
            run_loss_experiment(&dist, &env, &config, &mut out)?;
            out.flush()?;
        }
        Command::Experiment(Experiment::Regret {
            problem,
            rounds,
            delta,
            seeds,
            seed,
            doubling,
            out,
        }) => {
            let dist: ValueDistribution = read_json(&problem.dist)?;
            let env: Environment = read_json(&problem.env)?;
            let run = if doubling {
                run_no_regret_doubling
            } else {
                run_no_regret
            };
            let traces: Vec<RegretTrace> = (0..seeds)
                .into_par_iter()
                .map(|i| run(&dist, &env, rounds, delta, seed + i))
                .collect::<myerson_lab::Result<_>>()?;
            let mut out = output(out.as_deref())?;
            writeln!(out, "{TRACE_HEADER}")?;
            for trace in &traces {
                trace.write_csv(&mut out)?;
            }
            out.flush()?;
        }
        Command::Experiment(Experiment::Examples { out }) => {
            emit_json(
                out.as_deref(),
                &serde_json::to_value(experiment_examples()?)?,
            )?;
        }
        Command::Calc(Calc::Samples {
            eps,
            delta,
            n,
            gamma,
            h_max,
        }) => {
            println!("{}", required_samples_iid(eps, delta, n, gamma, h_max)?);
        }
        Command::Calc(Calc::Bound { m, delta, n, h_max }) => {
            println!("{}", loss_bound(m, delta, n, h_max)?);
        }
    }
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

/// 3 for guard violations, 2 for everything else the user can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Guard(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
