use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adp_sched::config::{LambdaMode, LambdaSetting, Method};
use adp_sched::harness::{self, RunOutput};
use adp_sched::{CliError, CliResult, ConfigFile, Experiment};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Debug, Parser)]
#[command(name = "adp-sched", version, about = "Energy-efficient transmission scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment manifest (TOML).
    #[arg(long)]
    config: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-slot trace CSV (the multiplier search trace for `solve`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMethod {
    Stability,
    Qlearning,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan with known dynamics: values, policy and multiplier search.
    Solve(Common),
    /// Run the online post-decision learner.
    Learn(Common),
    /// Run the multi-queue priority learner.
    LearnPriority(Common),
    /// Run a comparison scheduler.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<BaselineMethod>,
        #[arg(long, value_enum)]
        lambda_mode: Option<LambdaMode>,
    },
    /// Run one simulation per value of the manifest's sweep parameter.
    Sweep(Common),
}

fn load(common: &Common) -> CliResult<Experiment> {
    ConfigFile::load(&common.config)?.resolve(common.seed)
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(harness::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn finish_run(exp: &Experiment, common: &Common, method: Method) -> CliResult<()> {
    let trace_path = common.trace.clone().or(exp.trace.clone());
    let RunOutput { metrics, trace, checkpoints, .. } = harness::run(exp, method, trace_path.is_some())?;
    info!("avg delay {} slots, avg power {}", metrics.avg_delay, metrics.avg_power);
    harness::write_metrics(output(common.out.as_deref())?, &metrics)?;
    if let Some(p) = trace_path {
        harness::write_trace(harness::create(&p)?, &trace)?;
    }
    if let Some(p) = &exp.checkpoint_out {
        harness::write_checkpoints(harness::create(p)?, &checkpoints)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve(common) => {
            let exp = load(&common)?;
            let plan = harness::solve(&exp)?;
            info!("solved at lambda {} in {} sweeps", plan.lambda, plan.solution.iterations);
            harness::write_solution(output(common.out.as_deref())?, &plan)?;
            if let (Some(p), Some(search)) = (&common.trace, &plan.search) {
                harness::write_search(harness::create(p)?, search)?;
            }
            Ok(())
        }
        Command::Learn(common) => finish_run(&load(&common)?, &common, Method::Learner),
        Command::LearnPriority(common) => finish_run(&load(&common)?, &common, Method::Priority),
        Command::Baseline { common, method, lambda_mode } => {
            let mut exp = load(&common)?;
            let method = match method {
                Some(BaselineMethod::Stability) => Method::Stability,
                Some(BaselineMethod::Qlearning) => Method::Qlearning,
                None => match exp.scheduler.method {
                    Some(m @ (Method::Stability | Method::Qlearning)) => m,
                    _ => {
                        return Err(CliError::Config {
                            field: "scheduler.method".into(),
                            reason: "baseline needs stability or qlearning".into(),
                        })
                    }
                },
            };
            if let Some(mode) = lambda_mode {
                exp.scheduler.lambda_mode = mode;
                if mode == LambdaMode::Fixed {
                    if let LambdaSetting::Budget { initial, .. } = exp.scheduler.lambda {
                        exp.scheduler.lambda = LambdaSetting::Fixed(initial);
                    }
                }
            }
            finish_run(&exp, &common, method)
        }
        Command::Sweep(common) => {
            let exp = load(&common)?;
            let Some(sweep) = exp.sweep.clone() else {
                return Err(CliError::Config { field: "sweep".into(), reason: "missing".into() });
            };
            let method = exp.scheduler.method.ok_or_else(|| CliError::Config {
                field: "scheduler.method".into(),
                reason: "missing".into(),
            })?;
            let rows = harness::sweep(&exp, method, sweep.parameter, &sweep.values)?;
            harness::write_sweep(output(common.out.as_deref())?, sweep.parameter, &rows)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADP_SCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
