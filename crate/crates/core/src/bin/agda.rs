use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anchored_gda::harness::{
    self, config::ChecksConfig, ExperimentConfig, Outcome, ProblemConfig, SweepConfig, Z0Config,
};
use anchored_gda::Error;

#[derive(Parser)]
#[command(name = "agda", version, about = "Anchored gradient descent ascent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// TOML experiment config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a trace against the guarantees of its schedule.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a grid of schedule parameters and summarize each cell.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// TOML config with an optional [sweep] table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Values of T to sweep.
        #[arg(long = "sweep-steps", value_delimiter = ',')]
        sweep_steps: Vec<usize>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        /// Summary CSV path; stdout when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run several schedules on one problem and align their gradient norms.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// One config per compared run (repeatable).
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
    },
    /// Scan the contraction and error coefficients of anchored-new schedules.
    ScheduleAudit {
        #[arg(long, default_value = "anchored-new")]
        schedule: String,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        t_max: usize,
        /// Print per-t margins (default: only when t_max ≤ 100).
        #[arg(long, overrides_with = "no_per_t")]
        per_t: bool,
        #[arg(long)]
        no_per_t: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// Problem descriptor, e.g. bilinear:n=1,m=1,a=1.
    #[arg(long)]
    problem: Option<String>,
    /// Schedule string, e.g. anchored-new:gamma=2; compare accepts several.
    #[arg(long)]
    schedule: Vec<String>,
    /// ones, e1, saddle, or comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    /// "all" or a comma-separated list of check names.
    #[arg(long)]
    checks: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

impl ExperimentArgs {
    fn overrides(mut self) -> Result<ExperimentConfig, Error> {
        if self.schedule.len() > 1 {
            return Err(Error::Usage("--schedule given more than once".into()));
        }
        Ok(ExperimentConfig {
            problem: self.problem.map(ProblemConfig::Descriptor),
            schedule: self.schedule.pop(),
            z0: self.z0.map(Z0Config::Named),
            steps: self.steps,
            record_every: self.record_every,
            checks: self.checks.map(ChecksConfig::Named),
            seed: self.seed,
            out: self.out,
            report: self.report,
        })
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::from_toml(&read(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn dispatch(command: Command) -> Result<Outcome, Error> {
    Ok(match command {
        Command::Run { exp, config } => {
            harness::cmd_run(&load(config.as_deref())?.merged(exp.overrides()?))
        }
        Command::Verify { trace, exp, config } => {
            harness::cmd_verify(&trace, &load(config.as_deref())?.merged(exp.overrides()?))
        }
        Command::Sweep {
            exp,
            config,
            gamma,
            p,
            sweep_steps,
            parallelism,
            cap,
            summary,
        } => {
            let mut sweep = match &config {
                Some(path) => SweepConfig::from_toml(&read(path)?)?,
                None => SweepConfig::default(),
            };
            sweep.base = sweep.base.merged(exp.overrides()?);
            let axes = &mut sweep.sweep;
            if !gamma.is_empty() {
                axes.gamma = gamma;
            }
            if !p.is_empty() {
                axes.p = p;
            }
            if !sweep_steps.is_empty() {
                axes.steps = sweep_steps;
            }
            axes.parallelism = parallelism.or(axes.parallelism);
            axes.cap = cap.or(axes.cap);
            harness::cmd_sweep(&sweep, summary.as_deref())
        }
        Command::Compare { mut exp, configs } => {
            let out = exp.out.take();
            let schedules = std::mem::take(&mut exp.schedule);
            let shared = ExperimentConfig {
                report: None,
                ..exp.overrides()?
            };
            let mut list = Vec::new();
            for path in &configs {
                list.push(load(Some(path))?.merged(shared.clone()));
            }
            let base = list.first().cloned().unwrap_or_else(|| shared.clone());
            for s in schedules {
                list.push(ExperimentConfig {
                    schedule: Some(s),
                    ..base.clone()
                });
            }
            harness::cmd_compare(&list, out.as_deref())
        }
        Command::ScheduleAudit {
            schedule,
            gamma,
            t_max,
            per_t,
            no_per_t,
            report,
        } => {
            let per_t = match (per_t, no_per_t) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            harness::cmd_schedule_audit(&schedule, &gamma, t_max, per_t, report.as_deref())
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 2 } else { 0 };
            return ExitCode::from(code);
        }
    };
    let code = match dispatch(cli.command) {
        Ok(outcome) => outcome.finish(),
        Err(err) => {
            eprintln!("error: {err}");
            harness::ExitStatus::of(&err).code()
        }
    };
    ExitCode::from(code as u8)
}
