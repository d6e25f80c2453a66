use std::path::PathBuf;
use std::process::ExitCode;

use bdt_cli::error::{CliError, Result};
use bdt_cli::output::{emit, Metadata};
use bdt_cli::report::{compute, run_simulation};
use bdt_cli::source::{spec_from_args, ModelSource};
use bdt_cli::sweep::{rows_to_csv, rows_to_json, rows_to_text, run_sweep, Grid, Outputs, SweepSpec};
use bdt_cli::verify::{results_to_text, run_verify, VerifyOptions};
use bdt_core::dispersion::Truncation;
use bdt_core::sim::{InitialState, SimConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Asymptotic index of dispersion of thinned counts in birth-death chains.
#[derive(Parser)]
#[command(name = "bdt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed form and oracle values for one model.
    Compute {
        #[command(flatten)]
        model: ModelArgs,
        /// Also print the per-state terms R_k.
        #[arg(long)]
        breakdown: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a named model over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter to vary.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Space grid points logarithmically.
        #[arg(long)]
        log: bool,
        /// Comma list from closed_form, oracle, simulation, breakdown.
        #[arg(long, default_value = "closed_form,oracle")]
        outputs: String,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo estimate for one model.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the cross-validation suite; exits 1 if any check fails.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random models per randomized check.
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Named model (mmsk_reneging, billabong, mm1k, mm1_busy_cycle, mms_output, mm1_two_sided).
    #[arg(long, conflicts_with = "file")]
    model: Option<String>,
    /// JSON model file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Model parameters as key=value.
    #[arg(long = "param", num_args = 1.., action = clap::ArgAction::Append)]
    params: Vec<String>,
    /// Truncation tolerance for infinite models.
    #[arg(long, default_value_t = 1e-10)]
    tail_tol: f64,
    /// State cap for infinite models.
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
}

impl ModelArgs {
    fn source(&self) -> Result<ModelSource> {
        ModelSource::from_args(self.model.as_deref(), self.file.as_ref(), &self.params)
    }

    fn truncation(&self) -> Result<Truncation> {
        if !(self.tail_tol > 0.0 && self.tail_tol.is_finite()) || self.max_states < 2 {
            return Err(CliError::Usage(
                "--tail-tol must be positive and --max-states at least 2".into(),
            ));
        }
        Ok(Truncation {
            tail_tol: self.tail_tol,
            max_states: self.max_states,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write to this file (atomically) with a .meta.json sidecar.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Regen,
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum Start {
    Zero,
    Stationary,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "regen")]
    method: Method,
    /// Regeneration cycles.
    #[arg(long, default_value_t = 100_000)]
    cycles: u64,
    /// Simulated time for batch means.
    #[arg(long, default_value_t = 1e5)]
    horizon: f64,
    #[arg(long, default_value_t = 50)]
    batches: usize,
    #[arg(long, value_enum, default_value = "zero")]
    start: Start,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        let config = match self.method {
            Method::Regen => SimConfig::regenerative(self.seed, self.cycles),
            Method::Batch => SimConfig::batch_means(self.seed, self.horizon, self.batches),
        };
        config.with_initial_state(match self.start {
            Start::Zero => InitialState::Zero,
            Start::Stationary => InitialState::Stationary,
        })
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

/// Returns the exit code on success.
fn run(command: Command) -> Result<u8> {
    let pool = bdt_cli::thread_pool()?;
    pool.install(|| match command {
        Command::Compute { model, breakdown, out } => {
            let (built, spec) = model.source()?.load(model.truncation()?)?;
            let report = compute(&built, spec.as_ref(), breakdown)?;
            let text = match out.format.unwrap_or(Format::Text) {
                Format::Text => report.to_text(),
                Format::Json => json(&report),
                Format::Csv => report.to_csv(),
            };
            emit(out.out.as_deref(), &text, &Metadata::new("compute", &report))?;
            Ok(0)
        }
        Command::Sweep {
            model,
            vary,
            from,
            to,
            points,
            log,
            outputs,
            sim,
            out,
        } => {
            if model.file.is_some() {
                return Err(CliError::Usage("sweep needs a named model (--model)".into()));
            }
            let name = model
                .model
                .as_deref()
                .ok_or_else(|| CliError::Usage("sweep needs --model".into()))?;
            let grid = if log {
                Grid::log(from, to, points)
            } else {
                Grid::linear(from, to, points)
            };
            let mut spec = SweepSpec::new(spec_from_args(name, &model.params)?, &vary, grid);
            spec.outputs = Outputs::parse(&outputs)?;
            spec.truncation = model.truncation()?;
            if spec.outputs.simulation {
                spec.sim = Some(sim.config());
            }
            let rows = run_sweep(&spec)?;
            let text = match out.format.unwrap_or(Format::Csv) {
                Format::Csv => rows_to_csv(&rows),
                Format::Json => rows_to_json(&spec, &rows),
                Format::Text => rows_to_text(&vary, &rows),
            };
            emit(out.out.as_deref(), &text, &Metadata::new("sweep", &spec))?;
            Ok(0)
        }
        Command::Simulate { model, sim, out } => {
            let (built, spec) = model.source()?.load(model.truncation()?)?;
            let report = run_simulation(&built, spec.as_ref(), &sim.config())?;
            let text = match out.format.unwrap_or(Format::Text) {
                Format::Text => report.to_text(),
                Format::Json => json(&report),
                Format::Csv => report.to_csv(),
            };
            emit(out.out.as_deref(), &text, &Metadata::new("simulate", &report.config))?;
            Ok(0)
        }
        Command::Verify { seed, models, out } => {
            let results = run_verify(VerifyOptions { seed, models });
            let text = match out.format.unwrap_or(Format::Text) {
                Format::Json => json(&results),
                _ => results_to_text(&results),
            };
            emit(out.out.as_deref(), &text, &Metadata::new("verify", &results))?;
            Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = matches!(
        &cli.command,
        Command::Compute { out, .. } | Command::Sweep { out, .. } | Command::Simulate { out, .. } | Command::Verify { out, .. }
            if out.format == Some(Format::Json)
    );
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if json_errors {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error[{}]: {e}", e.kind());
            }
            ExitCode::from(2)
        }
    }
}
