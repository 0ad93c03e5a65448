//! Command-line front end: simulate, fit, select, decode.
//!
//! Each run emits a JSON report plus plot-ready CSV tables (per-day decode
//! table; per-K selection table). Output is byte-identical for identical
//! input bytes and flags, including the seed.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use poisson_hmm::{
    em_fit, select_num_states, simulate, FitConfig, ObservationSeries, PoissonHmm,
};
use poisson_hmm_cli::data::{ingest_counts, write_counts_csv, DataError, IngestOptions, MissingPolicy};
use poisson_hmm_cli::report::{
    render_models_csv, render_per_day_csv, render_report, states_sidecar_path, write_atomic,
    ConfigEcho, FitSection, InputDigest, OutPaths, RunReport, SelectionSection,
    REPORT_SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(name = "poisson-hmm", version, about = "Regime detection for daily count series with a switching-Poisson HMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic daily-count series from the generative model
    Simulate(SimulateArgs),
    /// Fit rates for a fixed number of states and decode the series
    Fit(FitArgs),
    /// Fit every state count up to a maximum and pick the best
    Select(SelectArgs),
    /// Decode a series under explicitly given rates (no fitting)
    Decode(DecodeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of latent states
    #[arg(long)]
    states: usize,
    /// Comma-separated per-state Poisson rates (events/day)
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    stay_prob: f64,
    /// Length of the simulated series in days
    #[arg(long)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First calendar date of the series (YYYY-MM-DD)
    #[arg(long, default_value = "2022-10-01")]
    start_date: String,
    /// Output CSV; true states go to a `.states.csv` sidecar
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InputArgs {
    /// Input daily-count CSV (header row; date,count)
    input: PathBuf,
    /// Zero-fill missing days instead of rejecting the file
    #[arg(long)]
    fill_missing: bool,
    /// Header name of the date column
    #[arg(long, default_value = "date")]
    date_column: String,
    /// Header name of the count column
    #[arg(long, default_value = "count")]
    count_column: String,
}

#[derive(Args)]
struct FitTuning {
    #[arg(long, default_value_t = 0.95)]
    stay_prob: f64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
}

impl FitTuning {
    fn to_config(&self) -> FitConfig {
        FitConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            restarts: self.restarts,
            seed: self.seed,
            stay_prob: self.stay_prob,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of latent states to fit
    #[arg(long)]
    states: usize,
    #[command(flatten)]
    tuning: FitTuning,
    /// Output base path; writes `<out>.report.json` and `<out>.perday.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Largest number of states to consider
    #[arg(long, default_value_t = 10)]
    max_states: usize,
    #[command(flatten)]
    tuning: FitTuning,
    /// Output base path; also writes `<out>.models.csv`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated per-state Poisson rates (events/day)
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    stay_prob: f64,
    /// Output base path; writes `<out>.report.json` and `<out>.perday.csv`
    #[arg(long)]
    out: PathBuf,
}

/// Failure with the single-line machine-parseable category the CLI prints.
enum CliError {
    Usage(String),
    Ingest(DataError),
    Domain(poisson_hmm::Error),
    Io(DataError),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Ingest(_) => "ingest",
            CliError::Domain(_) => "domain",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Ingest(e) => e.to_string(),
            CliError::Domain(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) | DataError::Csv(_) => CliError::Io(e),
            DataError::Domain(inner) => CliError::Domain(inner),
            other => CliError::Ingest(other),
        }
    }
}

impl From<poisson_hmm::Error> for CliError {
    fn from(e: poisson_hmm::Error) -> Self {
        CliError::Domain(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(&args),
        Command::Fit(args) => run_fit(&args),
        Command::Select(args) => run_select(&args),
        Command::Decode(args) => run_decode(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), single_line(&e.message()));
            ExitCode::FAILURE
        }
    }
}

fn single_line(message: &str) -> String {
    message.replace('\n', " ")
}

fn load_series(input: &InputArgs) -> Result<ObservationSeries, CliError> {
    let opts = IngestOptions {
        missing_policy: if input.fill_missing {
            MissingPolicy::FillZero
        } else {
            MissingPolicy::Error
        },
        date_column: input.date_column.clone(),
        count_column: input.count_column.clone(),
    };
    Ok(ingest_counts(&input.input, &opts)?)
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.rates.len() != args.states {
        return Err(CliError::Usage(format!(
            "--rates lists {} values but --states is {}",
            args.rates.len(),
            args.states
        )));
    }
    let start_date = NaiveDate::parse_from_str(&args.start_date, "%Y-%m-%d")
        .map_err(|_| CliError::Usage(format!("--start-date '{}' is not YYYY-MM-DD", args.start_date)))?;
    if args.days < 1 {
        return Err(CliError::Usage("--days must be at least 1".to_string()));
    }
    let model = PoissonHmm::new(args.rates.clone(), args.stay_prob)?;
    let (states, series) = simulate(&model, args.days, args.seed, start_date)?;

    let mut counts_csv = Vec::new();
    write_counts_csv(&series, &mut counts_csv)?;
    write_atomic(&args.out, &counts_csv)?;

    let mut states_csv = String::from("date,state\n");
    for (i, &s) in states.states().iter().enumerate() {
        states_csv.push_str(&format!("{},{}\n", series.date(i).format("%Y-%m-%d"), s));
    }
    write_atomic(&states_sidecar_path(&args.out), states_csv.as_bytes())?;
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let series = load_series(&args.input)?;
    let config = args.tuning.to_config();
    let fit = em_fit(&series, args.states, &config)?;

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "fit".to_string(),
        input: InputDigest::of(&args.input.input, &series),
        config: ConfigEcho {
            num_states: Some(args.states),
            max_states: None,
            stay_prob: config.stay_prob,
            restarts: Some(config.restarts),
            seed: Some(config.seed),
            max_iters: Some(config.max_iters),
            rel_tol: Some(config.rel_tol),
        },
        selection: None,
        fit: FitSection {
            num_states: args.states,
            rates: fit.model.rates().to_vec(),
            log_likelihood: fit.final_log_likelihood,
            converged: Some(fit.converged),
            best_restart: Some(fit.best_restart),
            iterations: Some(fit.ll_trace.len()),
        },
    };
    let paths = OutPaths::from_base(&args.out);
    write_atomic(&paths.report, &render_report(&report))?;
    write_atomic(&paths.per_day, &render_per_day_csv(&series, &fit.model))?;
    Ok(())
}

fn run_select(args: &SelectArgs) -> Result<(), CliError> {
    let series = load_series(&args.input)?;
    let config = args.tuning.to_config();
    let selection = select_num_states(&series, args.max_states, &config)?;
    let best = selection
        .candidates
        .iter()
        .find(|c| c.num_states == selection.selected_num_states)
        .expect("selected state count is always a candidate");

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "select".to_string(),
        input: InputDigest::of(&args.input.input, &series),
        config: ConfigEcho {
            num_states: None,
            max_states: Some(args.max_states),
            stay_prob: config.stay_prob,
            restarts: Some(config.restarts),
            seed: Some(config.seed),
            max_iters: Some(config.max_iters),
            rel_tol: Some(config.rel_tol),
        },
        selection: Some(SelectionSection::of(&selection)),
        fit: FitSection {
            num_states: best.num_states,
            rates: best.fit.model.rates().to_vec(),
            log_likelihood: best.fit.final_log_likelihood,
            converged: Some(best.fit.converged),
            best_restart: Some(best.fit.best_restart),
            iterations: Some(best.fit.ll_trace.len()),
        },
    };
    let paths = OutPaths::from_base(&args.out);
    write_atomic(&paths.report, &render_report(&report))?;
    write_atomic(&paths.models, &render_models_csv(&selection))?;
    // decoded path under the selected model
    write_atomic(&paths.per_day, &render_per_day_csv(&series, &best.fit.model))?;
    Ok(())
}

fn run_decode(args: &DecodeArgs) -> Result<(), CliError> {
    let series = load_series(&args.input)?;
    let model = PoissonHmm::new(args.rates.clone(), args.stay_prob)?;
    let ll = poisson_hmm::log_marginal_likelihood(&series, &model);

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "decode".to_string(),
        input: InputDigest::of(&args.input.input, &series),
        config: ConfigEcho {
            num_states: Some(model.num_states()),
            max_states: None,
            stay_prob: args.stay_prob,
            restarts: None,
            seed: None,
            max_iters: None,
            rel_tol: None,
        },
        selection: None,
        fit: FitSection {
            num_states: model.num_states(),
            rates: model.rates().to_vec(),
            log_likelihood: ll,
            converged: None,
            best_restart: None,
            iterations: None,
        },
    };
    let paths = OutPaths::from_base(&args.out);
    write_atomic(&paths.report, &render_report(&report))?;
    write_atomic(&paths.per_day, &render_per_day_csv(&series, &model))?;
    Ok(())
}
