use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use prior_lens_core::{Aggregation, FitOptions, PriorSpec, QuadratureConfig};

use crate::error::{CliError, Result};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Parser)]
#[command(
    name = "prior-lens",
    version,
    about = "Bayesian prediction functions and implicit-prior recovery"
)]
pub struct Cli {
    /// TOML file of flag defaults: top-level keys for global flags,
    /// `[<command>]` tables for each command's flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Let math commands use every core (output order is unchanged).
    #[arg(long, global = true)]
    pub parallel: bool,

    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the posterior-median prediction t* for one t.
    Predict(PredictArgs),
    /// Write a records CSV whose values come from a prior's prediction function.
    Simulate(SimulateArgs),
    /// Query a chat-completion endpoint over scenario grids.
    Elicit(ElicitArgs),
    /// Fit all families to a records CSV, write the fit JSON and optionally a report.
    Fit(FitArgs),
    /// Rank the families on a records CSV without writing anything.
    Select(SelectArgs),
    /// Build the report tables and SVG from a records CSV and a fit JSON.
    Report(ReportArgs),
    /// List the known scenarios.
    Scenarios(ScenariosArgs),
    /// Serve a scripted chat-completion endpoint until interrupted.
    MockServer(MockServerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    #[value(name = "powerlaw", alias = "power-law")]
    PowerLaw,
    Erlang,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long)]
    pub family: FamilyArg,
    /// Power-law exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Erlang scale.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Gaussian mean.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Gaussian standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl PriorArgs {
    pub fn prior(&self) -> Result<PriorSpec> {
        let given = [
            ("--gamma", self.gamma),
            ("--beta", self.beta),
            ("--mu", self.mu),
            ("--sigma", self.sigma),
        ];
        let (needed, family): (&[&str], &str) = match self.family {
            FamilyArg::PowerLaw => (&["--gamma"], "powerlaw"),
            FamilyArg::Erlang => (&["--beta"], "erlang"),
            FamilyArg::Gaussian => (&["--mu", "--sigma"], "gaussian"),
        };
        for (flag, value) in given {
            match (needed.contains(&flag), value.is_some()) {
                (true, false) => {
                    return Err(CliError::Usage(format!("--family {family} needs {flag}")))
                }
                (false, true) => {
                    return Err(CliError::Usage(format!(
                        "{flag} does not apply to --family {family}"
                    )))
                }
                _ => {}
            }
        }
        let spec = match self.family {
            FamilyArg::PowerLaw => PriorSpec::power_law(self.gamma.unwrap_or_default()),
            FamilyArg::Erlang => PriorSpec::erlang(self.beta.unwrap_or_default()),
            FamilyArg::Gaussian => {
                PriorSpec::gaussian(self.mu.unwrap_or_default(), self.sigma.unwrap_or_default())
            }
        };
        Ok(spec?)
    }
}

#[derive(Debug, Args)]
pub struct QuadratureArgs {
    /// Trapezoid grid size for numeric posterior medians.
    #[arg(long, default_value_t = QuadratureConfig::default().grid_points)]
    pub grid_points: usize,
    /// Posterior mass allowed beyond the upper truncation point.
    #[arg(long, default_value_t = QuadratureConfig::default().tail_mass_epsilon)]
    pub tail_epsilon: f64,
}

impl QuadratureArgs {
    pub fn config(&self) -> Result<QuadratureConfig> {
        let cfg = QuadratureConfig {
            grid_points: self.grid_points,
            tail_mass_epsilon: self.tail_epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Observed partial value.
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Take the t grid (and scenario id) from a known scenario.
    #[arg(long, conflicts_with_all = ["t_min", "t_max", "step"])]
    pub scenario: Option<String>,
    /// Extra or overriding scenario definitions (TOML).
    #[arg(long, value_name = "PATH")]
    pub scenario_file: Option<PathBuf>,
    #[arg(long, required_unless_present = "scenario")]
    pub t_min: Option<i64>,
    #[arg(long, required_unless_present = "scenario")]
    pub t_max: Option<i64>,
    #[arg(long)]
    pub step: Option<i64>,
    /// Standard deviation of the additive Gaussian noise, in scenario units.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    /// Records CSV to write; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// Scenario ids, comma separated or repeated.
    #[arg(long = "scenario", required = true, value_delimiter = ',')]
    pub scenarios: Vec<String>,
    #[arg(long, value_name = "PATH")]
    pub scenario_file: Option<PathBuf>,
    /// Chat-completions URL.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    #[arg(long, default_value = "gpt-4")]
    pub model: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Dispatch rate limit in requests per minute.
    #[arg(long)]
    pub rpm: Option<f64>,
    /// Retries after the first attempt for 429, 5xx and transport errors.
    #[arg(long, default_value_t = 5)]
    pub retry_max: u32,
    /// Base of the exponential backoff.
    #[arg(long, default_value_t = 1000)]
    pub retry_base_ms: u64,
    /// Per-request timeout.
    #[arg(long, default_value_t = 60)]
    pub timeout_s: u64,
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitFlags {
    /// How replicates at the same t are combined.
    #[arg(long, default_value = "median", value_parser = parse_aggregation)]
    pub aggregation: Aggregation,
    /// Only use records of this scenario (required when the input mixes scenarios).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Evaluation budget per simplex start of the Gaussian fit.
    #[arg(long, default_value_t = FitOptions::default().max_evaluations)]
    pub max_evaluations: usize,
    #[arg(long, default_value_t = FitOptions::default().simplex_tolerance)]
    pub simplex_tolerance: f64,
    /// Lowest admissible Gaussian mean.
    #[arg(long, default_value_t = FitOptions::default().gaussian_mu_floor, allow_negative_numbers = true)]
    pub gaussian_mu_floor: f64,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    s.parse()
}

impl FitFlags {
    pub fn options(&self) -> Result<FitOptions> {
        let opts = FitOptions {
            max_evaluations: self.max_evaluations,
            simplex_tolerance: self.simplex_tolerance,
            gaussian_mu_floor: self.gaussian_mu_floor,
            replicate_aggregation: self.aggregation,
            ..FitOptions::default()
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Records CSV.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Fit JSON to write; defaults to the input path with `.fit.json`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Directory for the report tables and SVG.
    #[arg(long, value_name = "DIR")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Records CSV the fit was made from.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Fit JSON written by `fit`.
    #[arg(long = "fit", value_name = "PATH")]
    pub fit_file: PathBuf,
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "median", value_parser = parse_aggregation)]
    pub aggregation: Aggregation,
    #[arg(long)]
    pub scenario: Option<String>,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    #[arg(long, value_name = "PATH")]
    pub scenario_file: Option<PathBuf>,
    /// Print each scenario's prompt template too.
    #[arg(long)]
    pub templates: bool,
}

#[derive(Debug, Args)]
pub struct MockServerArgs {
    /// JSON script (`reply`, `failures`, `api_key`).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["reply", "failures", "api_key"])]
    pub script: Option<PathBuf>,
    /// Reply template; `{t}` and `{2t}` are filled from the prompt's last integer.
    #[arg(long, required_unless_present = "script")]
    pub reply: Option<String>,
    /// Statuses returned, in order, before the reply for each prompt.
    #[arg(long, value_delimiter = ',')]
    pub failures: Vec<u16>,
    /// Bearer token to require.
    #[arg(long)]
    pub api_key: Option<String>,
    #[arg(long, default_value_t = 8089)]
    pub port: u16,
}
