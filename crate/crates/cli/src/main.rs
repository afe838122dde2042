use std::process::ExitCode;

mod args;
mod config;
mod elicit;
mod error;
mod fit;
mod predict;
mod report;
mod simulate;

use args::Command;

fn main() -> ExitCode {
    let cli = match config::parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let threads = if cli.parallel { 0 } else { 1 };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        log::debug!("thread pool already set up: {e}");
    }

    let result = match &cli.command {
        Command::Predict(a) => predict::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Elicit(a) => elicit::run(a),
        Command::Fit(a) => fit::run_fit(a),
        Command::Select(a) => fit::run_select(a),
        Command::Report(a) => fit::run_report(a),
        Command::Scenarios(a) => elicit::scenarios(a),
        Command::MockServer(a) => elicit::mock_server(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
