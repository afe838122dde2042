use std::io::Write;

use chrono::DateTime;
use prior_lens_core::store::{records_to_writer, write_records_csv};
use prior_lens_core::{prediction_curve, ElicitationRecord, ScenarioRegistry};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::args::SimulateArgs;
use crate::error::{CliError, Result};

/// Scenario id written when the grid comes from `--t-min/--t-max`.
pub const SYNTHETIC_SCENARIO: &str = "synthetic";

pub fn run(args: &SimulateArgs) -> Result<()> {
    let prior = args.prior.prior()?;
    let cfg = args.quadrature.config()?;
    if !(args.noise_sd >= 0.0 && args.noise_sd.is_finite()) {
        return Err(CliError::Usage(format!(
            "--noise-sd must be >= 0, got {}",
            args.noise_sd
        )));
    }
    let (scenario_id, grid) = match &args.scenario {
        Some(id) => {
            let registry = ScenarioRegistry::load(args.scenario_file.as_deref())?;
            let scenario = registry.get(id)?;
            (scenario.id.clone(), scenario.grid())
        }
        None => {
            let (lo, hi) = (args.t_min.unwrap_or(1), args.t_max.unwrap_or(1));
            let step = args.step.unwrap_or(1);
            if lo < 1 || hi < lo || step < 1 {
                return Err(CliError::Usage(format!(
                    "need 1 <= --t-min <= --t-max and --step >= 1, got {lo}, {hi}, {step}"
                )));
            }
            (
                SYNTHETIC_SCENARIO.to_string(),
                (lo..=hi).step_by(step as usize).collect(),
            )
        }
    };

    let ts: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
    let curve = prediction_curve(&prior, &ts, &cfg)?;
    let noise =
        Normal::new(0.0, args.noise_sd).map_err(|e| CliError::Usage(format!("--noise-sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let model_id = format!("simulated-{}", prior.family_name());
    let mut records = Vec::with_capacity(grid.len() * args.replicates as usize);
    for (&t, pair) in grid.iter().zip(&curve) {
        for replicate in 0..args.replicates {
            let value = if args.noise_sd > 0.0 {
                pair.t_star + noise.sample(&mut rng)
            } else {
                pair.t_star
            };
            records.push(ElicitationRecord::with_value(
                scenario_id.clone(),
                t,
                replicate,
                value.to_string(),
                Some(value),
                &model_id,
                DateTime::UNIX_EPOCH,
            ));
        }
    }

    match &args.out {
        Some(path) => {
            write_records_csv(&records, path)?;
            println!("wrote {} records to {}", records.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout().lock();
            records_to_writer(&records, stdout)?;
            std::io::stdout()
                .flush()
                .map_err(|e| CliError::Data(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}
