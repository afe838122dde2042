use std::net::SocketAddr;
use std::time::Duration;

use prior_lens_core::elicitation::mock::{MockScript, MockServer};
use prior_lens_core::elicitation::{elicit, API_KEY_ENV};
use prior_lens_core::store::write_records;
use prior_lens_core::{ClientConfig, RunManifest, ScenarioRegistry};
use serde_json::json;

use crate::args::{ElicitArgs, MockServerArgs, ScenariosArgs};
use crate::error::{CliError, Result};

pub fn run(args: &ElicitArgs) -> Result<()> {
    let key = std::env::var(API_KEY_ENV)
        .ok()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| CliError::Fatal(format!("missing credential: set {API_KEY_ENV}")))?;
    let registry = ScenarioRegistry::load(args.scenario_file.as_deref())?;
    let scenarios = args
        .scenarios
        .iter()
        .map(|id| registry.get(id))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cfg = ClientConfig::new(&args.endpoint, &args.model, key);
    cfg.temperature = args.temperature;
    cfg.max_in_flight = args.max_in_flight;
    cfg.retry_max = args.retry_max;
    cfg.retry_base_delay = Duration::from_millis(args.retry_base_ms);
    cfg.timeout = Duration::from_secs(args.timeout_s);
    cfg.requests_per_minute = args.rpm;
    cfg.validate()?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    for scenario in scenarios {
        if scenario.non_canonical {
            log::warn!(
                "scenario `{}` uses a placeholder prompt; its records are not comparable",
                scenario.id
            );
        }
        let run = elicit(scenario, &cfg, args.replicates)?;
        let effective = json!({
            "endpoint": args.endpoint,
            "model": args.model,
            "temperature": args.temperature,
            "replicates": args.replicates,
            "max_in_flight": args.max_in_flight,
            "rpm": args.rpm,
            "retry_max": args.retry_max,
            "retry_base_ms": args.retry_base_ms,
            "timeout_s": args.timeout_s,
            "scenario": scenario,
        });
        let manifest = RunManifest::new(
            scenario,
            &args.model,
            args.temperature,
            args.replicates,
            &effective,
        );
        let (manifest_path, records_path) = write_records(&manifest, &run.records, &args.out_dir)?;
        println!(
            "{}: {} valid, {} invalid, {} retries",
            scenario.id,
            run.valid_count(),
            run.invalid_count(),
            run.retries
        );
        println!("  records: {}", records_path.display());
        println!("  manifest: {}", manifest_path.display());
    }
    Ok(())
}

pub fn scenarios(args: &ScenariosArgs) -> Result<()> {
    let registry = ScenarioRegistry::load(args.scenario_file.as_deref())?;
    println!(
        "{:<18} {:>5} {:>5} {:>5}  units",
        "id", "t_min", "t_max", "step"
    );
    for s in registry.iter() {
        let note = if s.non_canonical {
            "  (placeholder prompt)"
        } else {
            ""
        };
        println!(
            "{:<18} {:>5} {:>5} {:>5}  {}{note}",
            s.id, s.t_min, s.t_max, s.t_step, s.units
        );
        if args.templates {
            println!("    {}", s.prompt_template);
        }
    }
    Ok(())
}

pub fn mock_server(args: &MockServerArgs) -> Result<()> {
    let script = match &args.script {
        Some(path) => MockScript::from_file(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => MockScript {
            reply: args.reply.clone().unwrap_or_default(),
            failures: args.failures.clone(),
            api_key: args.api_key.clone(),
        },
    };
    let server = MockServer::start_at(script, SocketAddr::from(([127, 0, 0, 1], args.port)))
        .map_err(|e| CliError::Fatal(format!("cannot listen on port {}: {e}", args.port)))?;
    println!("{}", server.url());
    loop {
        std::thread::park();
    }
}
