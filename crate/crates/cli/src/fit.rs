use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use prior_lens_core::store::{pairs_from_records, read_fit, read_records, write_fit, LoadedPairs};
use prior_lens_core::{select_model, Aggregation, FitParams, FitResult, ModelSelection};

use crate::args::{FitArgs, FitFlags, ReportArgs, SelectArgs};
use crate::error::{CliError, Result};
use crate::predict::significant;
use crate::report::ReportBundle;

/// Valid pairs of one scenario from a records CSV.
pub struct Loaded {
    pub scenario: String,
    pub pairs: LoadedPairs,
}

pub fn load(input: &Path, scenario: Option<&str>, aggregation: Aggregation) -> Result<Loaded> {
    let mut records = read_records(input)?;
    let ids: BTreeSet<&str> = records.iter().map(|r| r.scenario_id.as_str()).collect();
    let scenario = match scenario {
        Some(id) if ids.contains(id) => id.to_string(),
        Some(id) => {
            return Err(CliError::Data(format!(
                "{}: no records for scenario `{id}`",
                input.display()
            )))
        }
        None if ids.len() > 1 => {
            let list: Vec<&str> = ids.into_iter().collect();
            return Err(CliError::Usage(format!(
                "{} holds several scenarios ({}); choose one with --scenario",
                input.display(),
                list.join(", ")
            )));
        }
        None => match ids.first() {
            Some(id) => id.to_string(),
            None => return Err(CliError::Data(format!("{}: no records", input.display()))),
        },
    };
    records.retain(|r| r.scenario_id == scenario);
    let pairs = pairs_from_records(&records, aggregation)?;
    Ok(Loaded { scenario, pairs })
}

fn select(loaded: &Loaded, flags: &FitFlags) -> Result<ModelSelection> {
    Ok(select_model(
        &loaded.pairs.pairs,
        &flags.options()?,
        &flags.quadrature.config()?,
    )?)
}

pub fn describe(params: &FitParams) -> String {
    match *params {
        FitParams::PowerLaw { gamma } => format!("gamma={}", significant(gamma, 6)),
        FitParams::Erlang { beta } => format!("beta={}", significant(beta, 6)),
        FitParams::Gaussian { mu, sigma } => {
            format!("mu={} sigma={}", significant(mu, 6), significant(sigma, 6))
        }
    }
}

fn print_selection(loaded: &Loaded, sel: &ModelSelection) {
    println!(
        "scenario {}: {} pairs, {} rows rejected",
        loaded.scenario,
        sel.pairs.len(),
        loaded.pairs.rejected + sel.rejected
    );
    println!(
        "{:<4} {:<10} {:<32} {:>14}  boundary",
        "rank", "family", "parameters", "mse"
    );
    for (i, fit) in sel.ranked.iter().enumerate() {
        println!(
            "{:<4} {:<10} {:<32} {:>14}  {}",
            i + 1,
            fit.family.name(),
            describe(&fit.params),
            significant(fit.mse, 6),
            if fit.boundary_flag { "yes" } else { "no" }
        );
    }
    for ex in &sel.excluded {
        println!("excluded {}: {}", ex.family.name(), ex.error);
    }
    println!(
        "winner: {} ({})",
        sel.winner().family.name(),
        describe(&sel.winner().params)
    );
}

fn default_fit_path(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".into());
    let stem = stem.strip_suffix(".records").unwrap_or(&stem).to_string();
    input.with_file_name(format!("{stem}.fit.json"))
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    let loaded = load(
        &args.input,
        args.fit.scenario.as_deref(),
        args.fit.aggregation,
    )?;
    let sel = select(&loaded, &args.fit)?;
    print_selection(&loaded, &sel);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_fit_path(&args.input));
    write_fit(&sel.ranked, &out)?;
    println!("fit: {}", out.display());
    if let Some(dir) = &args.report {
        let bundle = ReportBundle::build(
            &loaded.scenario,
            &sel.pairs,
            &sel.ranked,
            &args.fit.quadrature.config()?,
        )?;
        for path in bundle.write(dir)? {
            println!("report: {}", path.display());
        }
    }
    Ok(())
}

pub fn run_select(args: &SelectArgs) -> Result<()> {
    let loaded = load(
        &args.input,
        args.fit.scenario.as_deref(),
        args.fit.aggregation,
    )?;
    let sel = select(&loaded, &args.fit)?;
    print_selection(&loaded, &sel);
    Ok(())
}

pub fn run_report(args: &ReportArgs) -> Result<()> {
    let loaded = load(&args.input, args.scenario.as_deref(), args.aggregation)?;
    // the file lists fits best first, as `fit` ranked them
    let fits: Vec<FitResult> = read_fit(&args.fit_file)?;
    if fits.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no fit results",
            args.fit_file.display()
        )));
    }
    let bundle = ReportBundle::build(
        &loaded.scenario,
        &loaded.pairs.pairs,
        &fits,
        &args.quadrature.config()?,
    )?;
    for path in bundle.write(&args.out_dir)? {
        println!("report: {}", path.display());
    }
    Ok(())
}
