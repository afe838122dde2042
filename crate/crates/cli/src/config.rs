//! Flag defaults from a TOML file. Each entry becomes a `--flag=value`
//! argument unless that flag was given on the command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use crate::args::Cli;
use crate::error::{CliError, Result};

/// Parses `argv`, filling unset flags from `--config` when one is given.
/// Clap's own usage errors (and `--help`) exit the process directly.
pub fn parse(argv: Vec<OsString>) -> Result<Cli> {
    let probe = Cli::command()
        .ignore_errors(true)
        .try_get_matches_from(&argv);
    let path = probe
        .as_ref()
        .ok()
        .and_then(|m| m.get_one::<PathBuf>("config").cloned());
    let Some(path) = path else {
        return Ok(finish(Cli::command().get_matches_from(argv)));
    };
    let probe = probe.expect("probe parsed");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;

    let root = Cli::command();
    let mut argv = argv;
    let mut extra = Vec::new();
    let sub = probe.subcommand();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                let Some((name, sub_matches)) = sub.filter(|(name, _)| name == key) else {
                    if root.find_subcommand(key).is_none() {
                        return Err(CliError::Usage(format!(
                            "config: unknown command table [{key}]"
                        )));
                    }
                    continue;
                };
                let command = root.find_subcommand(name).expect("subcommand exists");
                for (flag, value) in section {
                    defaults_for(
                        command,
                        sub_matches,
                        &format!("{key}.{flag}"),
                        flag,
                        value,
                        &mut extra,
                    )?;
                }
            }
            _ => defaults_for(&root, &probe, key, key, value, &mut extra)?,
        }
    }
    argv.extend(extra);
    Ok(finish(Cli::command().get_matches_from(argv)))
}

fn finish(matches: ArgMatches) -> Cli {
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn defaults_for(
    command: &clap::Command,
    matches: &ArgMatches,
    label: &str,
    flag: &str,
    value: &toml::Value,
    out: &mut Vec<OsString>,
) -> Result<()> {
    let arg = command
        .get_arguments()
        .find(|a| a.get_long() == Some(flag))
        .ok_or_else(|| CliError::Usage(format!("config: unknown flag `{label}`")))?;
    if flag == "config" {
        return Err(CliError::Usage(
            "config: `config` cannot be set from a config file".into(),
        ));
    }
    if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
        return Ok(());
    }
    let values = match value {
        toml::Value::Array(items) => items
            .iter()
            .map(|v| scalar(label, v))
            .collect::<Result<Vec<_>>>()?,
        v => vec![scalar(label, v)?],
    };
    for v in values {
        match v {
            Scalar::Switch(true) => out.push(format!("--{flag}").into()),
            Scalar::Switch(false) => {}
            Scalar::Text(s) => out.push(format!("--{flag}={s}").into()),
        }
    }
    Ok(())
}

enum Scalar {
    Switch(bool),
    Text(String),
}

fn scalar(label: &str, value: &toml::Value) -> Result<Scalar> {
    Ok(match value {
        toml::Value::Boolean(b) => Scalar::Switch(*b),
        toml::Value::String(s) => Scalar::Text(s.clone()),
        toml::Value::Integer(i) => Scalar::Text(i.to_string()),
        toml::Value::Float(f) => Scalar::Text(f.to_string()),
        _ => {
            return Err(CliError::Usage(format!(
                "config: `{label}` must be a string, number, boolean or array of those"
            )))
        }
    })
}
