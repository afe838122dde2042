//! On-disk formats: run manifests (JSON), elicitation records (CSV) and fit
//! results (JSON). Every write goes through a temp file in the target
//! directory and an atomic rename, so readers never see a partial file.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::elicitation::{ElicitationRecord, ScenarioDef};
use crate::fit::{prepare_pairs, Aggregation, FitParams, FitResult};
use crate::prior::PredictionPair;

/// Column names of the records CSV, in order.
pub const RECORD_COLUMNS: [&str; 8] = [
    "scenario",
    "t",
    "replicate",
    "raw_response",
    "parsed_value",
    "valid",
    "model_id",
    "timestamp",
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header: column {index} should be `{expected}`, found `{found}`")]
    Header {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("no valid rows ({rejected} rejected)")]
    EmptyData { rejected: usize },
    #[error("nothing to write")]
    NothingToWrite,
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `path` through a sibling temp file and renames it into place.
/// If `write` fails, the temp file is removed and `path` is untouched.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".prior-lens-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(io_err(path))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        write(&mut out)?;
        out.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TGrid {
    pub t_min: i64,
    pub t_max: i64,
    pub t_step: i64,
}

/// Provenance for one elicitation (or simulation) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: Uuid,
    pub created_at: DateTime<Utc>,
    pub scenario_id: String,
    pub model_id: String,
    pub temperature: f64,
    pub t_grid: TGrid,
    pub replicates: u32,
    pub tool_version: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
}

impl RunManifest {
    pub fn new(
        scenario: &ScenarioDef,
        model_id: &str,
        temperature: f64,
        replicates: u32,
        effective_config: &serde_json::Value,
    ) -> Self {
        RunManifest {
            run_id: Uuid::new_v4(),
            created_at: Utc::now(),
            scenario_id: scenario.id.clone(),
            model_id: model_id.to_string(),
            temperature,
            t_grid: TGrid {
                t_min: scenario.t_min,
                t_max: scenario.t_max,
                t_step: scenario.t_step,
            },
            replicates,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(effective_config),
        }
    }

    pub fn manifest_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.manifest.json", self.run_id))
    }

    pub fn records_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.records.csv", self.run_id))
    }
}

/// Hex SHA-256 of `config` serialized with sorted object keys.
pub fn config_hash(config: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical
    let bytes = serde_json::to_vec(config).expect("Value always serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Writes `<run_id>.manifest.json` and `<run_id>.records.csv` into `dir`.
pub fn write_records(
    manifest: &RunManifest,
    records: &[ElicitationRecord],
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if records.is_empty() {
        return Err(StoreError::NothingToWrite);
    }
    let records_path = manifest.records_path(dir);
    write_records_csv(records, &records_path)?;
    let manifest_path = manifest.manifest_path(dir);
    atomic_write(&manifest_path, |w| {
        serde_json::to_writer_pretty(&mut *w, manifest)?;
        w.write_all(b"\n").map_err(io_err(&manifest_path))
    })?;
    Ok((manifest_path, records_path))
}

/// Writes records as CSV to `path` atomically.
pub fn write_records_csv(records: &[ElicitationRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(StoreError::NothingToWrite);
    }
    atomic_write(path, |w| records_to_writer(records, w))
}

/// Serializes records (with header) to any writer.
pub fn records_to_writer<W: Write>(records: &[ElicitationRecord], out: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().from_writer(out);
    csv.write_record(RECORD_COLUMNS)?;
    for r in records {
        csv.write_record([
            r.scenario_id.clone(),
            r.t.to_string(),
            r.replicate.to_string(),
            r.raw_response.clone(),
            r.parsed_value.map(|v| v.to_string()).unwrap_or_default(),
            r.valid.to_string(),
            r.model_id.clone(),
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        ])?;
    }
    csv.flush().map_err(|e| StoreError::Csv(e.into()))?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

/// Reads every record back, checking the header.
pub fn read_records(path: &Path) -> Result<Vec<ElicitationRecord>> {
    records_from_reader(open(path)?)
}

pub fn records_from_reader<R: Read>(input: R) -> Result<Vec<ElicitationRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    check_header(csv.headers()?)?;
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(parse_row(&row).map_err(|reason| StoreError::Row { line, reason })?);
    }
    Ok(out)
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    for (index, expected) in RECORD_COLUMNS.iter().enumerate() {
        let found = header.get(index).unwrap_or("");
        if found != *expected {
            return Err(StoreError::Header {
                index,
                expected,
                found: found.to_string(),
            });
        }
    }
    if let Some(extra) = header.get(RECORD_COLUMNS.len()) {
        return Err(StoreError::Header {
            index: RECORD_COLUMNS.len(),
            expected: "",
            found: extra.to_string(),
        });
    }
    Ok(())
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<ElicitationRecord, String> {
    if row.len() != RECORD_COLUMNS.len() {
        return Err(format!(
            "expected {} fields, found {}",
            RECORD_COLUMNS.len(),
            row.len()
        ));
    }
    let field = |i: usize| &row[i];
    let parse_err = |name: &str, value: &str| format!("bad {name} `{value}`");
    let t = field(1).parse().map_err(|_| parse_err("t", field(1)))?;
    let replicate = field(2)
        .parse()
        .map_err(|_| parse_err("replicate", field(2)))?;
    let parsed_value = match field(4) {
        "" => None,
        v => Some(v.parse::<f64>().map_err(|_| parse_err("parsed_value", v))?),
    };
    let valid = field(5).parse().map_err(|_| parse_err("valid", field(5)))?;
    let timestamp = DateTime::parse_from_rfc3339(field(7))
        .map_err(|_| parse_err("timestamp", field(7)))?
        .with_timezone(&Utc);
    Ok(ElicitationRecord {
        scenario_id: field(0).to_string(),
        t,
        replicate,
        raw_response: field(3).to_string(),
        parsed_value,
        valid,
        model_id: field(6).to_string(),
        timestamp,
    })
}

/// Fit-ready pairs from a records file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPairs {
    /// Sorted by `t`, replicates collapsed per the aggregation rule.
    pub pairs: Vec<PredictionPair>,
    /// Rows skipped as invalid.
    pub rejected: usize,
}

/// Loads the valid `(t, parsed_value)` pairs from a records CSV.
pub fn read_pairs(path: &Path, aggregation: Aggregation) -> Result<LoadedPairs> {
    pairs_from_records(&read_records(path)?, aggregation)
}

pub fn pairs_from_records(
    records: &[ElicitationRecord],
    aggregation: Aggregation,
) -> Result<LoadedPairs> {
    let mut rejected = 0;
    let mut raw = Vec::with_capacity(records.len());
    for r in records {
        match r.parsed_value {
            Some(v) if r.valid && r.t > 0 && v.is_finite() && v > 0.0 => raw.push(PredictionPair {
                t: r.t as f64,
                t_star: v,
            }),
            _ => rejected += 1,
        }
    }
    let prepared = prepare_pairs(&raw, aggregation);
    rejected += prepared.rejected;
    if prepared.pairs.is_empty() {
        return Err(StoreError::EmptyData { rejected });
    }
    Ok(LoadedPairs {
        pairs: prepared.pairs,
        rejected,
    })
}

/// Rounds to nine significant digits.
fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn rounded(fit: &FitResult) -> FitResult {
    let params = match fit.params {
        FitParams::PowerLaw { gamma } => FitParams::PowerLaw { gamma: sig9(gamma) },
        FitParams::Erlang { beta } => FitParams::Erlang { beta: sig9(beta) },
        FitParams::Gaussian { mu, sigma } => FitParams::Gaussian {
            mu: sig9(mu),
            sigma: sig9(sigma),
        },
    };
    FitResult {
        params,
        mse: sig9(fit.mse),
        ..fit.clone()
    }
}

/// Fit results as a pretty JSON array, numbers at nine significant digits.
pub fn fits_to_json(results: &[FitResult]) -> Result<String> {
    if results.is_empty() {
        return Err(StoreError::NothingToWrite);
    }
    let rounded: Vec<FitResult> = results.iter().map(rounded).collect();
    let mut text = serde_json::to_string_pretty(&rounded)?;
    text.push('\n');
    Ok(text)
}

pub fn write_fit(results: &[FitResult], path: &Path) -> Result<()> {
    let text = fits_to_json(results)?;
    atomic_write(path, |w| w.write_all(text.as_bytes()).map_err(io_err(path)))
}

pub fn read_fit(path: &Path) -> Result<Vec<FitResult>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Family;

    fn record(t: i64, rep: u32, raw: &str, value: Option<f64>) -> ElicitationRecord {
        ElicitationRecord::with_value(
            "cakes".into(),
            t,
            rep,
            raw.into(),
            value,
            "gpt-4",
            DateTime::parse_from_rfc3339("2024-03-01T12:00:00.123456789Z")
                .unwrap()
                .with_timezone(&Utc),
        )
    }

    fn to_csv(records: &[ElicitationRecord]) -> String {
        let mut buf = Vec::new();
        records_to_writer(records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_and_line_count() {
        let records: Vec<_> = (10..=70)
            .map(|t| record(t, 0, "x", Some(2.0 * t as f64)))
            .collect();
        let text = to_csv(&records);
        assert_eq!(text.lines().count(), 62);
        assert_eq!(
            text.lines().next().unwrap(),
            "scenario,t,replicate,raw_response,parsed_value,valid,model_id,timestamp"
        );
    }

    #[test]
    fn commas_and_quotes_are_quoted() {
        let r = record(10, 0, "well, \"about\" 1,200\nminutes", Some(1200.0));
        let text = to_csv(std::slice::from_ref(&r));
        assert!(text.contains("\"well, \"\"about\"\" 1,200\nminutes\""));
        let back = records_from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn invalid_rows_are_counted() {
        let records = vec![
            record(1, 0, "2", Some(2.0)),
            record(2, 0, "nothing", None),
            record(3, 0, "6", Some(6.0)),
            record(4, 0, "-1", Some(-1.0)),
            record(5, 0, "10", Some(10.0)),
        ];
        let loaded = pairs_from_records(&records, Aggregation::Median).unwrap();
        assert_eq!(loaded.pairs.len(), 3);
        assert_eq!(loaded.rejected, 2);
    }

    #[test]
    fn replicates_collapse_by_median() {
        let records = vec![
            record(10, 0, "40", Some(40.0)),
            record(10, 1, "44", Some(44.0)),
        ];
        let loaded = pairs_from_records(&records, Aggregation::Median).unwrap();
        assert_eq!(
            loaded.pairs,
            vec![PredictionPair {
                t: 10.0,
                t_star: 42.0
            }]
        );
    }

    #[test]
    fn semicolon_header_is_rejected() {
        let text = "scenario;t;replicate;raw_response;parsed_value;valid;model_id;timestamp\n";
        let err = records_from_reader(text.as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::Header { index: 0, .. }), "{err}");
        let text = "scenario,t,rep,raw_response,parsed_value,valid,model_id,timestamp\n";
        let err = records_from_reader(text.as_bytes()).unwrap_err();
        assert!(
            matches!(
                err,
                StoreError::Header {
                    index: 2,
                    expected: "replicate",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn empty_valid_set() {
        let records = vec![record(1, 0, "?", None)];
        assert!(matches!(
            pairs_from_records(&records, Aggregation::Median),
            Err(StoreError::EmptyData { rejected: 1 })
        ));
    }

    #[test]
    fn fit_json_nine_digits() {
        let fit = FitResult {
            family: Family::Erlang,
            params: FitParams::Erlang {
                beta: 18.090000000412,
            },
            mse: 1.234567891234e-3,
            n: 61,
            boundary_flag: false,
        };
        let text = fits_to_json(&[fit]).unwrap();
        assert!(text.contains("\"beta\": 18.09"), "{text}");
        assert!(text.contains("\"mse\": 0.00123456789"), "{text}");
        let keys: Vec<usize> = ["family", "params", "mse", "\"n\"", "boundary_flag"]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back: Vec<FitResult> = serde_json::from_str(&text).unwrap();
        assert_eq!(fits_to_json(&back).unwrap(), text);
    }

    #[test]
    fn empty_fit_list() {
        assert!(matches!(fits_to_json(&[]), Err(StoreError::NothingToWrite)));
    }

    #[test]
    fn config_hash_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
