use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use prior_lens_core::store::{
    atomic_write, fits_to_json, read_fit, read_manifest, read_records, records_from_reader,
    records_to_writer, write_fit, write_records, write_records_csv,
};
use prior_lens_core::{
    ElicitationRecord, Family, FitParams, FitResult, RunManifest, ScenarioRegistry, StoreError,
};
use proptest::prelude::*;

fn leftovers(dir: &Path) -> Vec<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".prior-lens-"))
        .collect()
}

fn record(raw: &str, value: Option<f64>) -> ElicitationRecord {
    ElicitationRecord {
        scenario_id: "cakes".into(),
        t: 10,
        replicate: 0,
        raw_response: raw.into(),
        parsed_value: value,
        valid: value.is_some(),
        model_id: "m".into(),
        timestamp: Utc.with_ymd_and_hms(2024, 2, 29, 23, 59, 59).unwrap(),
    }
}

fn through_csv(records: &[ElicitationRecord]) -> Vec<ElicitationRecord> {
    let mut buf = Vec::new();
    records_to_writer(records, &mut buf).unwrap();
    records_from_reader(buf.as_slice()).unwrap()
}

#[test]
fn awkward_fields_survive_the_csv() {
    let records = vec![
        record("He said \"about 20\",\nthen 25.", Some(25.0)),
        record("", None),
        record("  leading and trailing  ", Some(0.1 + 0.2)),
        record("tab\there, comma, quote\"", Some(f64::MIN_POSITIVE)),
        record("unicode ⏱ 분", Some(1e300)),
        record("\r\n", Some(5e-324)),
    ];
    let back = through_csv(&records);
    assert_eq!(back, records);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(
            a.parsed_value.map(f64::to_bits),
            b.parsed_value.map(f64::to_bits)
        );
    }
}

#[test]
fn records_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let records: Vec<_> = (1..=5)
        .map(|i| ElicitationRecord {
            t: i,
            ..record("x", Some(i as f64 * 1.5))
        })
        .collect();
    write_records_csv(&records, &path).unwrap();
    assert_eq!(read_records(&path).unwrap(), records);
    assert!(leftovers(dir.path()).is_empty());
}

#[test]
fn manifest_round_trips_beside_its_records() {
    let dir = tempfile::tempdir().unwrap();
    let cakes = ScenarioRegistry::default().get("cakes").unwrap().clone();
    let config = serde_json::json!({"model": "m", "temperature": 0.0, "replicates": 2});
    let manifest = RunManifest::new(&cakes, "m", 0.0, 2, &config);
    let records = vec![record("20", Some(20.0))];
    let (mpath, rpath) = write_records(&manifest, &records, dir.path()).unwrap();
    assert_eq!(mpath, manifest.manifest_path(dir.path()));
    assert_eq!(read_manifest(&mpath).unwrap(), manifest);
    assert_eq!(read_records(&rpath).unwrap(), records);
    assert_eq!(manifest.t_grid.t_min, 10);
    assert_eq!(manifest.t_grid.t_max, 70);
    assert_eq!(manifest.config_hash.len(), 64);
}

#[test]
fn nothing_is_written_for_an_empty_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    assert!(matches!(
        write_records_csv(&[], &path),
        Err(StoreError::NothingToWrite)
    ));
    assert!(!path.exists());
}

#[test]
fn a_failed_write_leaves_no_file_behind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    let result = atomic_write(&path, |w| {
        w.write_all(&[b'x'; 1 << 16]).unwrap();
        Err(StoreError::NothingToWrite)
    });
    assert!(result.is_err());
    assert!(!path.exists());
    assert!(leftovers(dir.path()).is_empty());
}

#[test]
fn a_failed_rewrite_keeps_the_previous_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let old = vec![record("old", Some(1.0))];
    write_records_csv(&old, &path).unwrap();
    let before = std::fs::read(&path).unwrap();
    let result = atomic_write(&path, |w| {
        records_to_writer(&[record("new", Some(2.0))], &mut *w)?;
        Err(StoreError::NothingToWrite)
    });
    assert!(result.is_err());
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert!(leftovers(dir.path()).is_empty());
}

#[test]
fn writing_into_a_missing_directory_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent").join("records.csv");
    assert!(matches!(
        write_records_csv(&[record("1", Some(1.0))], &path),
        Err(StoreError::Io { .. })
    ));
}

#[test]
fn truncated_and_mislabelled_files_are_rejected() {
    let mut buf = Vec::new();
    records_to_writer(&[record("1", Some(1.0))], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let renamed = text.replacen("raw_response", "response", 1);
    assert!(matches!(
        records_from_reader(renamed.as_bytes()),
        Err(StoreError::Header { index: 3, .. })
    ));
    let cut = &text[..text.rfind(',').unwrap()];
    assert!(matches!(
        records_from_reader(cut.as_bytes()),
        Err(StoreError::Row { line: 2, .. })
    ));
}

fn values(p: &FitParams) -> Vec<f64> {
    match *p {
        FitParams::PowerLaw { gamma } => vec![gamma],
        FitParams::Erlang { beta } => vec![beta],
        FitParams::Gaussian { mu, sigma } => vec![mu, sigma],
    }
}

fn sample_fits() -> Vec<FitResult> {
    vec![
        FitResult {
            family: Family::Erlang,
            params: FitParams::Erlang {
                beta: 18.090000000123,
            },
            mse: 1.0 / 3.0,
            n: 13,
            boundary_flag: false,
        },
        FitResult {
            family: Family::PowerLaw,
            params: FitParams::PowerLaw { gamma: 1.2 },
            mse: 0.0,
            n: 13,
            boundary_flag: false,
        },
        FitResult {
            family: Family::Gaussian,
            params: FitParams::Gaussian {
                mu: 1e-7,
                sigma: 123456789.123,
            },
            mse: 2.5e-12,
            n: 13,
            boundary_flag: true,
        },
    ]
}

#[test]
fn fit_json_round_trips_at_nine_digits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    let fits = sample_fits();
    write_fit(&fits, &path).unwrap();
    let back = read_fit(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in fits.iter().zip(&back) {
        assert_eq!(
            (a.family, a.n, a.boundary_flag),
            (b.family, b.n, b.boundary_flag)
        );
        assert!((a.mse - b.mse).abs() <= 5e-9 * a.mse.abs());
        let (pa, pb) = (values(&a.params), values(&b.params));
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() <= 5e-9 * x.abs(), "{x} {y}");
        }
    }
    // a second pass is a fixed point
    assert_eq!(
        fits_to_json(&back).unwrap(),
        std::fs::read_to_string(&path).unwrap()
    );
}

fn timestamp() -> impl Strategy<Value = DateTime<Utc>> {
    (0i64..4_102_444_800, 0u32..1_000_000_000).prop_map(|(s, ns)| Utc.timestamp_opt(s, ns).unwrap())
}

fn any_record() -> impl Strategy<Value = ElicitationRecord> {
    (
        "[a-z-]{1,12}",
        -1000i64..100_000,
        0u32..50,
        any::<String>(),
        prop::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())),
        any::<bool>(),
        "[ -~]{0,20}",
        timestamp(),
    )
        .prop_map(
            |(
                scenario_id,
                t,
                replicate,
                raw_response,
                parsed_value,
                valid,
                model_id,
                timestamp,
            )| {
                ElicitationRecord {
                    scenario_id,
                    t,
                    replicate,
                    raw_response,
                    parsed_value,
                    valid,
                    model_id,
                    timestamp,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn any_records_round_trip_bit_exactly(records in prop::collection::vec(any_record(), 1..8)) {
        let back = through_csv(&records);
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            prop_assert_eq!(a, b);
            prop_assert_eq!(a.parsed_value.map(f64::to_bits), b.parsed_value.map(f64::to_bits));
        }
    }
}
