#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use prior_lens_core::elicitation::mock::{MockScript, MockServer};

pub const KEY: &str = "test-key";

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_with(args: &[&str], key: Option<&str>, dir: &Path) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prior-lens"));
    cmd.args(args)
        .current_dir(dir)
        .env_remove("PRIOR_LENS_API_KEY")
        .env_remove("RUST_LOG");
    if let Some(key) = key {
        cmd.env("PRIOR_LENS_API_KEY", key);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn run_in(dir: &Path, args: &[&str]) -> Run {
    run_with(args, None, dir)
}

pub fn mock(reply: &str, failures: &[u16]) -> MockServer {
    MockServer::start(MockScript {
        reply: reply.into(),
        failures: failures.to_vec(),
        api_key: Some(KEY.into()),
    })
    .expect("mock starts")
}

/// Runs `elicit` for cakes against `server`; returns the run and the records file.
pub fn elicit_cakes(server: &MockServer, dir: &Path) -> (Run, Option<PathBuf>) {
    let url = server.url();
    let out = dir.join("runs");
    let args = [
        "elicit",
        "--scenario",
        "cakes",
        "--endpoint",
        &url,
        "--model",
        "mock-model",
        "--retry-base-ms",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    let run = run_with(&args, Some(KEY), dir);
    let records = std::fs::read_dir(&out).ok().and_then(|entries| {
        entries
            .map(|e| e.unwrap().path())
            .find(|p| p.to_string_lossy().ends_with(".records.csv"))
    });
    (run, records)
}

/// The records CSV with every timestamp replaced by the epoch.
pub fn normalize_timestamps(csv: &str) -> String {
    let mut lines = csv.lines();
    let mut out = format!("{}\n", lines.next().unwrap_or_default());
    for line in lines {
        let (head, _) = line.rsplit_once(',').expect("timestamp column");
        out.push_str(head);
        out.push_str(",1970-01-01T00:00:00Z\n");
    }
    out
}

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/cakes.records.csv")
}
