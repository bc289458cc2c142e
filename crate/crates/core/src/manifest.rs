//! Run manifests and CSV record output for the experiment harnesses.

use std::io::Write;
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::rng::RNG_ID;

/// First 16 hex digits of the SHA-256 of the config's JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// `git describe` of the working tree, or the crate version outside a checkout.
pub fn artifact_version() -> String {
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty());
    match described {
        Some(d) => format!("{} ({d})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_owned(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareNote {
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl HardwareNote {
    pub fn current() -> Self {
        HardwareNote {
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub rng: String,
    pub artifact: String,
    pub hardware: HardwareNote,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new<C: Serialize, S: Serialize>(command: &str, config: &C, seed: u64, summary: &S) -> Self {
        RunManifest {
            command: command.to_owned(),
            config: serde_json::to_value(config).expect("config serializes"),
            config_hash: config_hash(config),
            seed,
            rng: RNG_ID.to_owned(),
            artifact: artifact_version(),
            hardware: HardwareNote::current(),
            summary: serde_json::to_value(summary).expect("summary serializes"),
        }
    }
}

/// A record type that can be written as one CSV row.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn row(&self) -> Vec<String>;
}

pub fn write_records_csv<W: Write, R: CsvRecord>(writer: W, records: &[R]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(R::header())?;
    for r in records {
        wtr.write_record(r.row())?;
    }
    wtr.flush()?;
    Ok(())
}
