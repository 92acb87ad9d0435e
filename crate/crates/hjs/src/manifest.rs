//! Run manifests and digests.

use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::formats::write_atomic;

pub const TOOL_NAME: &str = "hjs";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical serialisation of a model file. Fields are
/// written in declaration order and numbers in shortest round-trip form, so
/// the digest does not depend on the layout of the source file or on the
/// platform.
pub fn config_digest(cfg: &ModelConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("model config serialises");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Run-shape parameters of the command.
    pub parameters: serde_json::Value,
    pub config_path: String,
    pub config_digest: String,
    pub model_digest: String,
    pub master_seed: Option<u64>,
    pub path_seeds: Vec<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
    pub outputs: Vec<String>,
}

/// Wall-clock bookkeeping for a manifest.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    started: SystemTime,
    instant: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            started: SystemTime::now(),
            instant: std::time::Instant::now(),
        }
    }

    fn unix(t: SystemTime) -> f64 {
        t.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_secs_f64()
    }

    pub fn started_unix(&self) -> f64 {
        Self::unix(self.started)
    }

    pub fn elapsed(&self) -> f64 {
        self.instant.elapsed().as_secs_f64()
    }
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &str,
        parameters: serde_json::Value,
        config_path: &Path,
        cfg: &ModelConfig,
        model_digest: [u8; 32],
        master_seed: Option<u64>,
        path_seeds: Vec<u64>,
        threads: usize,
        clock: Stopwatch,
        outputs: Vec<String>,
    ) -> Self {
        let elapsed = clock.elapsed();
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            parameters,
            config_path: config_path.display().to_string(),
            config_digest: config_digest(cfg),
            model_digest: hex::encode(model_digest),
            master_seed,
            path_seeds,
            threads,
            started_unix: clock.started_unix(),
            finished_unix: clock.started_unix() + elapsed,
            elapsed_seconds: elapsed,
            outputs,
        }
    }

    pub fn write(&self, target: &Path) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serialises");
        bytes.push(b'\n');
        write_atomic(target, &bytes)
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn manifest_path_for(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
