//! The four subcommands. Each takes its parsed arguments and a worker
//! count, writes its artifacts plus a manifest, and returns what it wrote.

use std::path::{Path, PathBuf};

use anyhow::Context;
use hjs_core::{IntegratorConfig, ModelSpec, SquareMatrix};
use serde::Serialize;

use crate::config::{parse_config, ModelConfig};
use crate::formats::write_atomic;

pub mod ergodic;
pub mod mixing;
pub mod simulate;
pub mod stability;

/// Files produced by a command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub(crate) struct Loaded {
    pub path: PathBuf,
    pub cfg: ModelConfig,
    pub model: ModelSpec,
    pub integrator: IntegratorConfig,
}

/// Reads the model file, applying a grid spacing from the command line.
pub(crate) fn load(path: &Path, grid_dt: Option<f64>) -> anyhow::Result<Loaded> {
    let mut cfg = parse_config(path)?.model;
    if let Some(dt) = grid_dt {
        cfg.run.grid_dt = dt;
    }
    let integrator = cfg.integrator()?;
    let model = cfg.to_model()?;
    Ok(Loaded {
        path: path.to_path_buf(),
        cfg,
        model,
        integrator,
    })
}

pub(crate) fn rows(m: &SquareMatrix) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

pub(crate) fn write_json(target: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    ensure_parent(target)?;
    write_atomic(target, &bytes).with_context(|| format!("writing {}", target.display()))
}

pub(crate) fn write_text(target: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(target)?;
    write_atomic(target, text.as_bytes()).with_context(|| format!("writing {}", target.display()))
}

fn ensure_parent(target: &Path) -> anyhow::Result<()> {
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Empty CSV cell for a missing number.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
