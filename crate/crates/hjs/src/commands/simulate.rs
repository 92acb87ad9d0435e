use std::path::PathBuf;

use anyhow::Context;
use hjs_core::{path_seed, simulate_path, SimOptions};
use serde_json::json;

use super::{load, Outcome};
use crate::ensemble::run_ordered;
use crate::formats::{write_atomic, PathFormat};
use crate::manifest::{RunManifest, Stopwatch};

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct SimulateArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Time horizon T.
    #[arg(long)]
    pub horizon: f64,
    /// Number of independent paths.
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Master seed; path i uses a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling grid spacing; overrides the model file.
    #[arg(long)]
    pub grid_dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = PathFormat::Jsonl)]
    pub format: PathFormat,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-path cap on accepted events.
    #[arg(long, default_value_t = hjs_core::engine::DEFAULT_MAX_EVENTS)]
    pub max_events: u64,
}

pub fn path_file_name(index: usize, format: PathFormat) -> String {
    format!("path_{index:05}.{}", format.extension())
}

pub fn run(args: &SimulateArgs, threads: usize) -> anyhow::Result<Outcome> {
    let clock = Stopwatch::start();
    anyhow::ensure!(args.horizon.is_finite() && args.horizon > 0.0, "--horizon must be finite and > 0");
    anyhow::ensure!(args.paths >= 1, "--paths must be >= 1");
    let loaded = load(&args.config, args.grid_dt)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let seeds: Vec<u64> = (0..args.paths as u64).map(|i| path_seed(args.seed, i)).collect();
    let opts = SimOptions {
        max_events: args.max_events,
        record_skeleton: true,
    };
    let mut outputs = Vec::with_capacity(args.paths);
    run_ordered(
        args.paths,
        threads,
        |i| {
            let path = simulate_path(&loaded.model, args.horizon, &loaded.integrator, seeds[i], &opts)
                .with_context(|| format!("path {i}"))?;
            Ok(args.format.encode(&path))
        },
        |i, bytes| {
            let target = args.out.join(path_file_name(i, args.format));
            write_atomic(&target, &bytes).with_context(|| format!("writing {}", target.display()))?;
            outputs.push(target);
            Ok(())
        },
    )?;

    let manifest_path = args.out.join("manifest.json");
    RunManifest::new(
        "simulate",
        json!({
            "horizon": args.horizon,
            "paths": args.paths,
            "grid_dt": loaded.integrator.grid_dt,
            "integrator": format!("{:?}", loaded.integrator.scheme),
            "format": args.format,
            "max_events": args.max_events,
        }),
        &loaded.path,
        &loaded.cfg,
        loaded.model.digest(),
        Some(args.seed),
        seeds,
        threads,
        clock,
        outputs.iter().map(|p| p.display().to_string()).collect(),
    )
    .write(&manifest_path)?;
    Ok(Outcome {
        command: "simulate",
        outputs,
        manifest: manifest_path,
    })
}
