use std::path::PathBuf;

use hjs_core::diagnostics::{mixing_curve_from_snapshots, snapshot_path, DEFAULT_MIXING_BINS};
use hjs_core::{path_seed, MixingCurve, PathRng, SimOptions, State};
use serde::Serialize;
use serde_json::json;

use super::{cell, load, write_json, write_text, Outcome};
use crate::config::StateConfig;
use crate::ensemble::collect_ordered;
use crate::manifest::{manifest_path_for, RunManifest, Stopwatch};

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct MixingArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Increasing snapshot times, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub times: Vec<f64>,
    /// Paths per start.
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Histogram bins per retained coordinate.
    #[arg(long, default_value_t = DEFAULT_MIXING_BINS)]
    pub bins: usize,
    /// First start as JSON `{"x": .., "y": [row-major]}`; defaults to the model's initial state.
    #[arg(long)]
    pub start_a: Option<String>,
    /// Second start, same format.
    #[arg(long)]
    pub start_b: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON); the curve goes to the same path with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    /// Fitted decay rate `theta = -slope` of `ln tv` against `t`.
    pub theta: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub start_a: StateConfig,
    pub start_b: StateConfig,
    pub paths: usize,
    pub bins: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    pub noise_floor: Vec<f64>,
    pub fit: Option<FitReport>,
    /// Kendall tau of the fitted points; negative for a decaying curve.
    pub kendall_tau: Option<f64>,
}

/// Two-start curve with the snapshot pairs computed on `threads` workers.
/// Path `p` from the first start uses stream index `2p`, from the second
/// `2p + 1`, so the result matches the sequential estimator exactly.
#[allow(clippy::too_many_arguments)]
pub fn parallel_mixing_curve(
    model: &hjs_core::ModelSpec,
    z_a: &State,
    z_b: &State,
    times: &[f64],
    n_paths: usize,
    bins: usize,
    cfg: &hjs_core::IntegratorConfig,
    seed: u64,
    threads: usize,
) -> anyhow::Result<MixingCurve> {
    anyhow::ensure!(n_paths >= 1, "--paths must be >= 1");
    let opts = SimOptions {
        record_skeleton: false,
        ..SimOptions::default()
    };
    let pairs = collect_ordered(n_paths, threads, |p| {
        let p = p as u64;
        let a = snapshot_path(model, z_a, times, cfg, &mut PathRng::for_path(seed, 2 * p), &opts)?;
        let b = snapshot_path(model, z_b, times, cfg, &mut PathRng::for_path(seed, 2 * p + 1), &opts)?;
        Ok((a, b))
    })?;
    let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(mixing_curve_from_snapshots(times, &a, &b, bins)?)
}

pub fn report(args: &MixingArgs, curve: &MixingCurve, a: &State, b: &State) -> MixingReport {
    MixingReport {
        start_a: StateConfig::from_state(a),
        start_b: StateConfig::from_state(b),
        paths: args.paths,
        bins: args.bins,
        seed: args.seed,
        times: curve.times.clone(),
        tv: curve.tv_estimates.clone(),
        noise_floor: curve.noise_floors.clone(),
        fit: curve.fit.map(|f| FitReport {
            theta: -f.slope,
            intercept: f.intercept,
            r2: f.r2,
            points: f.points,
        }),
        kendall_tau: curve.trend(),
    }
}

/// `t,tv,floor,fit` rows.
pub fn curve_csv(r: &MixingReport) -> String {
    let mut out = String::from("t,tv,floor,fit\n");
    for ((t, tv), floor) in r.times.iter().zip(&r.tv).zip(&r.noise_floor) {
        let fit = r.fit.as_ref().map(|f| (f.intercept - f.theta * t).exp());
        out.push_str(&format!("{t},{tv},{floor},{}\n", cell(fit)));
    }
    out
}

pub fn run(args: &MixingArgs, threads: usize) -> anyhow::Result<Outcome> {
    let clock = Stopwatch::start();
    let loaded = load(&args.config, None)?;
    let m = loaded.model.dim();
    let z_a = match &args.start_a {
        Some(text) => StateConfig::from_json(text, "start_a")?.to_state(m, "start_a")?,
        None => loaded.model.initial().clone(),
    };
    let z_b = StateConfig::from_json(&args.start_b, "start_b")?.to_state(m, "start_b")?;
    let curve = parallel_mixing_curve(
        &loaded.model,
        &z_a,
        &z_b,
        &args.times,
        args.paths,
        args.bins,
        &loaded.integrator,
        args.seed,
        threads,
    )?;
    let rep = report(args, &curve, &z_a, &z_b);
    write_json(&args.out, &rep)?;
    let csv = args.out.with_extension("csv");
    write_text(&csv, &curve_csv(&rep))?;
    let outputs = vec![args.out.clone(), csv];
    let manifest_path = manifest_path_for(&args.out);
    RunManifest::new(
        "mixing-test",
        json!({
            "times": args.times,
            "paths": args.paths,
            "bins": args.bins,
            "start_a": rep.start_a,
            "start_b": rep.start_b,
            "grid_dt": loaded.integrator.grid_dt,
        }),
        &loaded.path,
        &loaded.cfg,
        loaded.model.digest(),
        Some(args.seed),
        (0..2 * args.paths as u64).map(|i| path_seed(args.seed, i)).collect(),
        threads,
        clock,
        outputs.iter().map(|p| p.display().to_string()).collect(),
    )
    .write(&manifest_path)?;
    Ok(Outcome {
        command: "mixing-test",
        outputs,
        manifest: manifest_path,
    })
}
