use std::path::PathBuf;

use hjs_core::diagnostics::{autocorr_decay, grid_series, invariant_histogram, MIN_BATCHES};
use hjs_core::{path_seed, simulate_path, time_average, Observable, SimOptions};
use serde::Serialize;
use serde_json::json;

use super::{cell, load, write_json, write_text, Outcome};
use crate::manifest::{manifest_path_for, RunManifest, Stopwatch};

/// Interval on which the histogram reports its smallest bin mass.
pub const POSITIVITY_COMPACT: (f64, f64) = (-1.0, 1.0);
/// Longest autocorrelation lag, in time units.
pub const MAX_LAG_TIME: f64 = 2.0;
pub const ACF_LAGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObservableArg {
    /// g(z) = x
    X,
    /// g(z) = x^2
    X2,
    /// g(z) = total jump rate
    Rate,
}

impl From<ObservableArg> for Observable {
    fn from(g: ObservableArg) -> Self {
        match g {
            ObservableArg::X => Observable::X,
            ObservableArg::X2 => Observable::XSquared,
            ObservableArg::Rate => Observable::TotalRate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct ErgodicArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub horizon: f64,
    /// Burn-in time; defaults to the model file's fraction of the horizon.
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long, value_enum, default_value_t = ObservableArg::X)]
    pub g: ObservableArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Histogram bins for the X marginal.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub value: f64,
    pub standard_error: f64,
    pub batch_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub bin_edges: Vec<f64>,
    pub bin_masses: Vec<f64>,
    pub positivity_compact: [f64; 2],
    pub min_mass_on_compact: f64,
    pub samples: u64,
    pub outside: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrReport {
    pub lag_times: Vec<f64>,
    pub acf: Vec<f64>,
    pub rate: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub observable: ObservableArg,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub path_seed: u64,
    pub events: usize,
    pub grid_dt: f64,
    pub estimate: EstimateReport,
    pub histogram: Option<HistogramReport>,
    pub autocorrelation: Option<AutocorrReport>,
    pub notes: Vec<String>,
}

pub(crate) fn analyse(args: &ErgodicArgs) -> anyhow::Result<(ErgodicReport, super::Loaded)> {
    anyhow::ensure!(args.horizon.is_finite() && args.horizon > 0.0, "--horizon must be finite and > 0");
    anyhow::ensure!(args.bins >= 1, "--bins must be >= 1");
    let loaded = load(&args.config, None)?;
    let burn_in = args.burn_in.unwrap_or(loaded.cfg.run.burn_in_fraction * args.horizon);
    anyhow::ensure!(burn_in >= 0.0 && burn_in < args.horizon, "--burn-in must lie in [0, horizon)");

    let seed = path_seed(args.seed, 0);
    let path = simulate_path(&loaded.model, args.horizon, &loaded.integrator, seed, &SimOptions::default())?;
    let g: Observable = args.g.into();
    let rates = loaded.model.rates();
    let est = time_average(&path, &g, rates, burn_in, MIN_BATCHES)?;
    let mut notes = Vec::new();

    let xs = grid_series(&path, &Observable::X, rates, burn_in);
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let histogram = match invariant_histogram(xs.iter().copied(), args.bins, (lo.min(-1.0), hi.max(1.0)), POSITIVITY_COMPACT) {
        Ok(h) => Some(HistogramReport {
            bin_edges: h.bin_edges,
            bin_masses: h.bin_masses,
            positivity_compact: [h.positivity_compact.0, h.positivity_compact.1],
            min_mass_on_compact: h.min_mass_on_compact,
            samples: h.samples,
            outside: h.outside,
        }),
        Err(e) => {
            notes.push(format!("histogram unavailable: {e}"));
            None
        }
    };

    let dt = loaded.integrator.grid_dt;
    let series = grid_series(&path, &g, rates, burn_in);
    let step = ((MAX_LAG_TIME / ACF_LAGS as f64) / dt).round().max(1.0) as usize;
    let lags: Vec<usize> = (1..=ACF_LAGS).map(|k| k * step).collect();
    let autocorrelation = match autocorr_decay(&series, dt, &lags) {
        Ok(a) => Some(AutocorrReport {
            rate: a.rate(),
            intercept: a.fit.map(|f| f.intercept),
            r2: a.fit.map(|f| f.r2),
            lag_times: a.lag_times,
            acf: a.acf,
        }),
        Err(e) => {
            notes.push(format!("autocorrelation unavailable: {e}"));
            None
        }
    };

    let report = ErgodicReport {
        observable: args.g,
        horizon: args.horizon,
        burn_in,
        seed: args.seed,
        path_seed: seed,
        events: path.event_count(),
        grid_dt: dt,
        estimate: EstimateReport {
            value: est.value,
            standard_error: est.standard_error,
            batch_count: est.batch_count,
        },
        histogram,
        autocorrelation,
        notes,
    };
    Ok((report, loaded))
}

/// `lag,acf,fit` rows of the autocorrelation curve.
pub fn acf_csv(report: &ErgodicReport) -> String {
    let mut out = String::from("lag,acf,fit\n");
    if let Some(a) = &report.autocorrelation {
        let fit = a.rate.zip(a.intercept);
        for (t, r) in a.lag_times.iter().zip(&a.acf) {
            let f = fit.map(|(rate, c)| (c - rate * t).exp());
            out.push_str(&format!("{t},{r},{}\n", cell(f)));
        }
    }
    out
}

pub fn csv_path_for(out: &std::path::Path) -> PathBuf {
    out.with_extension("csv")
}

/// Single-path run; the worker count is not used.
pub fn run(args: &ErgodicArgs) -> anyhow::Result<Outcome> {
    let clock = Stopwatch::start();
    let (report, loaded) = analyse(args)?;
    write_json(&args.out, &report)?;
    let csv = csv_path_for(&args.out);
    write_text(&csv, &acf_csv(&report))?;
    let outputs = vec![args.out.clone(), csv];
    let manifest_path = manifest_path_for(&args.out);
    RunManifest::new(
        "ergodic-test",
        json!({
            "horizon": args.horizon,
            "burn_in": report.burn_in,
            "g": args.g,
            "bins": args.bins,
            "grid_dt": report.grid_dt,
        }),
        &loaded.path,
        &loaded.cfg,
        loaded.model.digest(),
        Some(args.seed),
        vec![report.path_seed],
        1,
        clock,
        outputs.iter().map(|p| p.display().to_string()).collect(),
    )
    .write(&manifest_path)?;
    Ok(Outcome {
        command: "ergodic-test",
        outputs,
        manifest: manifest_path,
    })
}
