use std::path::PathBuf;

use hjs_core::stability::{drift_scan, vandermonde_determinant, vandermonde_product, DriftScanOptions, ScanRegion};
use hjs_core::{check_assumptions, vandermonde_check, Frame, FrameWitness, LyapunovSpec, StabilityData, StabilityError};
use serde::Serialize;
use serde_json::json;

use super::{load, rows, write_json, Outcome};
use crate::manifest::{manifest_path_for, RunManifest, Stopwatch};

/// Grid resolution of the frame classification.
pub const FRAME_GRID_POINTS: usize = 4001;
/// Horizons at which the Vandermonde determinants are evaluated.
pub const VANDERMONDE_T0: [f64; 2] = [0.1, 1.0];

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Half-width of the scanned box for x and every y_ij.
    #[arg(long, default_value_t = 20.0)]
    pub scan_radius: f64,
    /// Number of states sampled by the drift scan.
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WitnessReport {
    Exponential { d: f64, r: f64, jump: String },
    Polynomial { gamma: f64, r: f64, m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub x: f64,
    pub y: Vec<Vec<f64>>,
    pub generator: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub lyapunov: LyapunovReport,
    pub region: [f64; 2],
    pub points: usize,
    pub validated: usize,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub far_field_max_ratio: f64,
    pub max_generator: f64,
    pub holds: bool,
    pub violations: Vec<ViolationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VandermondeReport {
    /// 1-based column.
    pub column: usize,
    pub t0: f64,
    pub determinant: f64,
    pub product: f64,
    pub invertible: bool,
    /// 1-based rows sharing a decay rate, when any.
    pub repeated: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    #[serde(rename = "M")]
    pub m_dim: usize,
    pub model_digest: String,
    pub h: Vec<Vec<f64>>,
    pub rho: Option<f64>,
    pub kappa: Option<Vec<f64>>,
    pub lyapunov_weights: Option<Vec<Vec<f64>>>,
    pub perron_residual: Option<f64>,
    pub stability_ok: bool,
    pub frame: &'static str,
    pub witness: Option<WitnessReport>,
    pub sigma_bounds: [f64; 2],
    pub sigma_bounds_ok: bool,
    pub degenerate_kernel: bool,
    pub frame_violation_at: Option<f64>,
    pub drift_scan: Option<DriftReport>,
    pub vandermonde: Vec<VandermondeReport>,
    pub notes: Vec<String>,
}

pub fn analyse(args: &StabilityArgs, model: &hjs_core::ModelSpec, poly_m: Option<f64>) -> anyhow::Result<StabilityReport> {
    anyhow::ensure!(
        args.scan_radius.is_finite() && args.scan_radius > 0.0,
        "--scan-radius must be finite and > 0"
    );
    anyhow::ensure!(args.points >= 4, "--points must be >= 4");
    let assumptions = check_assumptions(model, args.scan_radius, FRAME_GRID_POINTS)?;
    let mut notes = assumptions.notes.clone();

    let stab = match StabilityData::from_model(model) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(format!("Perron data unavailable: {e}"));
            None
        }
    };

    let spec = match (assumptions.frame, assumptions.witness) {
        (Frame::Exponential, _) => Some(LyapunovSpec::Exponential),
        (Frame::Polynomial, Some(FrameWitness::Polynomial { m, gamma, .. })) => {
            let spec = LyapunovSpec::Polynomial { m: poly_m.unwrap_or(m) };
            notes.extend(spec.polynomial_warning(gamma, assumptions.sigma_bounds.1));
            Some(spec)
        }
        _ => {
            notes.push("no Lyapunov frame applies; drift scan skipped".into());
            None
        }
    };

    let drift = match (spec, &stab) {
        (Some(spec), Some(stab)) => {
            let region = ScanRegion {
                x_max: args.scan_radius,
                y_max: args.scan_radius,
            };
            let r = drift_scan(model, &spec, stab, region, &DriftScanOptions::new(args.points, args.seed))?;
            if r.d2.is_none() {
                notes.push("A V / V is not negative on the far field; no d2 > 0 exists on this scan".into());
            }
            Some(DriftReport {
                lyapunov: match spec {
                    LyapunovSpec::Exponential => LyapunovReport {
                        kind: "exponential",
                        m: None,
                    },
                    LyapunovSpec::Polynomial { m } => LyapunovReport {
                        kind: "polynomial",
                        m: Some(m),
                    },
                },
                region: [region.x_max, region.y_max],
                points: r.points,
                validated: r.validated,
                d1: r.d1,
                d2: r.d2,
                far_field_max_ratio: r.far_field_max_ratio,
                max_generator: r.max_generator,
                holds: r.holds(),
                violations: r
                    .violations
                    .iter()
                    .map(|v| ViolationReport {
                        x: v.state.x,
                        y: rows(&v.state.y),
                        generator: v.generator,
                        bound: v.bound,
                    })
                    .collect(),
            })
        }
        _ => None,
    };

    let kernel = model.kernel();
    let mut vandermonde = Vec::new();
    for j in 0..model.dim() {
        for t0 in VANDERMONDE_T0 {
            vandermonde.push(match vandermonde_check(kernel, j, t0) {
                Ok(c) => VandermondeReport {
                    column: j + 1,
                    t0,
                    determinant: c.determinant,
                    product: c.product,
                    invertible: c.invertible,
                    repeated: None,
                },
                Err(StabilityError::RepeatedDecayRate { first, second, .. }) => {
                    let alphas = kernel.alpha().column(j);
                    VandermondeReport {
                        column: j + 1,
                        t0,
                        determinant: vandermonde_determinant(&alphas, t0),
                        product: vandermonde_product(&alphas, t0),
                        invertible: false,
                        repeated: Some([first + 1, second + 1]),
                    }
                }
                Err(e) => return Err(e.into()),
            });
        }
    }

    Ok(StabilityReport {
        m_dim: model.dim(),
        model_digest: hex::encode(model.digest()),
        h: rows(&hjs_core::build_h(model)),
        rho: stab.as_ref().map(|s| s.rho),
        kappa: stab.as_ref().map(|s| s.kappa.clone()),
        lyapunov_weights: stab.as_ref().map(|s| rows(&s.m)),
        perron_residual: stab.as_ref().map(|s| s.residual()),
        stability_ok: assumptions.stability_ok,
        frame: match assumptions.frame {
            Frame::Exponential => "exponential",
            Frame::Polynomial => "polynomial",
            Frame::Neither => "neither",
        },
        witness: assumptions.witness.map(|w| match w {
            FrameWitness::Exponential { d, r, jump } => WitnessReport::Exponential {
                d,
                r,
                jump: format!("{jump:?}").to_lowercase(),
            },
            FrameWitness::Polynomial { gamma, r, m } => WitnessReport::Polynomial { gamma, r, m },
        }),
        sigma_bounds: [assumptions.sigma_bounds.0, assumptions.sigma_bounds.1],
        sigma_bounds_ok: assumptions.sigma_bounds_ok,
        degenerate_kernel: assumptions.degenerate_kernel,
        frame_violation_at: assumptions.violation,
        drift_scan: drift,
        vandermonde,
        notes,
    })
}

pub fn run(args: &StabilityArgs, threads: usize) -> anyhow::Result<Outcome> {
    let clock = Stopwatch::start();
    let loaded = load(&args.config, None)?;
    let report = analyse(args, &loaded.model, loaded.cfg.run.poly_m)?;
    write_json(&args.out, &report)?;
    let manifest_path = manifest_path_for(&args.out);
    RunManifest::new(
        "check-stability",
        json!({
            "scan_radius": args.scan_radius,
            "points": args.points,
            "frame_grid_points": FRAME_GRID_POINTS,
        }),
        &loaded.path,
        &loaded.cfg,
        loaded.model.digest(),
        Some(args.seed),
        Vec::new(),
        threads,
        clock,
        vec![args.out.display().to_string()],
    )
    .write(&manifest_path)?;
    Ok(Outcome {
        command: "check-stability",
        outputs: vec![args.out.clone()],
        manifest: manifest_path,
    })
}
