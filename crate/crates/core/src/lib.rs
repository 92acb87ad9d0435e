//! Simulation and stability analysis of a one-dimensional diffusion whose
//! jumps are driven by a multivariate nonlinear Hawkes process with
//! exponential memory kernels.
//!
//! The coupled process `Z = (X, Y)` is Markov: `Y` is the `M x M` memory
//! matrix, decaying as `dY_ij = -alpha_ij Y_ij dt` between events and gaining
//! `c_ij` when component `j` fires, and component `i` fires at rate
//! `f_i(sum_j Y_ij)`. At every event `X` jumps by `a(X-)`.
//!
//! The crate is `no_std` with `alloc`; IO and the command line live in the
//! companion `hjs` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod diffusion;
pub mod engine;
pub mod intensity;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod stability;

pub use diagnostics::{
    invariant_histogram, mixing_curve, time_average, DensityEstimate, DiagnosticsError, ErgodicEstimate,
    MixingCurve, Observable,
};
pub use diffusion::{advance_diffusion, apply_x_jump, DiffusionError, IntegratorConfig, Scheme};
pub use engine::{
    advance_state, next_event, simulate_path, simulate_path_reference, EngineError, Event, Path, SampleKind,
    SimOptions, SkeletonSample,
};
pub use intensity::{dominating_bound, intensities, total_rate, IntensityError, IntensityVector};
pub use matrix::SquareMatrix;
pub use model::{
    check_assumptions, AssumptionReport, CoefficientSpec, Diffusion, Drift, Frame, FrameWitness, JumpMap,
    KernelMatrix, ModelError, ModelSpec, RateFunction, State,
};
pub use rng::{path_seed, PathRng};
pub use stability::{
    build_h, drift_scan, generator_apply, lyapunov_value, perron_left_vector, spectral_radius, vandermonde_check,
    LyapunovSpec, StabilityData, StabilityError,
};
