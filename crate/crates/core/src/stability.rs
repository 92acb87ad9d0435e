//! Stability matrix, Perron data, Lyapunov functions and the drift check.
//!
//! The Lyapunov function is `V = V1(x) + V2(y)` with
//! `V2(y) = exp(sum_ij m_ij |y_ij|)`, `m_ij = kappa_i / alpha_ij`, and
//! `V1 = x^2` (exponential frame) or `V1 = 1 + |x|^m` (polynomial frame).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::matrix::SquareMatrix;
use crate::model::{KernelMatrix, ModelSpec, State};
use crate::rng::open_uniform;

/// Iteration cap of the power method.
pub const MAX_POWER_ITERATIONS: usize = 100_000;
/// Largest exponent `sum m_ij |y_ij|` accepted by [`lyapunov_value`].
pub const MAX_EXPONENT: f64 = 700.0;
/// Tolerance on the Perron residual `||kappa H - rho kappa||_inf`.
pub const PERRON_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("matrix entry ({i}, {j}) = {value} is negative or not finite")]
    InvalidEntry { i: usize, j: usize, value: f64 },
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("Perron residual {0:e} exceeds tolerance")]
    PerronResidual(f64),
    #[error("V is not differentiable at y[{i}][{j}] = 0")]
    ZeroMemoryCoordinate { i: usize, j: usize },
    #[error("V is not differentiable at x = 0 in the polynomial frame")]
    ZeroPosition,
    #[error("Lyapunov exponent {0} exceeds {MAX_EXPONENT}")]
    Overflow(f64),
    #[error("state has dimension {found}, model has M = {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("column {column} has repeated decay rates at rows {first} and {second}")]
    RepeatedDecayRate { column: usize, first: usize, second: usize },
    #[error("column {index} out of range for M = {dim}")]
    ColumnOutOfRange { index: usize, dim: usize },
    #[error("invalid argument `{0}`")]
    InvalidArgument(&'static str),
}

/// `H_ij = gamma_j |c_ij| / alpha_ij`.
pub fn build_h(model: &ModelSpec) -> SquareMatrix {
    let gamma = model.lipschitz_constants();
    let k = model.kernel();
    SquareMatrix::from_fn(model.dim(), |i, j| gamma[j] * k.c()[(i, j)].abs() / k.alpha()[(i, j)])
}

fn check_nonnegative(h: &SquareMatrix) -> Result<(), StabilityError> {
    match h.iter().find(|&(_, v)| !(v.is_finite() && v >= 0.0)) {
        Some(((i, j), value)) => Err(StabilityError::InvalidEntry { i, j, value }),
        None => Ok(()),
    }
}

/// Power iteration on `A + s I` with `s = ||A||_inf`. The shift moves every
/// eigenvalue into the disc of radius `rho` around `s`, so `rho + s` is the
/// unique eigenvalue of maximal modulus even for periodic matrices. Returns
/// `rho` and the right Perron vector, normalised to unit sum.
fn perron(a: &SquareMatrix) -> Result<(f64, Vec<f64>), StabilityError> {
    check_nonnegative(a)?;
    let n = a.dim();
    let shift = a.inf_norm();
    if shift == 0.0 {
        return Ok((0.0, vec![1.0 / n as f64; n]));
    }
    let mut x = vec![1.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_POWER_ITERATIONS {
        let ax = a.right_mul(&x);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            next[i] = ax[i] + shift * x[i];
            // Collatz-Wielandt bounds; x stays strictly positive thanks to the shift
            let r = next[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = next.iter().copied().fold(0.0, f64::max);
        let mut delta = 0.0f64;
        for i in 0..n {
            let v = next[i] / norm;
            delta = delta.max((v - x[i]).abs());
            x[i] = v;
        }
        let converged_bounds = hi - lo <= 1e-14 * hi;
        // reducible matrices: the lower bound may stall, but the vector settles
        let converged_vector = delta <= 1e-15;
        if converged_bounds || converged_vector {
            let rho = if converged_bounds { 0.5 * (hi + lo) - shift } else { hi - shift };
            let sum: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= sum);
            return Ok((rho.max(0.0), x));
        }
    }
    Err(StabilityError::NoConvergence(MAX_POWER_ITERATIONS))
}

/// Spectral radius of a nonnegative matrix.
pub fn spectral_radius(h: &SquareMatrix) -> Result<f64, StabilityError> {
    perron(h).map(|(rho, _)| rho)
}

/// Left Perron vector `kappa`: nonnegative, unit `l1` norm, `kappa H = rho kappa`.
pub fn perron_left_vector(h: &SquareMatrix) -> Result<Vec<f64>, StabilityError> {
    perron_pair(h).map(|(_, kappa)| kappa)
}

fn perron_pair(h: &SquareMatrix) -> Result<(f64, Vec<f64>), StabilityError> {
    let (rho, kappa) = perron(&h.transpose())?;
    let res = perron_residual(h, rho, &kappa);
    if res > PERRON_TOLERANCE * h.inf_norm().max(1.0) {
        return Err(StabilityError::PerronResidual(res));
    }
    Ok((rho, kappa))
}

/// `||kappa H - rho kappa||_inf`.
pub fn perron_residual(h: &SquareMatrix, rho: f64, kappa: &[f64]) -> f64 {
    h.left_mul(kappa)
        .iter()
        .zip(kappa)
        .map(|(a, k)| (a - rho * k).abs())
        .fold(0.0, f64::max)
}

/// Perron data of a model's stability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityData {
    pub h: SquareMatrix,
    pub rho: f64,
    pub kappa: Vec<f64>,
    /// Lyapunov weights `m_ij = kappa_i / alpha_ij`.
    pub m: SquareMatrix,
}

impl StabilityData {
    pub fn from_model(model: &ModelSpec) -> Result<Self, StabilityError> {
        let h = build_h(model);
        let (rho, kappa) = perron_pair(&h)?;
        let alpha = model.kernel().alpha();
        let m = SquareMatrix::from_fn(model.dim(), |i, j| kappa[i] / alpha[(i, j)]);
        Ok(Self { h, rho, kappa, m })
    }

    pub fn is_stable(&self) -> bool {
        self.rho < 1.0
    }

    pub fn residual(&self) -> f64 {
        perron_residual(&self.h, self.rho, &self.kappa)
    }

    /// `sum_ij m_ij |y_ij|`.
    pub fn exponent(&self, y: &SquareMatrix) -> f64 {
        self.m.as_slice().iter().zip(y.as_slice()).map(|(m, v)| m * v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovSpec {
    /// `V = x^2 + V2(y)`.
    Exponential,
    /// `V = 1 + |x|^m + V2(y)`.
    Polynomial { m: f64 },
}

impl LyapunovSpec {
    /// `alpha = 2 / m` in the polynomial frame, `None` otherwise.
    pub fn alpha_exp(&self) -> Option<f64> {
        match *self {
            LyapunovSpec::Exponential => None,
            LyapunovSpec::Polynomial { m } => Some(2.0 / m),
        }
    }

    /// Warning when the polynomial exponent lies outside `(2, 1 + 2 gamma / sigma_1^2)`.
    /// The exponent is user input; nothing is rejected.
    pub fn polynomial_warning(&self, gamma: f64, sigma1: f64) -> Option<String> {
        let LyapunovSpec::Polynomial { m } = *self else {
            return None;
        };
        let upper = 1.0 + 2.0 * gamma / (sigma1 * sigma1);
        if m > 2.0 && m < upper {
            None
        } else {
            Some(format!("poly_m = {m} lies outside the admissible interval (2, {upper})"))
        }
    }

    fn v1(&self, x: f64) -> f64 {
        match *self {
            LyapunovSpec::Exponential => x * x,
            LyapunovSpec::Polynomial { m } => 1.0 + libm::pow(x.abs(), m),
        }
    }

    fn dv1(&self, x: f64) -> (f64, f64) {
        match *self {
            LyapunovSpec::Exponential => (2.0 * x, 2.0),
            LyapunovSpec::Polynomial { m } => {
                let ax = x.abs();
                (
                    m * x.signum() * libm::pow(ax, m - 1.0),
                    m * (m - 1.0) * libm::pow(ax, m - 2.0),
                )
            }
        }
    }
}

/// Evaluates `V(z)`. Fails when `sum m_ij |y_ij|` exceeds [`MAX_EXPONENT`];
/// use [`log_lyapunov_value`] in the far field.
pub fn lyapunov_value(spec: &LyapunovSpec, stab: &StabilityData, z: &State) -> Result<f64, StabilityError> {
    check_dim(stab, z)?;
    let e = stab.exponent(&z.y);
    if e > MAX_EXPONENT {
        return Err(StabilityError::Overflow(e));
    }
    Ok(spec.v1(z.x) + libm::exp(e))
}

/// `ln V(z)`, finite for every finite state.
pub fn log_lyapunov_value(spec: &LyapunovSpec, stab: &StabilityData, z: &State) -> Result<f64, StabilityError> {
    check_dim(stab, z)?;
    Ok(log_add(libm::log(spec.v1(z.x)), stab.exponent(&z.y)))
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + libm::log1p(libm::exp(lo - hi))
    }
}

fn check_dim(stab: &StabilityData, z: &State) -> Result<(), StabilityError> {
    if z.y.dim() != stab.m.dim() {
        return Err(StabilityError::DimensionMismatch {
            expected: stab.m.dim(),
            found: z.y.dim(),
        });
    }
    Ok(())
}

/// The generator split into its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorTerms {
    /// `b(x) V1'(x)`.
    pub drift: f64,
    /// `sigma(x)^2 V1''(x) / 2`.
    pub diffusion: f64,
    /// `sum_j lambda_j (V1(x + a(x)) - V1(x))`.
    pub x_jump: f64,
    /// `-sum_ij alpha_ij y_ij dV/dy_ij`.
    pub flow: f64,
    /// `sum_j lambda_j (V2(y + Delta_j) - V2(y))`.
    pub y_jump: f64,
}

impl GeneratorTerms {
    pub fn total(&self) -> f64 {
        self.drift + self.diffusion + self.x_jump + self.flow + self.y_jump
    }
}

/// Generator split as `x_part + V2 * y_factor`, so that ratios against `V`
/// stay finite when `V2` does not fit in a double.
struct Split {
    x_part: GeneratorTerms,
    flow_factor: f64,
    jump_factor: f64,
    v1: f64,
    exponent: f64,
}

fn split(model: &ModelSpec, spec: &LyapunovSpec, stab: &StabilityData, z: &State) -> Result<Split, StabilityError> {
    check_dim(stab, z)?;
    if let Some(((i, j), _)) = z.y.iter().find(|&(_, v)| v == 0.0) {
        return Err(StabilityError::ZeroMemoryCoordinate { i, j });
    }
    if matches!(spec, LyapunovSpec::Polynomial { .. }) && z.x == 0.0 {
        return Err(StabilityError::ZeroPosition);
    }
    let co = model.coefficients();
    let kernel = model.kernel();
    let n = model.dim();
    let x = z.x;
    let (d1, d2) = spec.dv1(x);
    let sigma = co.diffusion.eval(x);
    let v1 = spec.v1(x);
    let dv1_jump = spec.v1(x + co.jump.eval(x)) - v1;

    let lambda: Vec<f64> = model
        .rates()
        .iter()
        .enumerate()
        .map(|(i, f)| f.eval(z.y.row_sum(i)))
        .collect();
    let total: f64 = lambda.iter().sum();

    let mut flow_factor = 0.0;
    for ((i, j), v) in z.y.iter() {
        flow_factor -= kernel.alpha()[(i, j)] * stab.m[(i, j)] * v.abs();
    }
    let mut jump_factor = 0.0;
    for (j, lam) in lambda.iter().enumerate() {
        let mut de = 0.0;
        for i in 0..n {
            let y = z.y[(i, j)];
            de += stab.m[(i, j)] * ((y + kernel.c()[(i, j)]).abs() - y.abs());
        }
        jump_factor += lam * libm::expm1(de);
    }

    Ok(Split {
        x_part: GeneratorTerms {
            drift: co.drift.eval(x) * d1,
            diffusion: 0.5 * sigma * sigma * d2,
            x_jump: total * dv1_jump,
            flow: 0.0,
            y_jump: 0.0,
        },
        flow_factor,
        jump_factor,
        v1,
        exponent: stab.exponent(&z.y),
    })
}

/// Terms of `A V(z)`. Refuses states where `V` is not differentiable and
/// states whose `V2` would overflow.
pub fn generator_terms(
    model: &ModelSpec,
    spec: &LyapunovSpec,
    stab: &StabilityData,
    z: &State,
) -> Result<GeneratorTerms, StabilityError> {
    let s = split(model, spec, stab, z)?;
    if s.exponent > MAX_EXPONENT {
        return Err(StabilityError::Overflow(s.exponent));
    }
    let v2 = libm::exp(s.exponent);
    Ok(GeneratorTerms {
        flow: v2 * s.flow_factor,
        y_jump: v2 * s.jump_factor,
        ..s.x_part
    })
}

/// `A V(z)`.
pub fn generator_apply(
    model: &ModelSpec,
    spec: &LyapunovSpec,
    stab: &StabilityData,
    z: &State,
) -> Result<f64, StabilityError> {
    generator_terms(model, spec, stab, z).map(|t| t.total())
}

/// `A V(z) / W(z)` with `W = V` (exponential frame) or `W = V^(1 - alpha)`
/// (polynomial frame), together with `ln W(z)`. Finite in the far field.
pub fn generator_ratio(
    model: &ModelSpec,
    spec: &LyapunovSpec,
    stab: &StabilityData,
    z: &State,
) -> Result<(f64, f64), StabilityError> {
    let s = split(model, spec, stab, z)?;
    let x_total = s.x_part.total();
    let ln_v1 = libm::log(s.v1);
    let ln_v = log_add(ln_v1, s.exponent);
    // g / V = x_total / V + (V2 / V) * y_factor
    let share_v2 = libm::exp(s.exponent - ln_v);
    let ratio_v = x_total * libm::exp(-ln_v) + share_v2 * (s.flow_factor + s.jump_factor);
    Ok(match spec.alpha_exp() {
        None => (ratio_v, ln_v),
        // g / V^(1-alpha) = (g / V) V^alpha
        Some(a) => (ratio_v * libm::exp(a * ln_v), (1.0 - a) * ln_v),
    })
}

/// Sampling box of the drift scan: `x` uniform in `[-x_max, x_max]`, every
/// `y_ij` uniform in `[-y_max, y_max]`, exact zeros redrawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRegion {
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftScanOptions {
    pub n_points: usize,
    pub seed: u64,
    /// `d2` is this fraction of the far-field decay rate.
    pub d2_margin: f64,
    /// `d1` is this multiple of the calibration maximum of `g + d2 W`.
    pub d1_inflation: f64,
}

impl DriftScanOptions {
    pub fn new(n_points: usize, seed: u64) -> Self {
        Self {
            n_points,
            seed,
            d2_margin: 0.9,
            d1_inflation: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftViolation {
    pub state: State,
    pub generator: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftScanReport {
    /// `None` when no positive `d2` exists on the far field.
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    /// `max g / W` over the far-field calibration points.
    pub far_field_max_ratio: f64,
    pub points: usize,
    pub validated: usize,
    /// Largest `A V` seen over the scan (saturates at infinity).
    pub max_generator: f64,
    pub violations: Vec<DriftViolation>,
}

impl DriftScanReport {
    pub fn holds(&self) -> bool {
        self.d2.is_some_and(|d| d > 0.0) && self.violations.is_empty()
    }
}

/// Numerical check of `A V <= d1 - d2 W`.
///
/// Points alternate between a calibration half and a validation half. On
/// the calibration half, the far field is the set of points where `W` is at
/// least its median; `d2` is `d2_margin * (-max g/W)` over the far field and
/// `d1` is `d1_inflation * max (g + d2 W)^+`. Violations are validation
/// points with `g > d1 - d2 W` beyond a relative tolerance of `1e-9`.
pub fn drift_scan(
    model: &ModelSpec,
    spec: &LyapunovSpec,
    stab: &StabilityData,
    region: ScanRegion,
    opts: &DriftScanOptions,
) -> Result<DriftScanReport, StabilityError> {
    if !(region.x_max.is_finite() && region.x_max > 0.0) {
        return Err(StabilityError::InvalidArgument("region.x_max"));
    }
    if !(region.y_max.is_finite() && region.y_max > 0.0) {
        return Err(StabilityError::InvalidArgument("region.y_max"));
    }
    if opts.n_points < 4 {
        return Err(StabilityError::InvalidArgument("n_points"));
    }
    let n = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut draw = |half: f64| loop {
        let v = (2.0 * open_uniform(&mut rng) - 1.0) * half;
        if v != 0.0 {
            return v;
        }
    };

    struct Point {
        state: State,
        ratio: f64,
        ln_w: f64,
    }
    let mut points = Vec::with_capacity(opts.n_points);
    for _ in 0..opts.n_points {
        let x = draw(region.x_max);
        let y = SquareMatrix::from_fn(n, |_, _| draw(region.y_max));
        let state = State::new(x, y);
        let (ratio, ln_w) = generator_ratio(model, spec, stab, &state)?;
        points.push(Point { state, ratio, ln_w });
    }

    let value = |p: &Point| p.ratio * libm::exp(p.ln_w);
    let max_generator = points.iter().map(value).fold(f64::NEG_INFINITY, f64::max);

    let calibration: Vec<&Point> = points.iter().step_by(2).collect();
    let mut ln_ws: Vec<f64> = calibration.iter().map(|p| p.ln_w).collect();
    ln_ws.sort_by(f64::total_cmp);
    let median = ln_ws[ln_ws.len() / 2];
    let far_field_max_ratio = calibration
        .iter()
        .filter(|p| p.ln_w >= median)
        .map(|p| p.ratio)
        .fold(f64::NEG_INFINITY, f64::max);

    let validated = points.len() / 2;
    if !(far_field_max_ratio < 0.0) {
        return Ok(DriftScanReport {
            d1: None,
            d2: None,
            far_field_max_ratio,
            points: points.len(),
            validated,
            max_generator,
            violations: Vec::new(),
        });
    }
    let d2 = -opts.d2_margin * far_field_max_ratio;
    // g + d2 W = W (g/W + d2)
    let excess = |p: &Point| {
        let e = p.ratio + d2;
        if e > 0.0 {
            e * libm::exp(p.ln_w)
        } else {
            0.0
        }
    };
    let d1 = opts.d1_inflation * calibration.iter().map(|p| excess(p)).fold(0.0, f64::max);

    let violations = points
        .iter()
        .skip(1)
        .step_by(2)
        .filter_map(|p| {
            let w = libm::exp(p.ln_w);
            let g = p.ratio * w;
            let bound = d1 - d2 * w;
            let tol = 1e-9 * g.abs().max(d1).max(d2 * w).max(1.0);
            (g > bound + tol).then(|| DriftViolation {
                state: p.state.clone(),
                generator: g,
                bound,
            })
        })
        .collect();

    Ok(DriftScanReport {
        d1: Some(d1),
        d2: Some(d2),
        far_field_max_ratio,
        points: points.len(),
        validated,
        max_generator,
        violations,
    })
}

/// Matrix with rows `(z_i^(M-1), ..., z_i, 1)` where `z_i = exp(-alpha_i t0)`.
pub fn vandermonde_matrix(alphas: &[f64], t0: f64) -> SquareMatrix {
    let n = alphas.len();
    SquareMatrix::from_fn(n, |i, k| libm::exp(-alphas[i] * t0 * (n - 1 - k) as f64))
}

/// Determinant of [`vandermonde_matrix`] by LU factorisation. No distinctness
/// check: coinciding rates give zero.
pub fn vandermonde_determinant(alphas: &[f64], t0: f64) -> f64 {
    vandermonde_matrix(alphas, t0).determinant()
}

/// Closed form `prod_{i<k} (z_i - z_k)`.
pub fn vandermonde_product(alphas: &[f64], t0: f64) -> f64 {
    let z: Vec<f64> = alphas.iter().map(|a| libm::exp(-a * t0)).collect();
    let mut p = 1.0;
    for i in 0..z.len() {
        for k in i + 1..z.len() {
            p *= z[i] - z[k];
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VandermondeCheck {
    pub column: usize,
    pub t0: f64,
    pub determinant: f64,
    /// The same determinant from the product formula.
    pub product: f64,
    pub invertible: bool,
}

/// Vandermonde determinant of the decay rates of column `column`. Every entry
/// of the matrix lies in `(0, 1]`, so the invertibility threshold `1e-12` is
/// already relative to the matrix scale.
pub fn vandermonde_check(kernel: &KernelMatrix, column: usize, t0: f64) -> Result<VandermondeCheck, StabilityError> {
    let dim = kernel.dim();
    if column >= dim {
        return Err(StabilityError::ColumnOutOfRange { index: column, dim });
    }
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(StabilityError::InvalidArgument("t0"));
    }
    let alphas = kernel.alpha().column(column);
    for first in 0..dim {
        for second in first + 1..dim {
            if alphas[first] == alphas[second] {
                return Err(StabilityError::RepeatedDecayRate { column, first, second });
            }
        }
    }
    let determinant = vandermonde_determinant(&alphas, t0);
    Ok(VandermondeCheck {
        column,
        t0,
        determinant,
        product: vandermonde_product(&alphas, t0),
        invertible: determinant.abs() > 1e-12,
    })
}
