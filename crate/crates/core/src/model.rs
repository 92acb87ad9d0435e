//! Parametric model description: rate functions, exponential kernels,
//! diffusion coefficients and the jump map, together with the ergodicity
//! frame classification.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use sha2::{Digest, Sha256};

use crate::matrix::SquareMatrix;
use crate::stability;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("dimension mismatch for `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
}

impl ModelError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Jump rate `f_i` of one Hawkes component, as a function of the summed
/// memory `u = sum_j y_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFunction {
    /// `max(floor, intercept + slope * u)`.
    AffineClipped { floor: f64, intercept: f64, slope: f64 },
    /// `max / (1 + exp(-steepness * (u - center)))`.
    Sigmoid { max: f64, steepness: f64, center: f64 },
    Constant { level: f64 },
}

impl RateFunction {
    pub fn validate(&self, field: &str) -> Result<(), ModelError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::invalid(format!("{field}.{name}"), "must be finite"))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::invalid(format!("{field}.{name}"), "must be > 0"))
            }
        };
        match *self {
            RateFunction::AffineClipped { floor, intercept, slope } => {
                positive("floor", floor)?;
                finite("intercept", intercept)?;
                finite("slope", slope)
            }
            RateFunction::Sigmoid { max, steepness, center } => {
                positive("max", max)?;
                positive("steepness", steepness)?;
                finite("center", center)
            }
            RateFunction::Constant { level } => positive("level", level),
        }
    }

    /// Evaluates the rate. Always strictly positive for a valid function.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            RateFunction::AffineClipped { floor, intercept, slope } => {
                let v = intercept + slope * u;
                // NaN-free max: a NaN argument falls back to the floor
                if v > floor {
                    v
                } else {
                    floor
                }
            }
            RateFunction::Sigmoid { max, steepness, center } => {
                let v = max / (1.0 + libm::exp(-steepness * (u - center)));
                // the logistic tail underflows to 0 below about -745/steepness
                v.max(f64::MIN_POSITIVE)
            }
            RateFunction::Constant { level } => level,
        }
    }

    /// Smallest global Lipschitz constant of the family.
    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            RateFunction::AffineClipped { slope, .. } => slope.abs(),
            // L k s (1 - s) is maximal at s = 1/2
            RateFunction::Sigmoid { max, steepness, .. } => max * steepness / 4.0,
            RateFunction::Constant { .. } => 0.0,
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match *self {
            RateFunction::AffineClipped { slope, .. } => slope >= 0.0,
            RateFunction::Sigmoid { .. } | RateFunction::Constant { .. } => true,
        }
    }
}

/// Exponential memory kernels `h_ij(t) = c_ij exp(-alpha_ij t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    c: SquareMatrix,
    alpha: SquareMatrix,
}

impl KernelMatrix {
    pub fn new(c: SquareMatrix, alpha: SquareMatrix) -> Result<Self, ModelError> {
        if c.dim() != alpha.dim() {
            return Err(ModelError::DimensionMismatch {
                field: "kernel.alpha".into(),
                expected: c.dim() * c.dim(),
                found: alpha.dim() * alpha.dim(),
            });
        }
        for ((i, j), v) in c.iter() {
            if !v.is_finite() {
                return Err(ModelError::invalid(format!("kernel.c[{i}][{j}]"), "must be finite"));
            }
        }
        for ((i, j), v) in alpha.iter() {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::invalid(
                    format!("kernel.alpha[{i}][{j}]"),
                    "decay rate must be finite and > 0",
                ));
            }
        }
        Ok(Self { c, alpha })
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn c(&self) -> &SquareMatrix {
        &self.c
    }

    pub fn alpha(&self) -> &SquareMatrix {
        &self.alpha
    }

    /// Largest absolute jump amplitude.
    pub fn max_abs_c(&self) -> f64 {
        self.c.max_abs()
    }

    /// True when column `j` has a zero amplitude or two equal decay rates.
    pub fn column_is_degenerate(&self, j: usize) -> bool {
        let m = self.dim();
        (0..m).any(|i| self.c[(i, j)] == 0.0)
            || (0..m).any(|i| (i + 1..m).any(|k| self.alpha[(i, j)] == self.alpha[(k, j)]))
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.column_is_degenerate(j)).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        (0..self.dim()).any(|j| self.column_is_degenerate(j))
    }
}

/// Drift coefficient `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    /// `b(x) = -beta * x + offset`. A negative `beta` gives a repelling drift.
    Linear { beta: f64, offset: f64 },
    /// Bounded smooth drift `b(x) = -amplitude * tanh(x / scale) + offset`.
    Tanh { amplitude: f64, scale: f64, offset: f64 },
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Linear { beta, offset } => -beta * x + offset,
            Drift::Tanh { amplitude, scale, offset } => -amplitude * libm::tanh(x / scale) + offset,
        }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            Drift::Linear { beta, .. } => beta.abs(),
            Drift::Tanh { amplitude, scale, .. } => amplitude.abs() / scale,
        }
    }

    /// `lim inf_{|x|->inf} -b(x)/x`; zero for bounded drifts.
    pub fn asymptotic_slope(&self) -> f64 {
        match *self {
            Drift::Linear { beta, .. } => beta,
            Drift::Tanh { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Drift::Linear { beta, offset } => {
                if !beta.is_finite() {
                    return Err(ModelError::invalid("coefficients.drift.beta", "must be finite"));
                }
                if !offset.is_finite() {
                    return Err(ModelError::invalid("coefficients.drift.offset", "must be finite"));
                }
            }
            Drift::Tanh { amplitude, scale, offset } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(ModelError::invalid("coefficients.drift.amplitude", "must be >= 0"));
                }
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(ModelError::invalid("coefficients.drift.scale", "must be > 0"));
                }
                if !offset.is_finite() {
                    return Err(ModelError::invalid("coefficients.drift.offset", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Diffusion coefficient `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusion {
    /// Constant `sigma`; zero is accepted (a degenerate, noiseless model)
    /// but reported as violating the ellipticity bounds.
    Constant { sigma: f64 },
    /// `sigma(x) = low + (high - low) * x^2 / (1 + x^2)`, with values in `[low, high)`.
    SmoothBounded { low: f64, high: f64 },
}

impl Diffusion {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Diffusion::Constant { sigma } => sigma,
            Diffusion::SmoothBounded { low, high } => {
                let x2 = x * x;
                low + (high - low) * x2 / (1.0 + x2)
            }
        }
    }

    /// Bounds `(sigma_0, sigma_1)` with `sigma_0 <= sigma(x)^2 <= sigma_1`.
    pub fn squared_bounds(&self) -> (f64, f64) {
        match *self {
            Diffusion::Constant { sigma } => (sigma * sigma, sigma * sigma),
            Diffusion::SmoothBounded { low, high } => (low * low, high * high),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Diffusion::Constant { sigma } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(ModelError::invalid("coefficients.diffusion.sigma", "must be >= 0"));
                }
            }
            Diffusion::SmoothBounded { low, high } => {
                if !(low.is_finite() && low > 0.0) {
                    return Err(ModelError::invalid("coefficients.diffusion.low", "must be > 0"));
                }
                if !(high.is_finite() && high >= low) {
                    return Err(ModelError::invalid("coefficients.diffusion.high", "must be >= low"));
                }
            }
        }
        Ok(())
    }
}

/// Jump map `a`: at every Hawkes event `x -> x + a(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpMap {
    Constant { value: f64 },
    /// `a(x) = -eta * x` with `0 <= eta <= 2`.
    LinearDamping { eta: f64 },
    /// `a(x) = coefficient * (1 + x^2)^(exponent / 2)` with `exponent < 1`.
    PowerBounded { coefficient: f64, exponent: f64 },
}

impl JumpMap {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            JumpMap::Constant { value } => value,
            JumpMap::LinearDamping { eta } => -eta * x,
            JumpMap::PowerBounded { coefficient, exponent } => {
                coefficient * libm::pow(1.0 + x * x, exponent / 2.0)
            }
        }
    }

    /// Constants `(C, eta)` with `|a(x)| <= C |x|^eta` for `|x| >= 1` and
    /// `eta < 1`, when the family admits them.
    pub fn power_bound(&self) -> Option<(f64, f64)> {
        match *self {
            JumpMap::Constant { value } => Some((value.abs(), 0.0)),
            JumpMap::LinearDamping { eta } if eta == 0.0 => Some((0.0, 0.0)),
            JumpMap::LinearDamping { .. } => None,
            JumpMap::PowerBounded { coefficient, exponent } => {
                let scale = if exponent > 0.0 { libm::pow(2.0, exponent / 2.0) } else { 1.0 };
                Some((coefficient.abs() * scale, exponent))
            }
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            JumpMap::Constant { value } => {
                if !value.is_finite() {
                    return Err(ModelError::invalid("coefficients.jump.value", "must be finite"));
                }
            }
            JumpMap::LinearDamping { eta } => {
                if !(0.0..=2.0).contains(&eta) {
                    return Err(ModelError::invalid("coefficients.jump.eta", "must lie in [0, 2]"));
                }
            }
            JumpMap::PowerBounded { coefficient, exponent } => {
                if !coefficient.is_finite() {
                    return Err(ModelError::invalid("coefficients.jump.coefficient", "must be finite"));
                }
                if !(exponent.is_finite() && exponent < 1.0) {
                    return Err(ModelError::invalid("coefficients.jump.exponent", "must be < 1"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSpec {
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub jump: JumpMap,
    /// Growth exponent of the second derivatives of `b` and `sigma`. Kept for
    /// completeness; nothing evaluates it.
    pub growth_exponent: Option<f64>,
}

impl CoefficientSpec {
    pub fn new(drift: Drift, diffusion: Diffusion, jump: JumpMap) -> Self {
        Self {
            drift,
            diffusion,
            jump,
            growth_exponent: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.drift.validate()?;
        self.diffusion.validate()?;
        self.jump.validate()?;
        if let Some(q) = self.growth_exponent {
            if !(q.is_finite() && q > 0.0) {
                return Err(ModelError::invalid("coefficients.growth_exponent", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Markov state `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: f64,
    pub y: SquareMatrix,
}

impl State {
    pub fn new(x: f64, y: SquareMatrix) -> Self {
        Self { x, y }
    }

    pub fn at_rest(x: f64, dim: usize) -> Self {
        Self {
            x,
            y: SquareMatrix::zeros(dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Full parametric description of the coupled process.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    rates: Vec<RateFunction>,
    kernel: KernelMatrix,
    coefficients: CoefficientSpec,
    initial: State,
}

impl ModelSpec {
    pub fn new(
        rates: Vec<RateFunction>,
        kernel: KernelMatrix,
        coefficients: CoefficientSpec,
        initial: State,
    ) -> Result<Self, ModelError> {
        let m = rates.len();
        if m == 0 {
            return Err(ModelError::invalid("M", "must be a positive integer"));
        }
        for (i, f) in rates.iter().enumerate() {
            f.validate(&format!("rates[{i}]"))?;
        }
        if kernel.dim() != m {
            return Err(ModelError::DimensionMismatch {
                field: "kernel.c".into(),
                expected: m * m,
                found: kernel.dim() * kernel.dim(),
            });
        }
        coefficients.validate()?;
        Self::check_initial(&initial, m)?;
        Ok(Self {
            rates,
            kernel,
            coefficients,
            initial,
        })
    }

    fn check_initial(initial: &State, m: usize) -> Result<(), ModelError> {
        if initial.y.dim() != m {
            return Err(ModelError::DimensionMismatch {
                field: "initial.y".into(),
                expected: m * m,
                found: initial.y.dim() * initial.y.dim(),
            });
        }
        if !initial.x.is_finite() {
            return Err(ModelError::invalid("initial.x", "must be finite"));
        }
        for ((i, j), v) in initial.y.iter() {
            if !v.is_finite() {
                return Err(ModelError::invalid(format!("initial.y[{i}][{j}]"), "must be finite"));
            }
        }
        Ok(())
    }

    /// Same model started from another state.
    pub fn with_initial(&self, initial: State) -> Result<Self, ModelError> {
        Self::check_initial(&initial, self.dim())?;
        Ok(Self {
            initial,
            ..self.clone()
        })
    }

    /// Number of Hawkes components `M`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[RateFunction] {
        &self.rates
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn coefficients(&self) -> &CoefficientSpec {
        &self.coefficients
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.rates.iter().map(RateFunction::lipschitz_constant).collect()
    }

    /// SHA-256 over a canonical little-endian encoding of every parameter.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let mut put = |tag: u8, values: &[f64]| {
            h.update([tag]);
            for v in values {
                h.update(v.to_le_bytes());
            }
        };
        put(0, &[self.dim() as f64]);
        for f in &self.rates {
            match *f {
                RateFunction::AffineClipped { floor, intercept, slope } => put(1, &[floor, intercept, slope]),
                RateFunction::Sigmoid { max, steepness, center } => put(2, &[max, steepness, center]),
                RateFunction::Constant { level } => put(3, &[level]),
            }
        }
        put(10, self.kernel.c.as_slice());
        put(11, self.kernel.alpha.as_slice());
        let co = &self.coefficients;
        match co.drift {
            Drift::Linear { beta, offset } => put(20, &[beta, offset]),
            Drift::Tanh { amplitude, scale, offset } => put(21, &[amplitude, scale, offset]),
        }
        match co.diffusion {
            Diffusion::Constant { sigma } => put(30, &[sigma]),
            Diffusion::SmoothBounded { low, high } => put(31, &[low, high]),
        }
        match co.jump {
            JumpMap::Constant { value } => put(40, &[value]),
            JumpMap::LinearDamping { eta } => put(41, &[eta]),
            JumpMap::PowerBounded { coefficient, exponent } => put(42, &[coefficient, exponent]),
        }
        if let Some(q) = co.growth_exponent {
            put(50, &[q]);
        }
        put(60, &[self.initial.x]);
        put(61, self.initial.y.as_slice());
        h.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Exponential,
    Polynomial,
    Neither,
}

/// Which of the two jump conditions certified the exponential frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpCondition {
    /// `2 x a(x) + a(x)^2 <= 0` beyond the witness radius.
    Contracting,
    /// `|a(x)| <= C |x|^eta` with `eta < 1`.
    PowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameWitness {
    Exponential { d: f64, r: f64, jump: JumpCondition },
    Polynomial { gamma: f64, r: f64, m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub frame: Frame,
    pub witness: Option<FrameWitness>,
    /// `(sigma_0, sigma_1)` bounds on `sigma^2`.
    pub sigma_bounds: (f64, f64),
    pub sigma_bounds_ok: bool,
    pub spectral_radius: Option<f64>,
    pub stability_ok: bool,
    pub degenerate_kernel: bool,
    /// First grid point violating the exponential-frame inequalities when
    /// the model is classified `Neither`.
    pub violation: Option<f64>,
    pub notes: Vec<String>,
}

/// Classifies the model into the exponential or polynomial ergodicity frame
/// by evaluating the frame inequalities on a symmetric grid over
/// `[-scan_radius, scan_radius]`.
///
/// The witness radius `r` is searched among grid radii up to
/// `scan_radius / 2`, so at least half of the scanned interval is always
/// checked. A positive `d` is required for the exponential frame, and bounded
/// drifts never qualify for it since `-x b(x) / x^2 -> 0`.
pub fn check_assumptions(
    model: &ModelSpec,
    scan_radius: f64,
    grid_points: usize,
) -> Result<AssumptionReport, ModelError> {
    if !(scan_radius.is_finite() && scan_radius > 0.0) {
        return Err(ModelError::invalid("scan_radius", "must be finite and > 0"));
    }
    if grid_points < 2 {
        return Err(ModelError::invalid("grid_points", "must be >= 2"));
    }
    let co = model.coefficients();
    let grid: Vec<f64> = (0..grid_points)
        .map(|k| -scan_radius + 2.0 * scan_radius * k as f64 / (grid_points - 1) as f64)
        .collect();
    let mut radii: Vec<f64> = grid
        .iter()
        .map(|x| x.abs())
        .filter(|&r| r <= scan_radius / 2.0)
        .collect();
    radii.push(0.0);
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let mut notes = Vec::new();
    let (sigma0, sigma1) = co.diffusion.squared_bounds();
    let sigma_bounds_ok = sigma0 > 0.0 && sigma1.is_finite();
    if !sigma_bounds_ok {
        notes.push(String::from("sigma^2 is not bounded away from zero"));
    }

    let slope = co.drift.asymptotic_slope();
    if slope <= 0.0 {
        notes.push(String::from(
            "drift has no positive asymptotic slope; exponential frame needs x b(x) <= -d x^2 with d > 0",
        ));
    }

    let mut frame = Frame::Neither;
    let mut witness = None;
    let mut violation = None;

    for &r in &radii {
        match exponential_at(co, &grid, r) {
            Ok((d, jump)) if slope > 0.0 => {
                frame = Frame::Exponential;
                witness = Some(FrameWitness::Exponential { d: d.min(slope), r, jump });
                break;
            }
            Ok(_) => {}
            Err(x) => violation = Some(x),
        }
    }

    if frame == Frame::Neither {
        for &r in &radii {
            if let Some((gamma, m)) = polynomial_at(co, &grid, r, sigma1) {
                frame = Frame::Polynomial;
                witness = Some(FrameWitness::Polynomial { gamma, r, m });
                break;
            }
        }
    }
    if frame != Frame::Neither {
        violation = None;
    } else if violation.is_none() {
        // every exponential check passed on the grid but the drift slope guard failed
        violation = grid.iter().copied().find(|&x| x != 0.0 && x * co.drift.eval(x) >= 0.0);
    }

    let degenerate_kernel = model.kernel().is_degenerate();
    if degenerate_kernel {
        notes.push(format!(
            "degenerate kernel columns {:?} (zero amplitude or repeated decay rate)",
            model.kernel().degenerate_columns()
        ));
    }

    let h = stability::build_h(model);
    let (spectral_radius, stability_ok) = match stability::spectral_radius(&h) {
        Ok(rho) => (Some(rho), rho < 1.0),
        Err(e) => {
            notes.push(format!("spectral radius unavailable: {e}"));
            (None, false)
        }
    };

    Ok(AssumptionReport {
        frame,
        witness,
        sigma_bounds: (sigma0, sigma1),
        sigma_bounds_ok,
        spectral_radius,
        stability_ok,
        degenerate_kernel,
        violation,
        notes,
    })
}

/// Checks the exponential-frame inequalities on grid points with `|x| > r`.
/// Returns the witness `d` and the jump condition used, or the first
/// violating point.
fn exponential_at(co: &CoefficientSpec, grid: &[f64], r: f64) -> Result<(f64, JumpCondition), f64> {
    let mut d = f64::INFINITY;
    let mut contracting = true;
    let mut first_contracting_failure = None;
    let mut power = co.jump.power_bound();
    let mut first_power_failure = None;
    for &x in grid.iter().filter(|x| x.abs() > r) {
        let xb = x * co.drift.eval(x);
        if xb >= 0.0 {
            return Err(x);
        }
        d = d.min(-xb / (x * x));
        let a = co.jump.eval(x);
        if contracting && 2.0 * x * a + a * a > 1e-12 * x * x {
            contracting = false;
            first_contracting_failure = Some(x);
        }
        if let Some((c, eta)) = power {
            if a.abs() > c * libm::pow(x.abs(), eta) * (1.0 + 1e-12) {
                power = None;
                first_power_failure = Some(x);
            }
        }
    }
    if !d.is_finite() {
        // no grid point beyond r
        return Err(r);
    }
    if contracting {
        Ok((d, JumpCondition::Contracting))
    } else if power.is_some() {
        Ok((d, JumpCondition::PowerBound))
    } else {
        let x = match (first_contracting_failure, first_power_failure) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => r,
        };
        Err(x)
    }
}

/// Polynomial frame at radius `r`: returns `(gamma, m)` when it holds.
fn polynomial_at(co: &CoefficientSpec, grid: &[f64], r: f64, sigma1: f64) -> Option<(f64, f64)> {
    let mut gamma = f64::INFINITY;
    for &x in grid.iter().filter(|x| x.abs() > r) {
        gamma = gamma.min(-x * co.drift.eval(x));
        // |x + a|^m <= |x|^m  <=>  |x + a| <= |x| for any m > 0
        if (x + co.jump.eval(x)).abs() > x.abs() * (1.0 + 1e-12) {
            return None;
        }
    }
    if !gamma.is_finite() || gamma <= sigma1 / 2.0 {
        return None;
    }
    let upper = 1.0 + 2.0 * gamma / (sigma1 * sigma1);
    if upper <= 2.0 {
        return None;
    }
    Some((gamma, 0.5 * (2.0 + upper.min(4.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_dim(drift: Drift, jump: JumpMap) -> ModelSpec {
        ModelSpec::new(
            vec![RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 }],
            KernelMatrix::new(SquareMatrix::filled(1, 0.5), SquareMatrix::filled(1, 1.0)).unwrap(),
            CoefficientSpec::new(drift, Diffusion::Constant { sigma: 1.0 }, jump),
            State::at_rest(0.0, 1),
        )
        .unwrap()
    }

    #[test]
    fn rate_eval_examples() {
        let f = RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 };
        assert_eq!(f.eval(2.0), 3.0);
        assert_eq!(f.eval(-10.0), 0.1);
        let s = RateFunction::Sigmoid { max: 2.0, steepness: 1.0, center: 0.0 };
        assert_eq!(s.eval(0.0), 1.0);
        assert!(s.eval(-1e6) > 0.0);
    }

    #[test]
    fn lipschitz_examples() {
        let f = RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 };
        assert_eq!(f.lipschitz_constant(), 1.0);
        assert_eq!(RateFunction::Constant { level: 3.0 }.lipschitz_constant(), 0.0);
        let s = RateFunction::Sigmoid { max: 2.0, steepness: 1.0, center: 0.0 };
        assert_eq!(s.lipschitz_constant(), 0.5);
    }

    #[test]
    fn sigmoid_lipschitz_matches_numerical_slope_maximum() {
        // oracle: finite-difference slope maximised over a fine grid
        let s = RateFunction::Sigmoid { max: 2.0, steepness: 1.0, center: 0.0 };
        let h = 1e-6;
        let max_slope = (-4000..=4000)
            .map(|k| k as f64 * 1e-3)
            .map(|u| (s.eval(u + h) - s.eval(u - h)) / (2.0 * h))
            .fold(0.0, f64::max);
        assert!((max_slope - 0.5).abs() < 1e-8);
    }

    #[test]
    fn kernel_rejects_nonpositive_alpha_with_field_path() {
        let err = KernelMatrix::new(SquareMatrix::filled(2, 1.0), SquareMatrix::from_rows([[1.0, 1.0], [0.0, 2.0]]))
            .unwrap_err();
        assert_eq!(
            err,
            ModelError::InvalidParameter {
                field: "kernel.alpha[1][0]".into(),
                reason: "decay rate must be finite and > 0".into()
            }
        );
    }

    #[test]
    fn degenerate_columns_are_flagged() {
        let k = KernelMatrix::new(
            SquareMatrix::from_rows([[1.0, 0.0], [1.0, 1.0]]),
            SquareMatrix::from_rows([[1.0, 2.0], [1.5, 3.0]]),
        )
        .unwrap();
        assert_eq!(k.degenerate_columns(), vec![1]);
        let k = KernelMatrix::new(
            SquareMatrix::from_rows([[1.0, 1.0], [1.0, 1.0]]),
            SquareMatrix::from_rows([[1.0, 2.0], [1.0, 3.0]]),
        )
        .unwrap();
        assert_eq!(k.degenerate_columns(), vec![0]);
    }

    #[test]
    fn model_rejects_dimension_mismatch() {
        let err = ModelSpec::new(
            vec![RateFunction::Constant { level: 1.0 }],
            KernelMatrix::new(SquareMatrix::zeros(2), SquareMatrix::filled(2, 1.0)).unwrap(),
            CoefficientSpec::new(
                Drift::Linear { beta: 1.0, offset: 0.0 },
                Diffusion::Constant { sigma: 1.0 },
                JumpMap::Constant { value: 0.0 },
            ),
            State::at_rest(0.0, 2),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn frame_exponential_via_contracting_jumps() {
        let m = one_dim(Drift::Linear { beta: 1.0, offset: 0.0 }, JumpMap::LinearDamping { eta: 0.5 });
        let rep = check_assumptions(&m, 10.0, 201).unwrap();
        assert_eq!(rep.frame, Frame::Exponential);
        match rep.witness {
            Some(FrameWitness::Exponential { d, jump, .. }) => {
                assert!((d - 1.0).abs() < 1e-12);
                assert_eq!(jump, JumpCondition::Contracting);
            }
            other => panic!("unexpected witness {other:?}"),
        }
        assert!(rep.stability_ok);
        assert!(rep.sigma_bounds_ok);
    }

    #[test]
    fn frame_exponential_via_power_bound() {
        let m = one_dim(Drift::Linear { beta: 1.0, offset: 0.0 }, JumpMap::Constant { value: 1.0 });
        let rep = check_assumptions(&m, 10.0, 201).unwrap();
        assert_eq!(rep.frame, Frame::Exponential);
        assert!(matches!(
            rep.witness,
            Some(FrameWitness::Exponential { jump: JumpCondition::PowerBound, .. })
        ));
    }

    #[test]
    fn repelling_drift_is_neither() {
        let m = one_dim(Drift::Linear { beta: -1.0, offset: 0.0 }, JumpMap::LinearDamping { eta: 0.5 });
        let rep = check_assumptions(&m, 10.0, 201).unwrap();
        assert_eq!(rep.frame, Frame::Neither);
        assert!(rep.violation.is_some());
    }

    #[test]
    fn bounded_drift_lands_in_polynomial_frame() {
        let m = one_dim(
            Drift::Tanh { amplitude: 2.0, scale: 1.0, offset: 0.0 },
            JumpMap::LinearDamping { eta: 0.5 },
        );
        let rep = check_assumptions(&m, 20.0, 401).unwrap();
        assert_eq!(rep.frame, Frame::Polynomial);
        match rep.witness {
            Some(FrameWitness::Polynomial { gamma, m, .. }) => {
                assert!(gamma > 0.5);
                assert!(m > 2.0 && m < 1.0 + 2.0 * gamma);
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn offset_drift_needs_a_positive_witness_radius() {
        let m = one_dim(Drift::Linear { beta: 1.0, offset: 3.0 }, JumpMap::LinearDamping { eta: 0.5 });
        let rep = check_assumptions(&m, 20.0, 401).unwrap();
        assert_eq!(rep.frame, Frame::Exponential);
        match rep.witness {
            Some(FrameWitness::Exponential { r, d, .. }) => {
                assert!(r >= 3.0 && r <= 10.0, "r = {r}");
                assert!(d > 0.0);
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn check_assumptions_rejects_bad_arguments() {
        let m = one_dim(Drift::Linear { beta: 1.0, offset: 0.0 }, JumpMap::Constant { value: 0.0 });
        assert!(check_assumptions(&m, 0.0, 10).is_err());
        assert!(check_assumptions(&m, -1.0, 10).is_err());
        assert!(check_assumptions(&m, 1.0, 1).is_err());
    }

    #[test]
    fn digest_changes_with_parameters() {
        let a = one_dim(Drift::Linear { beta: 1.0, offset: 0.0 }, JumpMap::Constant { value: 0.0 });
        let b = one_dim(Drift::Linear { beta: 1.0, offset: 1e-9 }, JumpMap::Constant { value: 0.0 });
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
