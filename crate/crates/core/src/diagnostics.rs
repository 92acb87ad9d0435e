//! Empirical checks of ergodicity, invariant-density positivity and mixing.
//!
//! The mixing estimates are proxies: the total variation distance between
//! the laws at time `t` from two starting points, measured on a shared
//! histogram of `(x, row sums of y)`, and the decay of sample
//! autocorrelations. Neither is the full beta-mixing coefficient.

use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::IntegratorConfig;
use crate::engine::{advance_state, EngineError, Path, SimOptions};
use crate::model::{ModelSpec, RateFunction, State};
use crate::rng::PathRng;

/// Minimum number of batches used for batch-means standard errors.
pub const MIN_BATCHES: usize = 20;
/// Default bins per retained coordinate of the mixing histograms.
pub const DEFAULT_MIXING_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("path horizon {horizon} does not exceed the burn-in {burn_in}")]
    TooShort { horizon: f64, burn_in: f64 },
    #[error("no samples to estimate from")]
    Empty,
    #[error("every sample falls into a single histogram cell")]
    DegenerateHistogram,
    #[error("series of length {len} is too short for lag {lag}")]
    InsufficientLength { len: usize, lag: usize },
    #[error("invalid argument `{0}`")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Test functions `g(z)` understood by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Constant(f64),
    X,
    XSquared,
    /// Total jump rate `sum_i f_i(sum_j y_ij)`.
    TotalRate,
    /// Row sum `i` of `y`.
    RowSum(usize),
}

impl Observable {
    pub fn eval(&self, rates: &[RateFunction], x: f64, row_sums: &[f64]) -> f64 {
        match *self {
            Observable::Constant(c) => c,
            Observable::X => x,
            Observable::XSquared => x * x,
            Observable::TotalRate => rates.iter().zip(row_sums).map(|(f, u)| f.eval(*u)).sum(),
            Observable::RowSum(i) => row_sums[i],
        }
    }
}

/// Sum in a fixed binary-tree order, so results do not depend on how the
/// caller chunked the work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicEstimate {
    /// Time average of `g` over `[burn_in, horizon]`.
    pub value: f64,
    pub batch_count: usize,
    /// Standard error from non-overlapping batch means.
    pub standard_error: f64,
    pub burn_in: f64,
    pub horizon: f64,
}

/// Trapezoidal time average of `g` over the skeleton after `burn_in`, with
/// a batch-means standard error over `batches` equal-time batches
/// (at least [`MIN_BATCHES`]).
///
/// The integrand is taken relative to its first post-burn-in value, which
/// makes the average of a constant exact.
pub fn time_average(
    path: &Path,
    g: &Observable,
    rates: &[RateFunction],
    burn_in: f64,
    batches: usize,
) -> Result<ErgodicEstimate, DiagnosticsError> {
    if !(burn_in >= 0.0) {
        return Err(DiagnosticsError::InvalidArgument("burn_in"));
    }
    if path.horizon <= burn_in {
        return Err(DiagnosticsError::TooShort {
            horizon: path.horizon,
            burn_in,
        });
    }
    let batches = batches.max(MIN_BATCHES);
    let span = path.horizon - burn_in;
    let width = span / batches as f64;
    let samples: Vec<(f64, f64)> = path
        .skeleton
        .iter()
        .map(|s| (s.time, g.eval(rates, s.x, &s.row_sums)))
        .collect();
    if samples.len() < 2 {
        return Err(DiagnosticsError::Empty);
    }

    let value_at = |k: usize, t: f64| {
        let (t0, g0) = samples[k];
        let (t1, g1) = samples[k + 1];
        if t1 == t0 {
            g1
        } else {
            g0 + (g1 - g0) * (t - t0) / (t1 - t0)
        }
    };
    let first = samples
        .windows(2)
        .position(|w| w[1].0 > burn_in)
        .ok_or(DiagnosticsError::TooShort {
            horizon: path.horizon,
            burn_in,
        })?;
    let reference = value_at(first, burn_in.max(samples[first].0));

    let mut pieces: Vec<Vec<f64>> = vec![Vec::new(); batches];
    for k in first..samples.len() - 1 {
        let (t0, t1) = (samples[k].0.max(burn_in), samples[k + 1].0);
        if t1 <= t0 {
            continue;
        }
        // split the interval at batch boundaries
        let mut a = t0;
        while a < t1 {
            let b_idx = (((a - burn_in) / width) as usize).min(batches - 1);
            let edge = if b_idx + 1 == batches {
                t1
            } else {
                (burn_in + (b_idx + 1) as f64 * width).min(t1)
            };
            let b = if edge <= a { t1 } else { edge };
            let ga = value_at(k, a) - reference;
            let gb = value_at(k, b) - reference;
            pieces[b_idx].push(0.5 * (ga + gb) * (b - a));
            a = b;
        }
    }
    let integrals: Vec<f64> = pieces.iter().map(|p| pairwise_sum(p)).collect();
    let value = reference + pairwise_sum(&integrals) / span;
    let means: Vec<f64> = integrals.iter().map(|v| reference + v / width).collect();
    let mean_of_means = pairwise_sum(&means) / batches as f64;
    let var = pairwise_sum(&means.iter().map(|m| (m - mean_of_means) * (m - mean_of_means)).collect::<Vec<_>>())
        / (batches - 1) as f64;
    Ok(ErgodicEstimate {
        value,
        batch_count: batches,
        standard_error: libm::sqrt(var / batches as f64),
        burn_in,
        horizon: path.horizon,
    })
}

/// Values of `g` on the regular grid after `burn_in`.
pub fn grid_series(path: &Path, g: &Observable, rates: &[RateFunction], burn_in: f64) -> Vec<f64> {
    path.grid_samples()
        .filter(|s| s.time >= burn_in)
        .map(|s| g.eval(rates, s.x, &s.row_sums))
        .collect()
}

/// Histogram of the `X` marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub bin_edges: Vec<f64>,
    /// Fractions of the in-range samples; they sum to one.
    pub bin_masses: Vec<f64>,
    pub positivity_compact: (f64, f64),
    /// Smallest mass among bins intersecting the compact.
    pub min_mass_on_compact: f64,
    pub samples: u64,
    /// Samples outside the histogram range, excluded from the masses.
    pub outside: u64,
}

impl DensityEstimate {
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let n = self.bin_masses.len();
        let (lo, hi) = (self.bin_edges[0], self.bin_edges[n]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        Some((((x - lo) / (hi - lo) * n as f64) as usize).min(n - 1))
    }
}

/// Pooled histogram of `xs` with `bins` equal bins over `range`.
pub fn invariant_histogram(
    xs: impl IntoIterator<Item = f64>,
    bins: usize,
    range: (f64, f64),
    compact: (f64, f64),
) -> Result<DensityEstimate, DiagnosticsError> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(DiagnosticsError::InvalidArgument("bins"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DiagnosticsError::InvalidArgument("range"));
    }
    if !(compact.0 <= compact.1) {
        return Err(DiagnosticsError::InvalidArgument("compact"));
    }
    let mut counts = vec![0u64; bins];
    let (mut total, mut outside) = (0u64, 0u64);
    let scale = bins as f64 / (hi - lo);
    for x in xs {
        total += 1;
        if !(x >= lo && x <= hi) {
            outside += 1;
            continue;
        }
        counts[(((x - lo) * scale) as usize).min(bins - 1)] += 1;
    }
    let inside = total - outside;
    if inside == 0 {
        return Err(DiagnosticsError::Empty);
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let bin_masses: Vec<f64> = counts.iter().map(|&c| c as f64 / inside as f64).collect();
    let min_mass_on_compact = (0..bins)
        .filter(|&k| bin_edges[k + 1] > compact.0 && bin_edges[k] < compact.1)
        .map(|k| bin_masses[k])
        .fold(f64::INFINITY, f64::min);
    Ok(DensityEstimate {
        bin_edges,
        bin_masses,
        positivity_compact: compact,
        min_mass_on_compact,
        samples: total,
        outside,
    })
}

/// Histogram of the post-burn-in grid samples of `X` pooled over `paths`.
pub fn invariant_histogram_from_paths(
    paths: &[Path],
    burn_in: f64,
    bins: usize,
    range: (f64, f64),
    compact: (f64, f64),
) -> Result<DensityEstimate, DiagnosticsError> {
    if paths.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    let xs = paths
        .iter()
        .flat_map(|p| p.grid_samples())
        .filter(|s| s.time >= burn_in)
        .map(|s| s.x);
    invariant_histogram(xs, bins, range, compact)
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r2: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = pairwise_sum(xs) / n as f64;
    let my = pairwise_sum(ys) / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: n,
    })
}

/// Kendall's tau-b rank correlation.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                _ if (dx > 0.0) == (dy > 0.0) => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let n0 = (conc + disc) as f64;
    let denom = libm::sqrt((n0 + tx as f64) * (n0 + ty as f64));
    (denom > 0.0).then(|| (conc - disc) as f64 / denom)
}

/// Total variation estimate between two samples at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    /// Half the `l1` distance between the two histograms.
    pub tv: f64,
    /// Expected value of the estimate when both samples share one law:
    /// `sum_c sqrt(p_c / (pi n))` with `p_c` the pooled cell mass.
    pub noise_floor: f64,
}

/// Shared-binning histogram distance between point clouds `a` and `b`.
/// Each coordinate is cut into `bins` equal bins over the pooled range;
/// a coordinate with no spread gets a single bin.
pub fn tv_distance(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> Result<TvEstimate, DiagnosticsError> {
    if a.is_empty() || b.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    if bins < 2 {
        return Err(DiagnosticsError::InvalidArgument("bins"));
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|p| p.len() != d) {
        return Err(DiagnosticsError::InvalidArgument("points"));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in a.iter().chain(b) {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let per_coord: Vec<u64> = (0..d).map(|k| if hi[k] > lo[k] { bins as u64 } else { 1 }).collect();
    if per_coord.iter().all(|&n| n == 1) {
        return Err(DiagnosticsError::DegenerateHistogram);
    }
    let cell = |p: &Vec<f64>| {
        let mut id = 0u64;
        for k in 0..d {
            let n = per_coord[k];
            let c = if n == 1 {
                0
            } else {
                (((p[k] - lo[k]) / (hi[k] - lo[k]) * n as f64) as u64).min(n - 1)
            };
            id = id * n + c;
        }
        id
    };
    let mut ca: Vec<u64> = a.iter().map(cell).collect();
    let mut cb: Vec<u64> = b.iter().map(cell).collect();
    ca.sort_unstable();
    cb.sort_unstable();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n_mean = 0.5 * (na + nb);

    let mut diffs = Vec::new();
    let mut floors = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < ca.len() || j < cb.len() {
        let next = match (ca.get(i), cb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let mut ka = 0u64;
        while ca.get(i) == Some(&next) {
            ka += 1;
            i += 1;
        }
        let mut kb = 0u64;
        while cb.get(j) == Some(&next) {
            kb += 1;
            j += 1;
        }
        let (pa, pb) = (ka as f64 / na, kb as f64 / nb);
        diffs.push((pa - pb).abs());
        floors.push(libm::sqrt(0.5 * (pa + pb) / (core::f64::consts::PI * n_mean)));
    }
    Ok(TvEstimate {
        tv: (0.5 * pairwise_sum(&diffs)).clamp(0.0, 1.0),
        noise_floor: pairwise_sum(&floors),
    })
}

/// Two-start total variation decay.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    pub times: Vec<f64>,
    pub tv_estimates: Vec<f64>,
    pub noise_floors: Vec<f64>,
    /// Fit of `ln tv = ln c - theta t` over the points above their noise floor.
    pub fit: Option<LinearFit>,
}

impl MixingCurve {
    /// Fitted decay rate `theta`.
    pub fn fitted_rate(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }

    pub fn fit_r2(&self) -> Option<f64> {
        self.fit.map(|f| f.r2)
    }

    /// Kendall tau between time and TV over the fitted points.
    pub fn trend(&self) -> Option<f64> {
        let (t, v): (Vec<f64>, Vec<f64>) = self.fitted_points().unzip();
        kendall_tau(&t, &v)
    }

    fn fitted_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.tv_estimates)
            .zip(&self.noise_floors)
            .filter(|((_, tv), floor)| **tv > **floor)
            .map(|((t, tv), _)| (*t, *tv))
    }
}

/// The point `[x, row sums of y]` retained by the mixing histograms.
pub fn retained_coordinates(z: &State) -> Vec<f64> {
    let mut p = Vec::with_capacity(z.y.dim() + 1);
    p.push(z.x);
    p.extend(z.y.row_sums());
    p
}

/// States of one trajectory from `start` at the increasing `times`
/// (`times[0] >= 0`), as retained coordinates.
pub fn snapshot_path(
    model: &ModelSpec,
    start: &State,
    times: &[f64],
    cfg: &IntegratorConfig,
    rng: &mut PathRng,
    opts: &SimOptions,
) -> Result<Vec<Vec<f64>>, DiagnosticsError> {
    check_times(times)?;
    let mut z = start.clone();
    let mut clock = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t > clock {
            z = advance_state(model, &z, t - clock, cfg, rng, opts)?.0;
            clock = t;
        }
        out.push(retained_coordinates(&z));
    }
    Ok(out)
}

fn check_times(times: &[f64]) -> Result<(), DiagnosticsError> {
    if times.is_empty() || !(times[0] >= 0.0) || !times.iter().all(|t| t.is_finite()) {
        return Err(DiagnosticsError::InvalidArgument("times"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagnosticsError::InvalidArgument("times"));
    }
    Ok(())
}

/// Builds the mixing curve from per-path snapshots: `a[p][k]` is the point
/// of path `p` from the first start at `times[k]`.
pub fn mixing_curve_from_snapshots(
    times: &[f64],
    a: &[Vec<Vec<f64>>],
    b: &[Vec<Vec<f64>>],
    bins: usize,
) -> Result<MixingCurve, DiagnosticsError> {
    check_times(times)?;
    if a.is_empty() || b.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    if a.iter().chain(b).any(|s| s.len() != times.len()) {
        return Err(DiagnosticsError::InvalidArgument("snapshots"));
    }
    let mut tv_estimates = Vec::with_capacity(times.len());
    let mut noise_floors = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let pa: Vec<Vec<f64>> = a.iter().map(|s| s[k].clone()).collect();
        let pb: Vec<Vec<f64>> = b.iter().map(|s| s[k].clone()).collect();
        let est = tv_distance(&pa, &pb, bins)?;
        tv_estimates.push(est.tv);
        noise_floors.push(est.noise_floor);
    }
    let mut curve = MixingCurve {
        times: times.to_vec(),
        tv_estimates,
        noise_floors,
        fit: None,
    };
    let (t, log_tv): (Vec<f64>, Vec<f64>) = curve.fitted_points().map(|(t, v)| (t, libm::log(v))).unzip();
    curve.fit = linear_fit(&t, &log_tv);
    Ok(curve)
}

/// Sequential two-start mixing curve. Path `p` from `z_a` uses the streams
/// of index `2p` under `seed`, and from `z_b` those of index `2p + 1`.
#[allow(clippy::too_many_arguments)]
pub fn mixing_curve(
    model: &ModelSpec,
    z_a: &State,
    z_b: &State,
    times: &[f64],
    n_paths: usize,
    bins: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<MixingCurve, DiagnosticsError> {
    if n_paths == 0 {
        return Err(DiagnosticsError::Empty);
    }
    let opts = SimOptions {
        record_skeleton: false,
        ..SimOptions::default()
    };
    let mut a = Vec::with_capacity(n_paths);
    let mut b = Vec::with_capacity(n_paths);
    for p in 0..n_paths as u64 {
        a.push(snapshot_path(model, z_a, times, cfg, &mut PathRng::for_path(seed, 2 * p), &opts)?);
        b.push(snapshot_path(model, z_b, times, cfg, &mut PathRng::for_path(seed, 2 * p + 1), &opts)?);
    }
    mixing_curve_from_snapshots(times, &a, &b, bins)
}

/// Sample autocorrelations and their exponential fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrFit {
    pub lag_times: Vec<f64>,
    pub acf: Vec<f64>,
    /// Fit of `ln acf = a - rate * lag` over the positive autocorrelations.
    pub fit: Option<LinearFit>,
}

impl AutocorrFit {
    pub fn rate(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }
}

/// Sample autocorrelation of `series` at lag `lag`.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64, DiagnosticsError> {
    let n = series.len();
    if lag + 2 > n {
        return Err(DiagnosticsError::InsufficientLength { len: n, lag });
    }
    let mean = pairwise_sum(series) / n as f64;
    let centred: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = pairwise_sum(&centred.iter().map(|v| v * v).collect::<Vec<_>>());
    if var == 0.0 {
        return Err(DiagnosticsError::InvalidArgument("series has zero variance"));
    }
    let cov = pairwise_sum(&(0..n - lag).map(|k| centred[k] * centred[k + lag]).collect::<Vec<_>>());
    Ok(cov / var)
}

/// Autocorrelation of an equally spaced series (spacing `dt`) at `lags`
/// (in samples), with an exponential fit.
pub fn autocorr_decay(series: &[f64], dt: f64, lags: &[usize]) -> Result<AutocorrFit, DiagnosticsError> {
    if !(dt > 0.0) {
        return Err(DiagnosticsError::InvalidArgument("dt"));
    }
    if lags.is_empty() {
        return Err(DiagnosticsError::InvalidArgument("lags"));
    }
    let max_lag = *lags.iter().max().unwrap_or(&0);
    if series.len() < 10 * max_lag.max(1) {
        return Err(DiagnosticsError::InsufficientLength {
            len: series.len(),
            lag: max_lag,
        });
    }
    let acf = lags
        .iter()
        .map(|&l| autocorrelation(series, l))
        .collect::<Result<Vec<_>, _>>()?;
    let lag_times: Vec<f64> = lags.iter().map(|&l| l as f64 * dt).collect();
    let (t, log_acf): (Vec<f64>, Vec<f64>) = lag_times
        .iter()
        .zip(&acf)
        .filter(|(_, a)| **a > 0.0)
        .map(|(t, a)| (*t, libm::log(*a)))
        .unzip();
    Ok(AutocorrFit {
        fit: linear_fit(&t, &log_acf),
        lag_times,
        acf,
    })
}
