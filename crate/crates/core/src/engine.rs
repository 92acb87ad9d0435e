//! Event-driven simulation of `Z = (X, Y)` by thinning.
//!
//! Candidates are proposed from a dominating rate and accepted with the
//! ratio of the true intensity to that rate. The default engine re-evaluates
//! the Lipschitz envelope [`dominating_bound`] after every candidate. The
//! reference engine follows the classical construction with a dominating
//! one-dimensional linear Hawkes process `N*` whose intensity grows by
//! `M * max_i gamma_i * max_ij |c_ij|` at each of its own points; it is kept
//! as a cross-check of the default engine.
//!
//! `Y` is never discretised: between candidates it follows its closed-form
//! flow. Only `X` goes through the integrator, once per inter-event interval
//! split at the multiples of `grid_dt`.

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::diffusion::{advance_diffusion, apply_x_jump, DiffusionError, IntegratorConfig};
use crate::intensity::{apply_jump_in_place, dominating_bound, flow_y_in_place};
use crate::matrix::SquareMatrix;
use crate::model::{ModelSpec, State};
use crate::rng::{exponential, open_uniform, PathRng};

/// Default cap on the number of events of one path.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("horizon must be finite and > 0, got {0}")]
    InvalidHorizon(f64),
    #[error("dominating rate {0} is not finite and positive")]
    InvalidBound(f64),
    #[error("total intensity {total} exceeds the dominating rate {bound}")]
    BoundViolated { total: f64, bound: f64 },
    #[error("more than {cap} events before t = {time}; the model is likely supercritical")]
    EventCap { cap: u64, time: f64 },
    #[error("state is not finite")]
    NonFiniteState,
    #[error("initial state has dimension {found}, model has M = {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Circuit breaker on accepted events (and, for the reference engine,
    /// on dominating points).
    pub max_events: u64,
    pub record_skeleton: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_MAX_EVENTS,
            record_skeleton: true,
        }
    }
}

/// Accepted event; `component` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub component: usize,
}

/// A thinning candidate: `accepted` is `None` for a rejected candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEvent {
    pub time: f64,
    pub accepted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    /// Regular sample at a multiple of `grid_dt`.
    Grid,
    PreJump,
    PostJump,
    /// Terminal sample at the horizon when it is not on the grid.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSample {
    pub time: f64,
    pub kind: SampleKind,
    pub x: f64,
    /// Row sums of `y`, i.e. the arguments of the rate functions.
    pub row_sums: Vec<f64>,
}

/// One realised trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Number of components `M`.
    pub dim: usize,
    pub events: Vec<Event>,
    pub skeleton: Vec<SkeletonSample>,
    pub horizon: f64,
    pub seed: u64,
    pub model_hash: [u8; 32],
}

impl Path {
    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Regular-grid samples only.
    pub fn grid_samples(&self) -> impl Iterator<Item = &SkeletonSample> {
        self.skeleton.iter().filter(|s| s.kind == SampleKind::Grid)
    }
}

/// First accepted event after `clock`.
#[derive(Debug, Clone, PartialEq)]
pub struct NextEvent {
    pub time: f64,
    pub component: usize,
    /// Memory state just before the event, `y(time-)`.
    pub y_before: SquareMatrix,
    /// Candidates drawn, including the accepted one.
    pub candidates: u64,
}

#[derive(Debug, Clone, Copy)]
enum Dominator {
    /// Lipschitz envelope recomputed at the current memory state.
    Local,
    /// `lambda0 + increment * (number of dominating points so far)`.
    Reference { lambda0: f64, increment: f64 },
}

struct Thinning {
    dominator: Dominator,
    /// Dominating points drawn since the start of the path.
    candidates: u64,
}

impl Thinning {
    fn rate(&self, model: &ModelSpec, y: &SquareMatrix) -> f64 {
        match self.dominator {
            Dominator::Local => dominating_bound(model, y),
            Dominator::Reference { lambda0, increment } => lambda0 + increment * self.candidates as f64,
        }
    }

    /// Draws candidates from `(clock, y)` until one is accepted or the
    /// horizon is passed. `y` and `clock` track the last candidate.
    fn next<R: RngCore + ?Sized>(
        &mut self,
        model: &ModelSpec,
        y: &mut SquareMatrix,
        clock: &mut f64,
        horizon: f64,
        cap: u64,
        rng: &mut R,
    ) -> Result<Option<usize>, EngineError> {
        let kernel = model.kernel();
        loop {
            let rate = self.rate(model, y);
            if !(rate.is_finite() && rate > 0.0) {
                return Err(EngineError::InvalidBound(rate));
            }
            let mut tau = *clock + exponential(rng, rate);
            if tau <= *clock {
                tau = clock.next_up();
            }
            if tau > horizon {
                return Ok(None);
            }
            flow_y_in_place(kernel, y, tau - *clock);
            *clock = tau;
            self.candidates += 1;
            if matches!(self.dominator, Dominator::Reference { .. }) && self.candidates > cap {
                return Err(EngineError::EventCap { cap, time: tau });
            }
            let u = open_uniform(rng) * rate;
            let mut acc = 0.0;
            let mut accepted = None;
            for (i, f) in model.rates().iter().enumerate() {
                acc += f.eval(y.row_sum(i));
                if accepted.is_none() && u < acc {
                    accepted = Some(i);
                }
            }
            if acc > rate * (1.0 + 1e-12) {
                return Err(EngineError::BoundViolated { total: acc, bound: rate });
            }
            if accepted.is_some() {
                return Ok(accepted);
            }
        }
    }
}

/// Samples the first event after `clock` of the process whose memory is `y`
/// at `clock`, using local-bound thinning. Returns `None` when no event
/// occurs up to `horizon`.
pub fn next_event<R: RngCore + ?Sized>(
    model: &ModelSpec,
    y: &SquareMatrix,
    clock: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Option<NextEvent>, EngineError> {
    if !y.is_finite() || !clock.is_finite() {
        return Err(EngineError::NonFiniteState);
    }
    let mut thinning = Thinning {
        dominator: Dominator::Local,
        candidates: 0,
    };
    let mut y = y.clone();
    let mut t = clock;
    let res = thinning.next(model, &mut y, &mut t, horizon, u64::MAX, rng)?;
    Ok(res.map(|component| NextEvent {
        time: t,
        component,
        y_before: y,
        candidates: thinning.candidates,
    }))
}

/// Simulates one path on `[0, horizon]` from the model's initial state.
/// The result is a pure function of `(model, horizon, cfg, seed)`.
pub fn simulate_path(
    model: &ModelSpec,
    horizon: f64,
    cfg: &IntegratorConfig,
    seed: u64,
    opts: &SimOptions,
) -> Result<Path, EngineError> {
    let mut rng = PathRng::from_seed(seed);
    simulate_path_with(model, horizon, cfg, &mut rng, opts)
}

pub fn simulate_path_with(
    model: &ModelSpec,
    horizon: f64,
    cfg: &IntegratorConfig,
    rng: &mut PathRng,
    opts: &SimOptions,
) -> Result<Path, EngineError> {
    let mut rec = Recorder::new(opts.record_skeleton);
    run(
        model,
        model.initial(),
        horizon,
        cfg,
        rng,
        opts,
        Dominator::Local,
        &mut rec,
    )?;
    Ok(rec.into_path(model, horizon, rng.seed()))
}

/// The classical construction: candidates are the points of the linear
/// Hawkes process `N*` with intensity `lambda0 + M gamma_bar c_bar N*_{t-}`,
/// thinned with probabilities `f_i(y(t-)) / lambda*_t`. `lambda0` is the
/// Lipschitz envelope at the initial memory state, which dominates the total
/// rate along the flow started there.
pub fn simulate_path_reference(
    model: &ModelSpec,
    horizon: f64,
    cfg: &IntegratorConfig,
    seed: u64,
    opts: &SimOptions,
) -> Result<Path, EngineError> {
    let mut rng = PathRng::from_seed(seed);
    let mut rec = Recorder::new(opts.record_skeleton);
    let (lambda0, increment) = reference_rates(model);
    run(
        model,
        model.initial(),
        horizon,
        cfg,
        &mut rng,
        opts,
        Dominator::Reference { lambda0, increment },
        &mut rec,
    )?;
    Ok(rec.into_path(model, horizon, seed))
}

/// `(lambda*_0, M * gamma_bar * c_bar)` of the dominating process.
pub fn reference_rates(model: &ModelSpec) -> (f64, f64) {
    let gamma_bar = model.lipschitz_constants().into_iter().fold(0.0, f64::max);
    let c_bar = model.kernel().max_abs_c();
    (
        dominating_bound(model, &model.initial().y),
        model.dim() as f64 * gamma_bar * c_bar,
    )
}

/// Intensity of the dominating process after `k` of its points.
pub fn reference_intensity(model: &ModelSpec, k: u64) -> f64 {
    let (lambda0, increment) = reference_rates(model);
    lambda0 + increment * k as f64
}

/// Advances `state` by `duration` and returns the terminal state and the
/// number of events. The random streams continue from where `rng` stands,
/// so successive calls chain into one trajectory.
pub fn advance_state(
    model: &ModelSpec,
    state: &State,
    duration: f64,
    cfg: &IntegratorConfig,
    rng: &mut PathRng,
    opts: &SimOptions,
) -> Result<(State, u64), EngineError> {
    let mut counter = EventCounter(0);
    let end = run(model, state, duration, cfg, rng, opts, Dominator::Local, &mut counter)?;
    Ok((end, counter.0))
}

trait Observer {
    fn sample(&mut self, time: f64, kind: SampleKind, x: f64, y: &SquareMatrix);
    fn event(&mut self, time: f64, component: usize);
    fn wants_samples(&self) -> bool;
}

struct EventCounter(u64);

impl Observer for EventCounter {
    fn sample(&mut self, _: f64, _: SampleKind, _: f64, _: &SquareMatrix) {}

    fn event(&mut self, _: f64, _: usize) {
        self.0 += 1;
    }

    fn wants_samples(&self) -> bool {
        false
    }
}

struct Recorder {
    events: Vec<Event>,
    skeleton: Vec<SkeletonSample>,
    record: bool,
}

impl Recorder {
    fn new(record: bool) -> Self {
        Self {
            events: Vec::new(),
            skeleton: Vec::new(),
            record,
        }
    }

    fn into_path(self, model: &ModelSpec, horizon: f64, seed: u64) -> Path {
        Path {
            dim: model.dim(),
            events: self.events,
            skeleton: self.skeleton,
            horizon,
            seed,
            model_hash: model.digest(),
        }
    }
}

impl Observer for Recorder {
    fn sample(&mut self, time: f64, kind: SampleKind, x: f64, y: &SquareMatrix) {
        self.skeleton.push(SkeletonSample {
            time,
            kind,
            x,
            row_sums: y.row_sums(),
        });
    }

    fn event(&mut self, time: f64, component: usize) {
        self.events.push(Event { time, component });
    }

    fn wants_samples(&self) -> bool {
        self.record
    }
}

#[allow(clippy::too_many_arguments)]
fn run<O: Observer>(
    model: &ModelSpec,
    start: &State,
    horizon: f64,
    cfg: &IntegratorConfig,
    rng: &mut PathRng,
    opts: &SimOptions,
    dominator: Dominator,
    obs: &mut O,
) -> Result<State, EngineError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(EngineError::InvalidHorizon(horizon));
    }
    if start.y.dim() != model.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: model.dim(),
            found: start.y.dim(),
        });
    }
    if !start.is_finite() {
        return Err(EngineError::NonFiniteState);
    }
    cfg.validate(model.coefficients())?;
    let co = model.coefficients();
    let kernel = model.kernel();
    let record = obs.wants_samples();
    let grid_dt = cfg.grid_dt;

    let mut thinning = Thinning {
        dominator,
        candidates: 0,
    };
    let mut x = start.x;
    let mut t_x = 0.0;
    // memory right after the last event, and that event's time
    let mut y_anchor = start.y.clone();
    let mut t_anchor = 0.0;
    // working copy that follows the candidates
    let mut y = start.y.clone();
    let mut clock = 0.0;
    let mut scratch = SquareMatrix::zeros(model.dim());
    let mut next_grid: u64 = 1;
    let mut events: u64 = 0;

    if record {
        obs.sample(0.0, SampleKind::Grid, x, &y);
    }

    loop {
        let accepted = thinning.next(model, &mut y, &mut clock, horizon, opts.max_events, &mut rng.events)?;
        let t_stop = if accepted.is_some() { clock } else { horizon };

        // regular grid strictly before an event, up to and including the horizon otherwise
        loop {
            let tg = next_grid as f64 * grid_dt;
            let inside = if accepted.is_some() { tg < t_stop } else { tg <= t_stop };
            if !inside {
                break;
            }
            if tg > t_x {
                x = advance_diffusion(co, x, tg - t_x, cfg.scheme, &mut rng.noise)?;
                t_x = tg;
            }
            if record {
                scratch.as_mut_slice().copy_from_slice(y_anchor.as_slice());
                flow_y_in_place(kernel, &mut scratch, tg - t_anchor);
                obs.sample(tg, SampleKind::Grid, x, &scratch);
            }
            next_grid += 1;
        }
        if t_stop > t_x {
            x = advance_diffusion(co, x, t_stop - t_x, cfg.scheme, &mut rng.noise)?;
            t_x = t_stop;
        }

        match accepted {
            Some(j) => {
                events += 1;
                if events > opts.max_events {
                    return Err(EngineError::EventCap {
                        cap: opts.max_events,
                        time: clock,
                    });
                }
                if record {
                    obs.sample(clock, SampleKind::PreJump, x, &y);
                }
                x = apply_x_jump(x, &co.jump);
                apply_jump_in_place(kernel, &mut y, j);
                if !x.is_finite() {
                    return Err(EngineError::NonFiniteState);
                }
                obs.event(clock, j);
                if record {
                    obs.sample(clock, SampleKind::PostJump, x, &y);
                }
                y_anchor.as_mut_slice().copy_from_slice(y.as_slice());
                t_anchor = clock;
            }
            None => {
                // horizon reached: bring y from the last candidate to the horizon
                flow_y_in_place(kernel, &mut y, horizon - clock);
                let on_grid = (next_grid - 1) as f64 * grid_dt == horizon;
                if record && !on_grid {
                    obs.sample(horizon, SampleKind::Final, x, &y);
                }
                if !x.is_finite() {
                    return Err(EngineError::NonFiniteState);
                }
                return Ok(State { x, y });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSpec, Diffusion, Drift, JumpMap, KernelMatrix, RateFunction};
    use alloc::vec;

    fn poisson_model(levels: &[f64]) -> ModelSpec {
        let m = levels.len();
        ModelSpec::new(
            levels.iter().map(|&level| RateFunction::Constant { level }).collect(),
            KernelMatrix::new(SquareMatrix::zeros(m), SquareMatrix::filled(m, 1.0)).unwrap(),
            CoefficientSpec::new(
                Drift::Linear { beta: 1.0, offset: 0.0 },
                Diffusion::Constant { sigma: 1.0 },
                JumpMap::Constant { value: 0.0 },
            ),
            State::at_rest(0.0, m),
        )
        .unwrap()
    }

    fn linear_hawkes(c: f64) -> ModelSpec {
        ModelSpec::new(
            vec![RateFunction::AffineClipped { floor: 0.01, intercept: 1.0, slope: 1.0 }],
            KernelMatrix::new(SquareMatrix::filled(1, c), SquareMatrix::filled(1, 1.0)).unwrap(),
            CoefficientSpec::new(
                Drift::Linear { beta: 1.0, offset: 0.0 },
                Diffusion::Constant { sigma: 1.0 },
                JumpMap::LinearDamping { eta: 0.5 },
            ),
            State::at_rest(0.0, 1),
        )
        .unwrap()
    }

    #[test]
    fn poisson_candidates_are_always_accepted() {
        let m = poisson_model(&[1.0, 2.0]);
        let mut rng = PathRng::from_seed(5).events;
        for _ in 0..1000 {
            let ev = next_event(&m, &SquareMatrix::zeros(2), 0.0, f64::INFINITY, &mut rng)
                .unwrap()
                .unwrap();
            assert_eq!(ev.candidates, 1);
        }
    }

    #[test]
    fn constant_floor_always_fires_component_one() {
        let m = ModelSpec::new(
            vec![RateFunction::AffineClipped { floor: 5.0, intercept: 0.0, slope: 0.0 }],
            KernelMatrix::new(SquareMatrix::filled(1, 1.0), SquareMatrix::filled(1, 1.0)).unwrap(),
            *poisson_model(&[1.0]).coefficients(),
            State::at_rest(0.0, 1),
        )
        .unwrap();
        let mut rng = PathRng::from_seed(8).events;
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let ev = next_event(&m, &SquareMatrix::zeros(1), 0.0, f64::INFINITY, &mut rng)
                .unwrap()
                .unwrap();
            assert_eq!(ev.component, 0);
            sum += ev.time;
        }
        let mean = sum / n as f64;
        // Exponential(5): mean 0.2, standard error 0.2 / sqrt(n)
        assert!((mean - 0.2).abs() < 4.0 * 0.2 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn first_event_of_linear_hawkes_from_rest_has_unit_mean() {
        // oracle: from y = 0 the intensity is f(0) = 1 until the first event,
        // so the first event time is Exponential(1) by direct inversion
        let m = linear_hawkes(0.5);
        let mut rng = PathRng::from_seed(9).events;
        let n = 20_000;
        let mean = (0..n)
            .map(|_| {
                next_event(&m, &SquareMatrix::zeros(1), 0.0, f64::INFINITY, &mut rng)
                    .unwrap()
                    .unwrap()
                    .time
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn tiny_horizon_gives_empty_path() {
        let m = linear_hawkes(0.5);
        let cfg = IntegratorConfig::exact_ou(0.01);
        let p = simulate_path(&m, 1e-9, &cfg, 3, &SimOptions::default()).unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.skeleton[0].x, 0.0);
        assert_eq!(p.skeleton[0].row_sums, vec![0.0]);
        let last = p.skeleton.last().unwrap();
        assert_eq!(last.kind, SampleKind::Final);
        assert!(last.x.abs() < 1e-3);
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let m = linear_hawkes(0.5);
        let cfg = IntegratorConfig::exact_ou(0.01);
        assert_eq!(
            simulate_path(&m, 0.0, &cfg, 3, &SimOptions::default()),
            Err(EngineError::InvalidHorizon(0.0))
        );
        assert!(simulate_path_reference(&m, -1.0, &cfg, 3, &SimOptions::default()).is_err());
    }

    #[test]
    fn identical_inputs_give_identical_paths() {
        let m = linear_hawkes(0.5);
        let cfg = IntegratorConfig::euler(0.01, 0.1);
        let a = simulate_path(&m, 50.0, &cfg, 11, &SimOptions::default()).unwrap();
        let b = simulate_path(&m, 50.0, &cfg, 11, &SimOptions::default()).unwrap();
        let c = simulate_path(&m, 50.0, &cfg, 12, &SimOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn skeleton_brackets_every_event() {
        let m = linear_hawkes(0.5);
        let cfg = IntegratorConfig::exact_ou(0.25);
        let p = simulate_path(&m, 40.0, &cfg, 4, &SimOptions::default()).unwrap();
        assert!(!p.events.is_empty());
        for w in p.skeleton.windows(2) {
            assert!(w[0].time <= w[1].time);
        }
        for ev in &p.events {
            let pre = p.skeleton.iter().position(|s| s.kind == SampleKind::PreJump && s.time == ev.time).unwrap();
            let post = &p.skeleton[pre + 1];
            assert_eq!(post.kind, SampleKind::PostJump);
            assert_eq!(post.time, ev.time);
            assert!((post.x - 0.5 * p.skeleton[pre].x).abs() < 1e-12);
            assert!((post.row_sums[0] - p.skeleton[pre].row_sums[0] - 0.5).abs() < 1e-12);
        }
        for w in p.events.windows(2) {
            assert!(w[0].time < w[1].time);
        }
        // horizon 40 is a multiple of 0.25, so it closes the grid
        let last = p.skeleton.last().unwrap();
        assert_eq!((last.time, last.kind), (40.0, SampleKind::Grid));
        let grid = p.grid_samples().count();
        assert_eq!(grid, 161);
    }

    #[test]
    fn event_cap_trips_on_supercritical_model() {
        let m = linear_hawkes(2.0);
        let cfg = IntegratorConfig::exact_ou(1.0);
        let opts = SimOptions {
            max_events: 1000,
            record_skeleton: false,
        };
        let err = simulate_path(&m, 1e6, &cfg, 1, &opts).unwrap_err();
        assert!(matches!(err, EngineError::EventCap { cap: 1000, .. }));
    }

    #[test]
    fn reference_intensity_grows_linearly() {
        let m = linear_hawkes(0.5);
        let (l0, inc) = reference_rates(&m);
        assert_eq!((l0, inc), (1.0, 0.5));
        for k in 0..10 {
            assert_eq!(reference_intensity(&m, k), 1.0 + 0.5 * k as f64);
        }
    }

    #[test]
    fn advance_state_chains() {
        let m = linear_hawkes(0.5);
        let cfg = IntegratorConfig::exact_ou(0.5);
        let mut rng = PathRng::from_seed(3);
        let (z, _) = advance_state(&m, m.initial(), 2.0, &cfg, &mut rng, &SimOptions::default()).unwrap();
        assert!(z.is_finite());
        assert!(z.y[(0, 0)] >= 0.0);
    }
}
