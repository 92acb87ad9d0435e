//! Distributional checks of the samplers against closed-form laws.

mod common;

use common::{ks_one_sample, ks_two_sample, mean_and_se};
use hjs_core::diagnostics::{autocorrelation, grid_series, invariant_histogram_from_paths, Observable};
use hjs_core::engine::{simulate_path, SimOptions};
use hjs_core::{advance_diffusion, next_event, IntegratorConfig, JumpMap, PathRng, Scheme, SquareMatrix};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[test]
fn exact_ou_transitions_compose() {
    let co = common::coefficients(1.0, 1.0, JumpMap::Constant { value: 0.0 });
    let n = 100_000;
    let mut rng = PathRng::from_seed(21).noise;
    let two_steps: Vec<f64> = (0..n)
        .map(|_| {
            let x = advance_diffusion(&co, 1.5, 0.3, Scheme::ExactOu, &mut rng).unwrap();
            advance_diffusion(&co, x, 0.7, Scheme::ExactOu, &mut rng).unwrap()
        })
        .collect();
    let one_step: Vec<f64> = (0..n)
        .map(|_| advance_diffusion(&co, 1.5, 1.0, Scheme::ExactOu, &mut rng).unwrap())
        .collect();
    let (_, p) = ks_two_sample(&two_steps, &one_step);
    assert!(p > 0.01, "p = {p}");
    // and both match the closed-form Gaussian transition
    let law = Normal::new(1.5 * (-1.0f64).exp(), ((1.0 - (-2.0f64).exp()) / 2.0).sqrt()).unwrap();
    let (_, p) = ks_one_sample(&one_step, |x| law.cdf(x));
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn euler_weak_error_is_first_order() {
    // OU with beta = 1, sigma = 1 from x = 1 over dt = 1; exact mean e^-1 and
    // variance (1 - e^-2) / 2. The Euler mean of a linear drift equals its
    // noiseless trajectory, so it is computed from a sigma = 0 run.
    let noisy = common::coefficients(1.0, 1.0, JumpMap::Constant { value: 0.0 });
    let quiet = common::coefficients(1.0, 0.0, JumpMap::Constant { value: 0.0 });
    let exact_mean = (-1.0f64).exp();
    let exact_var = (1.0 - (-2.0f64).exp()) / 2.0;
    let hs = [0.2, 0.1, 0.05];
    let n = 400_000;
    let mut mean_err = Vec::new();
    let mut var_err = Vec::new();
    for (k, &h) in hs.iter().enumerate() {
        let scheme = Scheme::EulerMaruyama { step: h };
        let mut rng = PathRng::from_seed(100 + k as u64).noise;
        let m = advance_diffusion(&quiet, 1.0, 1.0, scheme, &mut rng).unwrap();
        mean_err.push((m - exact_mean).abs());
        let xs: Vec<f64> = (0..n)
            .map(|_| advance_diffusion(&noisy, 1.0, 1.0, scheme, &mut rng).unwrap())
            .collect();
        let mu = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        var_err.push((var - exact_var).abs());
    }
    for errs in [&mean_err, &var_err] {
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let fit = hjs_core::diagnostics::linear_fit(&lx, &ly).unwrap();
        assert!((fit.slope - 1.0).abs() <= 0.25, "slope {} from errors {:?}", fit.slope, errs);
    }
}

#[test]
fn poisson_interevent_times_are_exponential() {
    // constant rates 1 and 2: total rate 3
    let m = common::poisson_model(&[1.0, 2.0]);
    let mut rng = PathRng::from_seed(31).events;
    let y = SquareMatrix::zeros(2);
    let n = 100_000;
    let mut gaps = Vec::with_capacity(n);
    let mut first = 0usize;
    for _ in 0..n {
        let ev = next_event(&m, &y, 0.0, f64::INFINITY, &mut rng).unwrap().unwrap();
        gaps.push(ev.time);
        first += (ev.component == 0) as usize;
    }
    let (_, p) = ks_one_sample(&gaps, |t| 1.0 - (-3.0 * t).exp());
    assert!(p > 0.01, "p = {p}");
    // component 0 fires with probability 1/3
    let share = first as f64 / n as f64;
    let se = (1.0f64 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
    assert!((share - 1.0 / 3.0).abs() < 4.0 * se, "share {share}");
}

#[test]
fn first_event_matches_inversion_oracle() {
    // intensity is 1 until the first event, so inversion gives Exp(1) exactly
    let m = hjs_core::ModelSpec::new(
        vec![hjs_core::RateFunction::AffineClipped { floor: 0.01, intercept: 1.0, slope: 1.0 }],
        hjs_core::KernelMatrix::new(SquareMatrix::filled(1, 0.5), SquareMatrix::filled(1, 1.0)).unwrap(),
        common::coefficients(1.0, 1.0, JumpMap::Constant { value: 0.0 }),
        hjs_core::State::at_rest(0.0, 1),
    )
    .unwrap();
    let mut rng = PathRng::from_seed(41).events;
    let mut inv = PathRng::from_seed(42).events;
    let n = 50_000;
    let engine: Vec<f64> = (0..n)
        .map(|_| next_event(&m, &SquareMatrix::zeros(1), 0.0, f64::INFINITY, &mut rng).unwrap().unwrap().time)
        .collect();
    let oracle: Vec<f64> = (0..n).map(|_| hjs_core::rng::exponential(&mut inv, 1.0)).collect();
    let (_, p) = ks_two_sample(&engine, &oracle);
    assert!(p > 0.01, "p = {p}");
    let (mean, se) = mean_and_se(&engine);
    assert!((mean - 1.0).abs() < 3.0 * se);
}

#[test]
fn ou_histogram_matches_stationary_gaussian() {
    // samples 10 time units apart are independent to within e^-10
    let m = common::pure_ou(1.0);
    let cfg = IntegratorConfig::exact_ou(10.0);
    let path = simulate_path(&m, 1e7, &cfg, 7, &SimOptions::default()).unwrap();
    let bins = 50;
    let dens = invariant_histogram_from_paths(std::slice::from_ref(&path), 100.0, bins, (-2.5, 2.5), (-1.0, 1.0)).unwrap();
    let n = dens.samples as f64;
    let law = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let mut chi2 = 0.0;
    for k in 0..bins {
        let p = law.cdf(dens.bin_edges[k + 1]) - law.cdf(dens.bin_edges[k]);
        let observed = dens.bin_masses[k] * (n - dens.outside as f64);
        chi2 += (observed - n * p).powi(2) / (n * p);
    }
    let p_out = 2.0 * law.cdf(-2.5);
    chi2 += (dens.outside as f64 - n * p_out).powi(2) / (n * p_out);
    let p_value = 1.0 - ChiSquared::new(bins as f64).unwrap().cdf(chi2);
    assert!(p_value > 0.01, "chi2 = {chi2}, p = {p_value}");

    // symmetry of the law: mirrored bins agree within sampling error
    for k in 0..bins / 2 {
        let (a, b) = (dens.bin_masses[k], dens.bin_masses[bins - 1 - k]);
        let se = ((a + b) / n).sqrt();
        assert!((a - b).abs() < 5.0 * se + 1e-12, "bin {k}: {a} vs {b}");
    }
}

#[test]
fn poisson_jump_indicator_decorrelates() {
    // g = 1 if an event occurred in the preceding unit window; disjoint windows are independent
    let m = common::poisson_model(&[0.7]);
    let cfg = IntegratorConfig::exact_ou(1.0);
    let path = simulate_path(&m, 50_000.0, &cfg, 3, &SimOptions::default()).unwrap();
    let mut counts = vec![0.0; 50_000];
    for e in &path.events {
        let k = (e.time.ceil() as usize).saturating_sub(1).min(counts.len() - 1);
        counts[k] = 1.0;
    }
    let n = counts.len() as f64;
    for lag in [2, 5, 20] {
        let r = autocorrelation(&counts, lag).unwrap();
        assert!(r.abs() < 4.0 / n.sqrt(), "lag {lag}: {r}");
    }
    // a grid series exists for the same path
    assert_eq!(grid_series(&path, &Observable::X, m.rates(), 0.0).len(), 50_001);
}
