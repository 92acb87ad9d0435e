#![allow(dead_code)]

use hjs_core::{CoefficientSpec, Diffusion, Drift, JumpMap, KernelMatrix, ModelSpec, RateFunction, SquareMatrix, State};

/// Asymptotic Kolmogorov survival function `Q(lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test against a continuous CDF: `(D, p)`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    (d, p_value(d, n))
}

/// Two-sample KS test: `(D, p)`. Ties are handled by advancing both samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, p_value(d, na * nb / (na + nb)))
}

pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn coefficients(beta: f64, sigma: f64, jump: JumpMap) -> CoefficientSpec {
    CoefficientSpec::new(Drift::Linear { beta, offset: 0.0 }, Diffusion::Constant { sigma }, jump)
}

/// Constant rates, no memory.
pub fn poisson_model(levels: &[f64]) -> ModelSpec {
    let m = levels.len();
    ModelSpec::new(
        levels.iter().map(|&level| RateFunction::Constant { level }).collect(),
        KernelMatrix::new(SquareMatrix::zeros(m), SquareMatrix::filled(m, 1.0)).unwrap(),
        coefficients(1.0, 1.0, JumpMap::Constant { value: 0.0 }),
        State::at_rest(0.0, m),
    )
    .unwrap()
}

/// Ornstein-Uhlenbeck diffusion with a negligible, memoryless event rate.
pub fn pure_ou(beta: f64) -> ModelSpec {
    ModelSpec::new(
        vec![RateFunction::Constant { level: 1e-9 }],
        KernelMatrix::new(SquareMatrix::zeros(1), SquareMatrix::filled(1, 1.0)).unwrap(),
        coefficients(beta, 1.0, JumpMap::Constant { value: 0.0 }),
        State::at_rest(0.0, 1),
    )
    .unwrap()
}

/// OU drift, unit noise, damping jumps `a = -x / 2`, one excitatory component
/// with `f(u) = max(0.1, 1 + u)`, `c = 0.5`, `alpha = 1`.
pub fn reference_model() -> ModelSpec {
    ModelSpec::new(
        vec![RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 }],
        KernelMatrix::new(SquareMatrix::filled(1, 0.5), SquareMatrix::filled(1, 1.0)).unwrap(),
        coefficients(1.0, 1.0, JumpMap::LinearDamping { eta: 0.5 }),
        State::at_rest(0.0, 1),
    )
    .unwrap()
}

/// Two excitatory components with `H = [[0.3, 0.2], [0.1, 0.4]]`.
pub fn two_component_model() -> ModelSpec {
    ModelSpec::new(
        vec![RateFunction::AffineClipped { floor: 0.05, intercept: 0.5, slope: 1.0 }; 2],
        KernelMatrix::new(
            SquareMatrix::from_rows([[0.3, 0.2], [0.1, 0.4]]),
            SquareMatrix::filled(2, 1.0),
        )
        .unwrap(),
        coefficients(1.0, 1.0, JumpMap::LinearDamping { eta: 0.5 }),
        State::at_rest(0.0, 2),
    )
    .unwrap()
}
