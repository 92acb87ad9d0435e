//! Integration of the diffusion between Hawkes events and the jump map at
//! event times.

use rand_core::RngCore;

use crate::model::{CoefficientSpec, Diffusion, Drift, JumpMap};
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("time step must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("exact OU transitions need a linear drift and a constant diffusion coefficient")]
    ExactOuNotAdmissible,
    #[error("invalid integrator setting `{0}`")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Euler-Maruyama with fixed substep `step`; the last substep of each
    /// interval is shortened to land exactly on its end.
    EulerMaruyama { step: f64 },
    /// Exact Gaussian transition of the Ornstein-Uhlenbeck flow.
    ExactOu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Spacing of the regular skeleton grid.
    pub grid_dt: f64,
}

impl IntegratorConfig {
    pub fn euler(step: f64, grid_dt: f64) -> Self {
        Self {
            scheme: Scheme::EulerMaruyama { step },
            grid_dt,
        }
    }

    pub fn exact_ou(grid_dt: f64) -> Self {
        Self {
            scheme: Scheme::ExactOu,
            grid_dt,
        }
    }

    pub fn validate(&self, coefficients: &CoefficientSpec) -> Result<(), DiffusionError> {
        if !(self.grid_dt.is_finite() && self.grid_dt > 0.0) {
            return Err(DiffusionError::InvalidConfig("grid_dt"));
        }
        match self.scheme {
            Scheme::EulerMaruyama { step } if !(step.is_finite() && step > 0.0) => {
                Err(DiffusionError::InvalidConfig("step"))
            }
            Scheme::ExactOu => ou_parameters(coefficients).map(|_| ()),
            _ => Ok(()),
        }
    }
}

fn ou_parameters(co: &CoefficientSpec) -> Result<(f64, f64, f64), DiffusionError> {
    match (co.drift, co.diffusion) {
        (Drift::Linear { beta, offset }, Diffusion::Constant { sigma }) => Ok((beta, offset, sigma)),
        _ => Err(DiffusionError::ExactOuNotAdmissible),
    }
}

/// Advances the diffusion by `dt` without jumps.
pub fn advance_diffusion<R: RngCore + ?Sized>(
    co: &CoefficientSpec,
    x: f64,
    dt: f64,
    scheme: Scheme,
    noise: &mut R,
) -> Result<f64, DiffusionError> {
    if !(dt > 0.0) {
        return Err(DiffusionError::NonPositiveStep(dt));
    }
    match scheme {
        Scheme::EulerMaruyama { step } => {
            if !(step > 0.0) {
                return Err(DiffusionError::NonPositiveStep(step));
            }
            Ok(euler_maruyama(co, x, dt, step, noise))
        }
        Scheme::ExactOu => {
            let (beta, offset, sigma) = ou_parameters(co)?;
            Ok(exact_ou(beta, offset, sigma, x, dt, noise))
        }
    }
}

fn euler_maruyama<R: RngCore + ?Sized>(co: &CoefficientSpec, mut x: f64, dt: f64, step: f64, noise: &mut R) -> f64 {
    let full = libm::floor(dt / step);
    let mut n = full as u64;
    let mut last = dt - full * step;
    // absorb a rounding-sized remainder into the last full step
    if last <= 1e-9 * step {
        if n == 0 {
            n = 1;
            last = dt;
        } else {
            last += step;
        }
    } else {
        n += 1;
    }
    for k in 0..n {
        let h = if k + 1 == n { last } else { step };
        let xi = standard_normal(noise);
        x += co.drift.eval(x) * h + co.diffusion.eval(x) * libm::sqrt(h) * xi;
    }
    x
}

fn exact_ou<R: RngCore + ?Sized>(beta: f64, offset: f64, sigma: f64, x: f64, dt: f64, noise: &mut R) -> f64 {
    let xi = standard_normal(noise);
    let (mean, var) = if beta == 0.0 {
        (x + offset * dt, sigma * sigma * dt)
    } else {
        let decay = libm::exp(-beta * dt);
        let centre = offset / beta;
        // -expm1(-2 beta dt) keeps precision for small beta dt
        (
            centre + (x - centre) * decay,
            sigma * sigma * -libm::expm1(-2.0 * beta * dt) / (2.0 * beta),
        )
    };
    mean + libm::sqrt(var) * xi
}

/// Post-jump position `x + a(x)`.
#[inline]
pub fn apply_x_jump(x: f64, a: &JumpMap) -> f64 {
    x + a.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathRng;

    fn coeffs(beta: f64, offset: f64, sigma: f64) -> CoefficientSpec {
        CoefficientSpec::new(
            Drift::Linear { beta, offset },
            Diffusion::Constant { sigma },
            JumpMap::Constant { value: 0.0 },
        )
    }

    #[test]
    fn deterministic_ode_examples() {
        let mut rng = PathRng::from_seed(1).noise;
        let x = advance_diffusion(&coeffs(1.0, 0.0, 0.0), 1.0, 1.0, Scheme::ExactOu, &mut rng).unwrap();
        assert!((x - (-1.0f64).exp()).abs() < 1e-15);
        let x = advance_diffusion(&coeffs(0.0, 1.0, 0.0), 0.0, 2.5, Scheme::ExactOu, &mut rng).unwrap();
        assert_eq!(x, 2.5);
        let x = advance_diffusion(
            &coeffs(0.0, 1.0, 0.0),
            0.0,
            2.5,
            Scheme::EulerMaruyama { step: 0.3 },
            &mut rng,
        )
        .unwrap();
        assert!((x - 2.5).abs() < 1e-12);
    }

    #[test]
    fn euler_error_is_first_order() {
        // oracle: exact solution e^-1 of x' = -x; fit log error against log h
        let co = coeffs(1.0, 0.0, 0.0);
        let mut rng = PathRng::from_seed(2).noise;
        let hs = [1e-1, 1e-2, 1e-3];
        let errs: [f64; 3] = core::array::from_fn(|k| {
            let x = advance_diffusion(&co, 1.0, 1.0, Scheme::EulerMaruyama { step: hs[k] }, &mut rng).unwrap();
            (x - (-1.0f64).exp()).abs()
        });
        let lx: [f64; 3] = core::array::from_fn(|k| hs[k].ln());
        let ly: [f64; 3] = core::array::from_fn(|k| errs[k].ln());
        let mx = lx.iter().sum::<f64>() / 3.0;
        let my = ly.iter().sum::<f64>() / 3.0;
        let slope = (0..3).map(|k| (lx[k] - mx) * (ly[k] - my)).sum::<f64>()
            / (0..3).map(|k| (lx[k] - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn noiseless_integration_ignores_the_stream() {
        let co = coeffs(0.7, 0.3, 0.0);
        let mut a = PathRng::from_seed(1).noise;
        let mut b = PathRng::from_seed(99).noise;
        for scheme in [Scheme::ExactOu, Scheme::EulerMaruyama { step: 0.01 }] {
            let xa = advance_diffusion(&co, 2.0, 1.3, scheme, &mut a).unwrap();
            let xb = advance_diffusion(&co, 2.0, 1.3, scheme, &mut b).unwrap();
            assert_eq!(xa, xb);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = PathRng::from_seed(1).noise;
        let co = coeffs(1.0, 0.0, 1.0);
        assert_eq!(
            advance_diffusion(&co, 0.0, 0.0, Scheme::ExactOu, &mut rng),
            Err(DiffusionError::NonPositiveStep(0.0))
        );
        let smooth = CoefficientSpec::new(
            Drift::Linear { beta: 1.0, offset: 0.0 },
            Diffusion::SmoothBounded { low: 0.5, high: 1.0 },
            JumpMap::Constant { value: 0.0 },
        );
        assert_eq!(
            advance_diffusion(&smooth, 0.0, 1.0, Scheme::ExactOu, &mut rng),
            Err(DiffusionError::ExactOuNotAdmissible)
        );
        let tanh = CoefficientSpec::new(
            Drift::Tanh { amplitude: 1.0, scale: 1.0, offset: 0.0 },
            Diffusion::Constant { sigma: 1.0 },
            JumpMap::Constant { value: 0.0 },
        );
        assert!(IntegratorConfig::exact_ou(0.1).validate(&tanh).is_err());
        assert!(IntegratorConfig::euler(0.0, 0.1).validate(&tanh).is_err());
        assert!(IntegratorConfig::euler(0.01, 0.1).validate(&tanh).is_ok());
    }

    #[test]
    fn jump_map_examples() {
        assert_eq!(apply_x_jump(0.0, &JumpMap::Constant { value: 1.0 }), 1.0);
        assert_eq!(apply_x_jump(4.0, &JumpMap::LinearDamping { eta: 0.5 }), 2.0);
        assert_eq!(apply_x_jump(-3.2, &JumpMap::Constant { value: 0.0 }), -3.2);
    }
}
