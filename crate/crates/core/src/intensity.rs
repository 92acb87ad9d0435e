//! The piecewise deterministic memory process `Y`: exponential decay between
//! events, additive updates at events, and the intensities it carries.

use alloc::vec::Vec;

use crate::matrix::SquareMatrix;
use crate::model::{KernelMatrix, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum IntensityError {
    #[error("flow time must be >= 0, got {0}")]
    NegativeTime(f64),
    #[error("component index {index} out of range for M = {dim}")]
    ComponentOutOfRange { index: usize, dim: usize },
}

/// Hawkes intensities `lambda_i = f_i(sum_j y_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector(pub Vec<f64>);

impl IntensityVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Deterministic flow: entry `(i, j)` becomes `exp(-alpha_ij t) y_ij`.
pub fn flow_y(kernel: &KernelMatrix, y: &SquareMatrix, t: f64) -> Result<SquareMatrix, IntensityError> {
    if !(t >= 0.0) {
        return Err(IntensityError::NegativeTime(t));
    }
    let mut out = y.clone();
    flow_y_in_place(kernel, &mut out, t);
    Ok(out)
}

/// In-place flow; `t` must be nonnegative.
#[inline]
pub fn flow_y_in_place(kernel: &KernelMatrix, y: &mut SquareMatrix, t: f64) {
    debug_assert!(t >= 0.0);
    if t == 0.0 {
        return;
    }
    for (v, a) in y.as_mut_slice().iter_mut().zip(kernel.alpha().as_slice()) {
        if *v != 0.0 {
            *v *= libm::exp(-a * t);
        }
    }
}

/// Event of component `j` (0-based): column `j` gains `c[., j]`.
pub fn apply_jump(kernel: &KernelMatrix, y: &SquareMatrix, j: usize) -> Result<SquareMatrix, IntensityError> {
    let dim = kernel.dim();
    if j >= dim || y.dim() != dim {
        return Err(IntensityError::ComponentOutOfRange { index: j, dim });
    }
    let mut out = y.clone();
    apply_jump_in_place(kernel, &mut out, j);
    Ok(out)
}

#[inline]
pub fn apply_jump_in_place(kernel: &KernelMatrix, y: &mut SquareMatrix, j: usize) {
    for i in 0..kernel.dim() {
        y[(i, j)] += kernel.c()[(i, j)];
    }
}

pub fn intensities(model: &ModelSpec, y: &SquareMatrix) -> IntensityVector {
    IntensityVector(
        model
            .rates()
            .iter()
            .enumerate()
            .map(|(i, f)| f.eval(y.row_sum(i)))
            .collect(),
    )
}

/// Total jump rate `sum_i f_i(sum_j y_ij)`.
pub fn total_rate(model: &ModelSpec, y: &SquareMatrix) -> f64 {
    model
        .rates()
        .iter()
        .enumerate()
        .map(|(i, f)| f.eval(y.row_sum(i)))
        .sum()
}

/// Lipschitz envelope `B(y) = sum_i [f_i(0) + gamma_i sum_j |y_ij|]`.
///
/// Since every `|y_ij|` decays along the flow, `B` is non-increasing along
/// it and dominates the total rate until the next event.
pub fn dominating_bound(model: &ModelSpec, y: &SquareMatrix) -> f64 {
    model
        .rates()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let spread: f64 = y.row(i).iter().map(|v| v.abs()).sum();
            f.eval(0.0) + f.lipschitz_constant() * spread
        })
        .sum()
}

/// Tighter bound `sum_i f_i(sum_j max(y_ij, 0))`, valid along the flow when
/// every rate function is nondecreasing. Returns `None` otherwise.
///
/// For each row the positive part only shrinks and the negative part only
/// moves toward zero, so the row sum never exceeds its positive part.
pub fn refined_bound(model: &ModelSpec, y: &SquareMatrix) -> Option<f64> {
    if !model.rates().iter().all(|f| f.is_nondecreasing()) {
        return None;
    }
    Some(
        model
            .rates()
            .iter()
            .enumerate()
            .map(|(i, f)| f.eval(y.row(i).iter().map(|v| v.max(0.0)).sum()))
            .sum(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSpec, Diffusion, Drift, JumpMap, RateFunction, State};
    use alloc::vec;

    fn model(rates: Vec<RateFunction>, c: SquareMatrix, alpha: SquareMatrix) -> ModelSpec {
        let m = rates.len();
        ModelSpec::new(
            rates,
            KernelMatrix::new(c, alpha).unwrap(),
            CoefficientSpec::new(
                Drift::Linear { beta: 1.0, offset: 0.0 },
                Diffusion::Constant { sigma: 1.0 },
                JumpMap::Constant { value: 0.0 },
            ),
            State::at_rest(0.0, m),
        )
        .unwrap()
    }

    fn half_life_kernel() -> KernelMatrix {
        KernelMatrix::new(SquareMatrix::filled(1, -1.0), SquareMatrix::filled(1, core::f64::consts::LN_2)).unwrap()
    }

    #[test]
    fn flow_examples() {
        let k = half_life_kernel();
        let y = SquareMatrix::filled(1, 1.0);
        assert_eq!(flow_y(&k, &y, 0.0).unwrap(), y);
        let one = flow_y(&k, &y, 1.0).unwrap();
        assert!((one[(0, 0)] - 0.5).abs() < 1e-15);
        let two = flow_y(&k, &y, 2.0).unwrap();
        assert!((two[(0, 0)] - 0.25).abs() < 1e-15);
        let twice = flow_y(&k, &one, 1.0).unwrap();
        assert!((two[(0, 0)] - twice[(0, 0)]).abs() < 1e-15);
        assert_eq!(flow_y(&k, &y, -1.0), Err(IntensityError::NegativeTime(-1.0)));
    }

    #[test]
    fn jump_examples() {
        let k = KernelMatrix::new(
            SquareMatrix::from_rows([[0.1, 0.2], [0.3, 0.4]]),
            SquareMatrix::filled(2, 1.0),
        )
        .unwrap();
        let y = apply_jump(&k, &SquareMatrix::zeros(2), 0).unwrap();
        assert_eq!(y, SquareMatrix::from_rows([[0.1, 0.0], [0.3, 0.0]]));
        let y2 = apply_jump(&k, &y, 0).unwrap();
        assert_eq!(y2.column(0), vec![0.2, 0.6]);
        assert_eq!(y2.column(1), vec![0.0, 0.0]);
        assert!(matches!(
            apply_jump(&k, &y, 2),
            Err(IntensityError::ComponentOutOfRange { index: 2, dim: 2 })
        ));

        let k1 = half_life_kernel();
        let y = apply_jump(&k1, &SquareMatrix::filled(1, 3.0), 0).unwrap();
        assert_eq!(y[(0, 0)], 2.0);
    }

    #[test]
    fn intensity_examples() {
        let m = model(
            vec![RateFunction::Constant { level: 2.0 }; 2],
            SquareMatrix::zeros(2),
            SquareMatrix::filled(2, 1.0),
        );
        let y = SquareMatrix::from_rows([[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(intensities(&m, &y).0, vec![2.0, 2.0]);
        assert_eq!(total_rate(&m, &y), 4.0);

        let affine = RateFunction::AffineClipped { floor: 0.1, intercept: 0.0, slope: 1.0 };
        let m = model(vec![affine; 2], SquareMatrix::zeros(2), SquareMatrix::filled(2, 1.0));
        assert_eq!(intensities(&m, &y).0, vec![3.0, 7.0]);
        assert_eq!(total_rate(&m, &y), 10.0);
        assert_eq!(total_rate(&m, &y.scaled(0.0)), 0.2);

        let m = model(
            vec![RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 }],
            SquareMatrix::zeros(1),
            SquareMatrix::filled(1, 1.0),
        );
        assert_eq!(intensities(&m, &SquareMatrix::filled(1, 0.5)).0, vec![1.5]);
    }

    #[test]
    fn dominating_bound_examples() {
        let m = model(
            vec![RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: 1.0 }],
            SquareMatrix::zeros(1),
            SquareMatrix::filled(1, 1.0),
        );
        assert_eq!(dominating_bound(&m, &SquareMatrix::zeros(1)), 1.0);
        let y = SquareMatrix::filled(1, -2.0);
        assert_eq!(dominating_bound(&m, &y), 3.0);
        assert_eq!(total_rate(&m, &y), 0.1);
        assert_eq!(refined_bound(&m, &y), Some(1.0));
    }

    #[test]
    fn refined_bound_requires_monotone_rates() {
        let m = model(
            vec![RateFunction::AffineClipped { floor: 0.1, intercept: 1.0, slope: -1.0 }],
            SquareMatrix::zeros(1),
            SquareMatrix::filled(1, 1.0),
        );
        assert_eq!(refined_bound(&m, &SquareMatrix::zeros(1)), None);
    }
}
