//! Deterministic gradient ascent with backtracking.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerBudget {
    pub max_steps: usize,
    pub initial_step: f64,
    pub tolerance: f64,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        Self { max_steps: 20, initial_step: 1e-2, tolerance: 1e-6 }
    }
}

impl OptimizerBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || !(self.initial_step > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::Config("optimizer budget entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub x: DMatrix<f64>,
    pub objective: f64,
    /// Objective after the start and after every accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
}

const MAX_HALVINGS: usize = 50;

/// Maximize `f` from `x0`, where `f` returns the objective and its gradient.
///
/// Each step tries `x + step·∇f`; the step halves until the objective does not
/// decrease and doubles after an accepted step. Stops after `max_steps`
/// accepted steps, when ‖∇f‖ < tol·(1 + |f|), or when no step helps.
pub fn gradient_ascent<F>(x0: DMatrix<f64>, mut f: F, budget: &OptimizerBudget) -> Result<AscentResult>
where
    F: FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    let (mut value, mut grad) = f(&x0)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("objective is not finite at the starting point ({value})")));
    }
    let mut x = x0;
    let mut trace = vec![value];
    let mut step = budget.initial_step;
    let mut converged = false;
    let mut evaluations = 1;
    for _ in 0..budget.max_steps {
        if grad.norm() < budget.tolerance * (1.0 + value.abs()) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &x + &grad * step;
            let (v, g) = f(&candidate)?;
            evaluations += 1;
            if v.is_finite() && v >= value && g.iter().all(|e| e.is_finite()) {
                x = candidate;
                value = v;
                grad = g;
                trace.push(value);
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    if !converged && grad.norm() < budget.tolerance * (1.0 + value.abs()) {
        converged = true;
    }
    Ok(AscentResult { x, objective: value, trace, converged, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_monotonically() {
        let target = DMatrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let budget = OptimizerBudget { max_steps: 500, initial_step: 1e-2, tolerance: 1e-10 };
        let res = gradient_ascent(
            DMatrix::zeros(2, 1),
            |x| {
                let d = x - &target;
                Ok((-d.norm_squared(), -2.0 * d))
            },
            &budget,
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.x - target).norm() < 1e-8);
        assert!(res.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn stationary_start_is_returned() {
        let res = gradient_ascent(
            DMatrix::from_element(1, 1, 2.0),
            |x| {
                let d = x[(0, 0)] - 2.0;
                Ok((-d * d, DMatrix::from_element(1, 1, -2.0 * d)))
            },
            &OptimizerBudget::default(),
        )
        .unwrap();
        assert_eq!(res.x[(0, 0)], 2.0);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = gradient_ascent(DMatrix::zeros(1, 1), |_| Ok((f64::NAN, DMatrix::zeros(1, 1))), &OptimizerBudget::default());
        assert!(r.is_err());
    }
}
