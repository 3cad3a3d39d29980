//! Solvers for the constrained and penalized lasso families.

mod constrained;
mod lagrangian;
mod projection;

use nalgebra::DVector;

pub use constrained::{fit_constrained, fit_constrained_from};
pub use lagrangian::{fit_lagrangian, fit_lagrangian_from, kkt_violation, lambda_max, KKT_TOL};
pub use projection::{project_group_ball, project_l1_ball};

use crate::error::{Error, Result};
use crate::types::Dataset;

/// Iteration control shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative objective decrease below which an iterative solver stops.
    pub tol: f64,
    /// Coefficients at or below this magnitude count as zero for `df_hat`.
    pub zero_threshold: f64,
}

impl SolverConfig {
    pub fn new(max_iter: usize, tol: f64, zero_threshold: f64) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(tol > 0.0) || !(zero_threshold > 0.0) {
            return Err(Error::invalid("tol and zero_threshold must be positive"));
        }
        Ok(SolverConfig {
            max_iter,
            tol,
            zero_threshold,
        })
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 50_000,
            tol: 1e-10,
            zero_threshold: 1e-8,
        }
    }
}

/// Solver output. `objective` is `(1/n)||Y - X beta||^2` regardless of the
/// loss the solver minimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit first; the coefficients are still
    /// feasible and usable.
    pub converged: bool,
}

impl Fit {
    pub(crate) fn new(data: &Dataset, beta: DVector<f64>, iterations: usize, converged: bool) -> Self {
        let objective = (data.y() - data.x() * &beta).norm_squared() / data.n() as f64;
        Fit {
            beta,
            objective,
            iterations,
            converged,
        }
    }
}

/// `t_0 = ||(X^T X)^+ X^T Y||_1`, the l1 norm of the minimum-norm least
/// squares solution. For `t >= t_0` the constrained fit attains the
/// least-squares residual.
pub fn binding_threshold(data: &Dataset) -> Result<f64> {
    Ok(min_norm_least_squares(data)?.lp_norm(1))
}

/// Minimum-norm least-squares coefficients via the SVD pseudoinverse.
pub fn min_norm_least_squares(data: &Dataset) -> Result<DVector<f64>> {
    let svd = data.x().clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * data.n().max(data.p()) as f64 * smax;
    svd.solve(data.y(), eps)
        .map_err(|e| Error::invalid(format!("pseudoinverse failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_threshold_examples() {
        let data = Dataset::from_rows(
            &[1.0, -2.0, 3.0],
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
        )
        .unwrap();
        assert!((binding_threshold(&data).unwrap() - 6.0).abs() < 1e-12);
        let zero = Dataset::from_rows(&[0.0, 0.0], &[&[1.0, 2.0], &[3.0, 1.0]]).unwrap();
        assert_eq!(binding_threshold(&zero).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0, 1e-6, 1e-8).is_err());
        assert!(SolverConfig::new(10, 0.0, 1e-8).is_err());
        assert!(SolverConfig::new(10, 1e-6, -1.0).is_err());
        assert_eq!(SolverConfig::default().max_iter, 50_000);
    }
}
