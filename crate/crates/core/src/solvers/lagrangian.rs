//! Penalized (Lagrangian) lasso by cyclic coordinate descent.
//!
//! Minimizes `(1/n)||Y - X beta||^2 + 2 lambda ||beta||_1`. The factor 2
//! makes the stationarity condition read `(1/n) X_j^T r = lambda sign(beta_j)`.

use nalgebra::DVector;

use super::{Fit, SolverConfig};
use crate::error::{Error, Result};
use crate::types::Dataset;

/// Sweeps stop once every subgradient condition holds to this absolute level.
pub const KKT_TOL: f64 = 1e-9;

pub fn fit_lagrangian(data: &Dataset, lambda: f64, cfg: &SolverConfig) -> Result<Fit> {
    fit_lagrangian_from(data, lambda, cfg, None)
}

pub fn fit_lagrangian_from(
    data: &Dataset,
    lambda: f64,
    cfg: &SolverConfig,
    start: Option<&DVector<f64>>,
) -> Result<Fit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let x = data.x();
    let mut beta = match start {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                what: "warm start",
                expected: p,
                found: s.len(),
            })
        }
        None => DVector::zeros(p),
    };
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut resid = data.y() - x * &beta;

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_iter {
        sweeps += 1;
        let mut max_step = 0.0_f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let xj = x.column(j);
            let old = beta[j];
            let z = xj.dot(&resid) / nf + col_sq[j] * old;
            let new = soft_threshold(z, lambda) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &xj, 1.0);
                beta[j] = new;
                max_step = max_step.max((new - old).abs() * col_sq[j].sqrt());
            }
        }
        if max_step <= KKT_TOL && kkt_violation(data, &beta, lambda) <= KKT_TOL {
            converged = true;
            break;
        }
    }
    Ok(Fit::new(data, beta, sweeps, converged))
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Largest violation of the subgradient conditions at `beta`.
pub fn kkt_violation(data: &Dataset, beta: &DVector<f64>, lambda: f64) -> f64 {
    let r = data.y() - data.x() * beta;
    let corr = data.x().tr_mul(&r) / data.n() as f64;
    corr.iter()
        .zip(beta.iter())
        .map(|(&c, &b)| {
            if b != 0.0 {
                (c - lambda * b.signum()).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest `lambda` for which `beta = 0` is optimal.
pub fn lambda_max(data: &Dataset) -> f64 {
    (data.x().tr_mul(data.y()) / data.n() as f64).amax()
}
