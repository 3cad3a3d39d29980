//! Population, empirical and cross-validated risks, the linear oracle, and
//! excess risk.
//!
//! All risks are quadratic forms `gamma^T Sigma gamma` in the augmented
//! vector `gamma = (-1, beta^T)^T`, with `Sigma` the population, full-sample,
//! validation-fold or training-fold second moment of `Z = (Y, X^T)^T`. For the
//! linear model the population form collapses to
//! `(beta - beta*)^T D (beta - beta*) + sigma^2`, which is what the
//! simulations evaluate: excess risk here is exact, not estimated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solvers::{fit_constrained, SolverConfig};
use crate::types::{
    quad_form, AugmentedSecondMoment, Dataset, EstimatorSpec, FoldScheme, PopulationModel,
};

/// Eigenvalues above `-EIGEN_CLIP_TOL` are clipped to zero when factoring a
/// covariance; anything more negative is rejected.
pub const EIGEN_CLIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub population_risk: f64,
    pub oracle_risk: f64,
    pub excess_risk: f64,
    pub noise_floor: f64,
}

/// Exact `Sigma_n = E[Z Z^T]` under the linear model.
pub fn population_second_moment(model: &PopulationModel) -> AugmentedSecondMoment {
    let p = model.p();
    let d = model.d();
    let db = d * model.beta_star();
    let mut sigma = DMatrix::zeros(p + 1, p + 1);
    sigma[(0, 0)] = model.beta_star().dot(&db) + model.sigma2();
    for j in 0..p {
        sigma[(0, j + 1)] = db[j];
        sigma[(j + 1, 0)] = db[j];
    }
    sigma.view_mut((1, 1), (p, p)).copy_from(d);
    AugmentedSecondMoment::new(sigma).expect("population second moment is well formed")
}

/// `R(beta) = E(Y - X^T beta)^2 = (beta - beta*)^T D (beta - beta*) + sigma^2`.
pub fn population_risk(beta: &DVector<f64>, model: &PopulationModel) -> Result<f64> {
    if beta.len() != model.p() {
        return Err(Error::DimensionMismatch {
            what: "coefficients vs model",
            expected: model.p(),
            found: beta.len(),
        });
    }
    let diff = beta - model.beta_star();
    Ok(quad_form(model.d(), &diff).max(0.0) + model.sigma2())
}

/// `(1/n)||Y - X beta||^2`.
pub fn empirical_risk(beta: &DVector<f64>, data: &Dataset) -> Result<f64> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "coefficients vs design",
            expected: data.p(),
            found: beta.len(),
        });
    }
    Ok((data.y() - data.x() * beta).norm_squared() / data.n() as f64)
}

/// Mean squared prediction error of `beta` on the given rows.
pub(crate) fn validation_error(beta: &DVector<f64>, data: &Dataset, rows: &[usize]) -> f64 {
    let x = data.x();
    let sum: f64 = rows
        .iter()
        .map(|&r| {
            let pred: f64 = x.row(r).iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let e = data.y()[r] - pred;
            e * e
        })
        .sum();
    sum / rows.len() as f64
}

/// Fold order used when averaging, so the CV average does not depend on the
/// order in which folds are listed.
pub(crate) fn canonical_fold_order(folds: &FoldScheme) -> Vec<usize> {
    let mut order: Vec<usize> = (0..folds.k()).collect();
    order.sort_by_key(|&v| folds.folds()[v].iter().min().copied());
    order
}

pub(crate) fn check_folds(data: &Dataset, folds: &FoldScheme) -> Result<()> {
    if folds.n() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "fold scheme vs dataset",
            expected: data.n(),
            found: folds.n(),
        });
    }
    for (v, fold) in folds.folds().iter().enumerate() {
        if fold.len() >= data.n() {
            return Err(Error::invalid(format!(
                "fold {v} leaves no training observations"
            )));
        }
    }
    Ok(())
}

/// K-fold CV estimate of the risk at the radius in `spec`: each fold's fit
/// uses only the complement of the fold, and the fold errors are averaged
/// with equal weight.
pub fn cv_risk(
    data: &Dataset,
    spec: &EstimatorSpec,
    folds: &FoldScheme,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_folds(data, folds)?;
    let mut errors = vec![0.0; folds.k()];
    for (v, fold) in folds.folds().iter().enumerate() {
        let train = data.rows(&folds.complement(v));
        let fit = fit_constrained(&train, spec, cfg)?;
        errors[v] = validation_error(&fit.beta, data, fold);
    }
    let total: f64 = canonical_fold_order(folds).iter().map(|&v| errors[v]).sum();
    Ok(total / folds.k() as f64)
}

/// A square factor `L` with `L^T L = D`, used both to correlate designs
/// (`X <- X D^{1/2}`) and to turn the oracle problem into least squares.
///
/// The stored factor is the symmetric square root `D^{1/2}`.
#[derive(Debug, Clone)]
pub struct DesignFactor {
    sqrt: DMatrix<f64>,
    equicorrelation: Option<(f64, f64)>,
}

impl DesignFactor {
    /// Symmetric square root by eigendecomposition, clipping eigenvalues in
    /// `[-EIGEN_CLIP_TOL, 0)` to zero.
    pub fn from_covariance(d: &DMatrix<f64>) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::invalid("covariance must be square"));
        }
        let eig = d.clone().symmetric_eigen();
        if let Some(&min) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
            if min < -EIGEN_CLIP_TOL {
                return Err(Error::invalid(format!(
                    "covariance is indefinite (smallest eigenvalue {min:e})"
                )));
            }
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let v = &eig.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
        let mut sqrt = &scaled * v.transpose();
        symmetrize(&mut sqrt);
        Ok(DesignFactor {
            sqrt,
            equicorrelation: None,
        })
    }

    /// Closed-form square root of `D(rho) = (1 - rho) I + rho 1 1^T`.
    ///
    /// `D(rho)` has eigenvalue `1 + (p - 1) rho` on the all-ones direction
    /// and `1 - rho` on its complement, so
    /// `D^{1/2} = sqrt(1 - rho) I + c 1 1^T` with
    /// `c = (sqrt(1 + (p - 1) rho) - sqrt(1 - rho)) / p`.
    pub fn equicorrelation(p: usize, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) || p == 0 {
            return Err(Error::invalid(format!("need p >= 1 and rho in [0, 1), got rho={rho}")));
        }
        let a = (1.0 - rho).sqrt();
        let c = ((1.0 + (p as f64 - 1.0) * rho).sqrt() - a) / p as f64;
        let sqrt = DMatrix::from_fn(p, p, |i, j| if i == j { a + c } else { c });
        Ok(DesignFactor {
            sqrt,
            equicorrelation: Some((a, c)),
        })
    }

    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn p(&self) -> usize {
        self.sqrt.nrows()
    }

    /// `X D^{1/2}`.
    pub fn correlate(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self.equicorrelation {
            Some((a, c)) => {
                let row_sums: Vec<f64> = x.row_iter().map(|r| r.sum()).collect();
                DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| a * x[(i, j)] + c * row_sums[i])
            }
            None => x * &self.sqrt,
        }
    }
}

/// `D(rho)` with unit diagonal and constant off-diagonal `rho`.
pub fn equicorrelation_matrix(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Linear oracle `beta_t = argmin_{||beta||_1 <= t} R(beta)`.
pub fn oracle_coefficients(
    model: &PopulationModel,
    t: f64,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let factor = DesignFactor::from_covariance(model.d())?;
    oracle_with_factor(&factor, model.beta_star(), t, cfg)
}

/// Oracle with a precomputed factor of `D`: minimizes
/// `(1/p)||L beta* - L beta||^2 = (1/p)(beta - beta*)^T D (beta - beta*)`
/// over the l1 ball.
pub fn oracle_with_factor(
    factor: &DesignFactor,
    beta_star: &DVector<f64>,
    t: f64,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    if beta_star.len() != factor.p() {
        return Err(Error::DimensionMismatch {
            what: "coefficients vs covariance factor",
            expected: factor.p(),
            found: beta_star.len(),
        });
    }
    if t >= beta_star.lp_norm(1) {
        return Ok(beta_star.clone());
    }
    let synthetic = Dataset::new(factor.sqrt() * beta_star, factor.sqrt().clone())?;
    Ok(fit_constrained(&synthetic, &EstimatorSpec::lasso(t)?, cfg)?.beta)
}

/// `E(t_hat, t_n) = R(beta_hat) - R(beta_{t_n})`.
pub fn excess_risk(
    beta_hat: &DVector<f64>,
    t_n: f64,
    model: &PopulationModel,
    cfg: &SolverConfig,
) -> Result<RiskReport> {
    let oracle = oracle_coefficients(model, t_n, cfg)?;
    risk_report(beta_hat, &oracle, model)
}

/// Risk report against an already computed oracle.
pub fn risk_report(
    beta_hat: &DVector<f64>,
    oracle: &DVector<f64>,
    model: &PopulationModel,
) -> Result<RiskReport> {
    let estimate = population_risk(beta_hat, model)?;
    let oracle_risk = population_risk(oracle, model)?;
    Ok(RiskReport {
        population_risk: estimate,
        oracle_risk,
        excess_risk: estimate - oracle_risk,
        noise_floor: model.sigma2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NoiseKind;

    fn model(beta: &[f64], d: DMatrix<f64>) -> PopulationModel {
        PopulationModel::new(DVector::from_column_slice(beta), d, 1.0, NoiseKind::Gaussian)
            .unwrap()
    }

    #[test]
    fn second_moment_blocks() {
        let m = model(&[0.0, 0.0, 0.0], DMatrix::identity(3, 3));
        assert_eq!(population_second_moment(&m).matrix(), &DMatrix::identity(4, 4));
        let m = model(&[1.0, 2.0], DMatrix::identity(2, 2));
        let s = population_second_moment(&m);
        assert_eq!(s.matrix()[(0, 0)], 6.0);
        assert_eq!(s.matrix()[(0, 1)], 1.0);
        assert_eq!(s.matrix()[(0, 2)], 2.0);
        assert_eq!(s.matrix()[(0, 0)] - m.snr(), m.sigma2());
    }

    #[test]
    fn population_risk_examples() {
        let d = equicorrelation_matrix(3, 0.3);
        let m = model(&[1.0, -0.5, 2.0], d);
        assert_eq!(population_risk(m.beta_star(), &m).unwrap(), 1.0);
        let zero = DVector::zeros(3);
        assert!((population_risk(&zero, &m).unwrap() - (m.snr() + 1.0)).abs() < 1e-12);
        let m = model(&[3.0, 0.0], DMatrix::identity(2, 2));
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(population_risk(&b, &m).unwrap(), 5.0);
        assert!(population_risk(&DVector::zeros(3), &m).is_err());
    }

    #[test]
    fn population_risk_equals_quadratic_form() {
        let m = model(&[0.7, -1.2, 0.1], equicorrelation_matrix(3, 0.5));
        let s = population_second_moment(&m);
        let b = DVector::from_vec(vec![0.2, 0.4, -0.9]);
        let a = population_risk(&b, &m).unwrap();
        assert!((a - s.risk_of(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn empirical_risk_examples() {
        let data = Dataset::from_rows(&[1.0, 2.0], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(empirical_risk(&DVector::zeros(2), &data).unwrap(), 2.5);
        assert_eq!(empirical_risk(data.y(), &data).unwrap(), 0.0);
    }

    #[test]
    fn cv_risk_constant_data() {
        let data = Dataset::from_rows(&[1.0; 4], &[&[1.0], &[1.0], &[1.0], &[1.0]]).unwrap();
        let folds = FoldScheme::k_fold(4, 2, 3).unwrap();
        let cfg = SolverConfig::default();
        let r = cv_risk(&data, &EstimatorSpec::lasso(1.5).unwrap(), &folds, &cfg).unwrap();
        assert!(r < 1e-20);
        let r = cv_risk(&data, &EstimatorSpec::lasso(0.0).unwrap(), &folds, &cfg).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn cv_risk_rejects_empty_training_set() {
        let data = Dataset::from_rows(&[1.0, 2.0], &[&[1.0], &[1.0]]).unwrap();
        let folds = FoldScheme::k_fold(2, 1, 0).unwrap();
        let spec = EstimatorSpec::lasso(1.0).unwrap();
        assert!(cv_risk(&data, &spec, &folds, &SolverConfig::default()).is_err());
    }

    #[test]
    fn oracle_examples() {
        let cfg = SolverConfig::default();
        let m = model(&[3.0, 0.0], DMatrix::identity(2, 2));
        assert_eq!(oracle_coefficients(&m, 5.0, &cfg).unwrap(), m.beta_star().clone());
        let b = oracle_coefficients(&m, 1.0, &cfg).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-10 && b[1].abs() < 1e-10);
        let b0 = oracle_coefficients(&m, 0.0, &cfg).unwrap();
        assert_eq!(b0, DVector::zeros(2));
        assert_eq!(population_risk(&b0, &m).unwrap(), m.snr() + 1.0);
    }

    #[test]
    fn excess_risk_examples() {
        let cfg = SolverConfig::default();
        let m = model(&[3.0, 0.0], DMatrix::identity(2, 2));
        let rep = excess_risk(&DVector::zeros(2), 1.0, &m, &cfg).unwrap();
        assert!((rep.excess_risk - 5.0).abs() < 1e-9);
        assert_eq!(rep.excess_risk, rep.population_risk - rep.oracle_risk);
        let rep = excess_risk(m.beta_star(), 1.0, &m, &cfg).unwrap();
        assert!(rep.excess_risk < 0.0);
        let oracle = oracle_coefficients(&m, 1.0, &cfg).unwrap();
        assert_eq!(excess_risk(&oracle, 1.0, &m, &cfg).unwrap().excess_risk, 0.0);
    }

    #[test]
    fn equicorrelation_sqrt_matches_eigen_route() {
        for (p, rho) in [(2, 0.5), (5, 0.2), (7, 0.95), (4, 0.0)] {
            let d = equicorrelation_matrix(p, rho);
            let closed = DesignFactor::equicorrelation(p, rho).unwrap();
            let eig = DesignFactor::from_covariance(&d).unwrap();
            assert!((closed.sqrt() - eig.sqrt()).amax() < 1e-12);
            assert!((closed.sqrt() * closed.sqrt() - &d).amax() < 1e-12);
            let x = DMatrix::from_fn(3, p, |i, j| (i * p + j) as f64 * 0.1 - 0.4);
            assert!((closed.correlate(&x) - eig.correlate(&x)).amax() < 1e-12);
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(DesignFactor::from_covariance(&d).is_err());
    }
}
