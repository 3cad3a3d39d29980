//! Tuning-parameter selectors over the search interval `T = [0, t_max]`:
//! K-fold cross-validation, the GIC family (AIC, BIC), GCV, and scaled
//! sparse regression.
//!
//! Every grid search breaks ties toward the smallest radius.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::risk::{canonical_fold_order, check_folds, empirical_risk, validation_error};
use crate::solvers::{fit_constrained_from, fit_lagrangian_from, Fit, SolverConfig};
use crate::types::{Dataset, EstimatorSpec, FoldScheme, SelectionResult, Selector};

/// Maximum iterations of the SSR noise-level update.
pub const SSR_MAX_ITER: usize = 100;
/// SSR stops once successive noise-level estimates differ by less than this.
pub const SSR_TOL: f64 = 1e-6;

/// Candidate radii: `size` uniform points from 0 to `t_max` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    t_max: f64,
    points: Vec<f64>,
}

impl SearchGrid {
    /// A grid from explicit points. They must start at 0 and increase
    /// strictly, except that an all-zero grid is allowed.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a search grid needs at least 2 points"));
        }
        if points[0] != 0.0 {
            return Err(Error::invalid("a search grid must start at 0"));
        }
        if !points.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("grid points must be finite"));
        }
        let degenerate = points.iter().all(|&t| t == 0.0);
        if !degenerate && points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid points must be strictly increasing"));
        }
        Ok(SearchGrid {
            t_max: *points.last().unwrap(),
            points,
        })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }
}

/// `t_max = ||Y||^2 / a_n`.
pub fn compute_t_max(data: &Dataset, a_n: f64) -> Result<f64> {
    if !(a_n > 0.0 && a_n.is_finite()) {
        return Err(Error::invalid(format!("a_n must be positive and finite, got {a_n}")));
    }
    Ok(data.y().norm_squared() / a_n)
}

/// Slowly diverging factor `m_n = max(1, log log n)`.
pub fn default_m_n(n: usize) -> f64 {
    let n = n as f64;
    if n <= std::f64::consts::E {
        return 1.0;
    }
    n.ln().ln().max(1.0)
}

/// `log(p)^(1/4 + 1/(2q))`; `q = f64::INFINITY` drops the `1/(2q)` term.
pub(crate) fn log_p_power(log_p: f64, q: f64) -> f64 {
    let inv = if q.is_infinite() { 0.0 } else { 1.0 / (2.0 * q) };
    log_p.powf(0.25 + inv)
}

fn check_q(q: f64) -> Result<()> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::invalid(format!("q must be >= 1 (or infinite), got {q}")));
    }
    Ok(())
}

/// `a_n = n log(p)^(1/4 + 1/(2q)) m_n / b_n^(1/4)`.
pub fn default_a_n(n: usize, p: usize, q: f64, b_n: usize, m_n: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::invalid("a_n needs p >= 2 so that log p > 0"));
    }
    check_q(q)?;
    if b_n == 0 || b_n > n {
        return Err(Error::invalid(format!("b_n must lie in 1..={n}, got {b_n}")));
    }
    if !(m_n > 0.0 && m_n.is_finite()) {
        return Err(Error::invalid(format!("m_n must be positive, got {m_n}")));
    }
    Ok(n as f64 * log_p_power((p as f64).ln(), q) * m_n / (b_n as f64).powf(0.25))
}

/// `t_n = b_n^(1/4) / (m_n log(p)^(1/4 + 1/(2q)))`, the largest radius the
/// risk-consistency result allows (taken with equality).
pub fn default_t_n(p: usize, q: f64, b_n: usize, m_n: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::invalid("t_n needs p >= 2 so that log p > 0"));
    }
    check_q(q)?;
    if !(m_n > 0.0 && m_n.is_finite()) {
        return Err(Error::invalid(format!("m_n must be positive, got {m_n}")));
    }
    Ok((b_n as f64).powf(0.25) / (m_n * log_p_power((p as f64).ln(), q)))
}

/// Uniform grid of `size` points on `[0, t_max]`.
pub fn build_grid(t_max: f64, size: usize) -> Result<SearchGrid> {
    if size < 2 {
        return Err(Error::invalid(format!("grid size must be >= 2, got {size}")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::invalid(format!("t_max must be finite and >= 0, got {t_max}")));
    }
    let last = (size - 1) as f64;
    let mut points: Vec<f64> = (0..size).map(|i| t_max * i as f64 / last).collect();
    points[size - 1] = t_max;
    Ok(SearchGrid { t_max, points })
}

/// Degrees-of-freedom estimate `||beta||_0 - 1`, floored at 0, counting
/// entries with magnitude above `zero_threshold`.
pub fn df_hat(beta: &DVector<f64>, zero_threshold: f64) -> usize {
    beta.iter()
        .filter(|b| b.abs() > zero_threshold)
        .count()
        .saturating_sub(1)
}

/// First index of the minimum, so ties go to the smallest radius. NaN
/// entries never win.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Fits along the grid, each warm-started from the previous radius.
pub fn fit_path(
    data: &Dataset,
    family: &EstimatorSpec,
    grid: &SearchGrid,
    cfg: &SolverConfig,
) -> Result<Vec<Fit>> {
    let mut fits: Vec<Fit> = Vec::with_capacity(grid.size());
    for &t in grid.points() {
        let spec = family.with_radius(t)?;
        let fit = fit_constrained_from(data, &spec, cfg, fits.last().map(|f| &f.beta))?;
        fits.push(fit);
    }
    Ok(fits)
}

/// CV risk at every grid point. Folds are fitted concurrently, each along
/// the grid with warm starts; fold errors are summed in canonical fold
/// order. The flag is false if any fold fit hit its iteration cap.
pub fn cv_curve(
    data: &Dataset,
    family: &EstimatorSpec,
    folds: &FoldScheme,
    grid: &SearchGrid,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, bool)> {
    check_folds(data, folds)?;
    let per_fold: Vec<(Vec<f64>, bool)> = (0..folds.k())
        .into_par_iter()
        .map(|v| {
            let train = data.rows(&folds.complement(v));
            let path = fit_path(&train, family, grid, cfg)?;
            let errors = path
                .iter()
                .map(|f| validation_error(&f.beta, data, &folds.folds()[v]))
                .collect();
            Ok((errors, path.iter().all(|f| f.converged)))
        })
        .collect::<Result<_>>()?;
    let order = canonical_fold_order(folds);
    let k = folds.k() as f64;
    let curve = (0..grid.size())
        .map(|g| order.iter().map(|&v| per_fold[v].0[g]).sum::<f64>() / k)
        .collect();
    Ok((curve, per_fold.iter().all(|f| f.1)))
}

/// K-fold CV selection: minimize the CV curve, then refit on the full data
/// at the chosen radius.
pub fn select_cv(
    data: &Dataset,
    family: &EstimatorSpec,
    folds: &FoldScheme,
    grid: &SearchGrid,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let (curve, folds_converged) = cv_curve(data, family, folds, grid, cfg)?;
    let i = argmin(&curve).ok_or_else(|| Error::Selection("CV curve is all NaN".into()))?;
    let t_hat = grid.points()[i];
    let fit = fit_constrained_from(data, &family.with_radius(t_hat)?, cfg, None)?;
    Ok(SelectionResult {
        selector: Selector::Cv,
        t_hat,
        grid: grid.points().to_vec(),
        criterion: curve,
        beta_hat: fit.beta,
        converged: folds_converged && fit.converged,
    })
}

/// Scaling of the GIC complexity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GicScaling {
    /// `R + c_n sigma^2 df / n`, on the scale of the per-observation risk.
    #[default]
    Normalized,
    /// `R + c_n sigma^2 df`, taken literally.
    Unnormalized,
}

/// `GIC(t; c_n)` from an empirical risk and a df estimate.
pub fn gic_value(risk: f64, df: usize, n: usize, c_n: f64, sigma2: f64, scaling: GicScaling) -> f64 {
    let penalty = c_n * sigma2 * df as f64;
    match scaling {
        GicScaling::Normalized => risk + penalty / n as f64,
        GicScaling::Unnormalized => risk + penalty,
    }
}

/// `R / (1 - df/n)^2`, infinite once `df >= n`.
pub fn gcv_value(risk: f64, df: usize, n: usize) -> f64 {
    if df >= n {
        return f64::INFINITY;
    }
    let shrink = 1.0 - df as f64 / n as f64;
    risk / (shrink * shrink)
}

fn from_path(
    selector: Selector,
    grid: &SearchGrid,
    path: &[Fit],
    criterion: Vec<f64>,
) -> Result<SelectionResult> {
    if path.len() != grid.size() {
        return Err(Error::DimensionMismatch {
            what: "path vs grid",
            expected: grid.size(),
            found: path.len(),
        });
    }
    let i = argmin(&criterion)
        .filter(|&i| criterion[i].is_finite())
        .ok_or_else(|| {
            Error::Selection(format!("{selector}: no grid point has a finite criterion"))
        })?;
    Ok(SelectionResult {
        selector,
        t_hat: grid.points()[i],
        grid: grid.points().to_vec(),
        criterion,
        beta_hat: path[i].beta.clone(),
        converged: path.iter().all(|f| f.converged),
    })
}

/// GIC selection on a precomputed full-data path.
#[allow(clippy::too_many_arguments)]
pub fn select_gic_on_path(
    selector: Selector,
    data: &Dataset,
    grid: &SearchGrid,
    path: &[Fit],
    c_n: f64,
    sigma2: f64,
    scaling: GicScaling,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("GIC needs a positive noise variance"));
    }
    if !(c_n > 0.0) {
        return Err(Error::invalid("GIC needs a positive c_n"));
    }
    let criterion = path
        .iter()
        .map(|f| {
            let risk = empirical_risk(&f.beta, data)?;
            Ok(gic_value(risk, df_hat(&f.beta, cfg.zero_threshold), data.n(), c_n, sigma2, scaling))
        })
        .collect::<Result<_>>()?;
    from_path(selector, grid, path, criterion)
}

/// Generalized information criterion `R(beta_t) + c_n sigma^2 df(t) / n`,
/// with the true noise variance plugged in.
#[allow(clippy::too_many_arguments)]
pub fn select_gic(
    selector: Selector,
    data: &Dataset,
    family: &EstimatorSpec,
    grid: &SearchGrid,
    c_n: f64,
    sigma2: f64,
    scaling: GicScaling,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let path = fit_path(data, family, grid, cfg)?;
    select_gic_on_path(selector, data, grid, &path, c_n, sigma2, scaling, cfg)
}

/// AIC: GIC with `c_n = 2`.
pub fn select_aic(
    data: &Dataset,
    family: &EstimatorSpec,
    grid: &SearchGrid,
    sigma2: f64,
    scaling: GicScaling,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    select_gic(Selector::Aic, data, family, grid, 2.0, sigma2, scaling, cfg)
}

/// BIC: GIC with `c_n = log n`.
pub fn select_bic(
    data: &Dataset,
    family: &EstimatorSpec,
    grid: &SearchGrid,
    sigma2: f64,
    scaling: GicScaling,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let c_n = (data.n() as f64).ln();
    select_gic(Selector::Bic, data, family, grid, c_n, sigma2, scaling, cfg)
}

/// GCV selection on a precomputed full-data path.
pub fn select_gcv_on_path(
    data: &Dataset,
    grid: &SearchGrid,
    path: &[Fit],
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let criterion = path
        .iter()
        .map(|f| {
            let risk = empirical_risk(&f.beta, data)?;
            Ok(gcv_value(risk, df_hat(&f.beta, cfg.zero_threshold), data.n()))
        })
        .collect::<Result<_>>()?;
    from_path(Selector::Gcv, grid, path, criterion)
}

/// Generalized cross-validation, `R(beta_t) / (1 - df(t)/n)^2`.
pub fn select_gcv(
    data: &Dataset,
    family: &EstimatorSpec,
    grid: &SearchGrid,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let path = fit_path(data, family, grid, cfg)?;
    select_gcv_on_path(data, grid, &path, cfg)
}

/// `lambda_0 = sqrt(2 log p / n)`.
pub fn ssr_lambda0(n: usize, p: usize) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt()
}

/// Scaled sparse regression: alternate `sigma <- ||Y - X beta|| / sqrt(n)`
/// and `beta <- lasso(lambda_0 sigma)`, starting from the sample standard
/// deviation of `Y`.
///
/// The result's `grid` holds `||beta||_1` after each iteration and
/// `criterion` the matching noise-level estimates; `t_hat` is the final
/// `||beta||_1`. `converged` is false if the noise level did not settle
/// within [`SSR_MAX_ITER`] iterations.
pub fn select_ssr(data: &Dataset, cfg: &SolverConfig) -> Result<SelectionResult> {
    let (n, p) = (data.n(), data.p());
    if p < 2 {
        return Err(Error::invalid("SSR needs p >= 2"));
    }
    let lambda0 = ssr_lambda0(n, p);
    let y = data.y();
    let mean = y.mean();
    let mut sigma = if n > 1 {
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        y[0].abs()
    };
    let mut beta = DVector::zeros(p);
    let mut grid = Vec::new();
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut inner_ok = true;
    for _ in 0..SSR_MAX_ITER {
        if sigma <= 0.0 {
            beta.fill(0.0);
        } else {
            let fit = fit_lagrangian_from(data, lambda0 * sigma, cfg, Some(&beta))?;
            inner_ok &= fit.converged;
            beta = fit.beta;
        }
        let next = (y - data.x() * &beta).norm() / (n as f64).sqrt();
        grid.push(beta.lp_norm(1));
        trajectory.push(next);
        let step = (next - sigma).abs();
        sigma = next;
        if step < SSR_TOL || sigma == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(SelectionResult {
        selector: Selector::Ssr,
        t_hat: *grid.last().unwrap(),
        grid,
        criterion: trajectory,
        beta_hat: beta,
        converged: converged && inner_ok,
    })
}
