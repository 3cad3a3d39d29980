//! Constrained least squares over the l1 ball and the group-norm ball.
//!
//! The workhorse is accelerated projected gradient (FISTA) with monotone
//! restarts and backtracking from a power-iteration estimate of the
//! Lipschitz constant. For the l1 geometries it runs on a working set of
//! columns that grows until the full-gradient optimality conditions hold,
//! and the result is then polished by solving the equality-constrained
//! least-squares problem on the identified face of the ball exactly. The
//! polish is accepted only if the full KKT conditions verify, so it never
//! changes which point is returned beyond rounding.

use nalgebra::{DMatrix, DVector};

use super::projection::{project_group_unchecked, project_l1_unchecked};
use super::{Fit, SolverConfig};
use crate::error::{Error, Result};
use crate::types::{Dataset, EstimatorSpec, Groups, Penalty};

const POWER_ITERATIONS: usize = 50;
/// Consecutive small decreases required before FISTA declares convergence.
const PATIENCE: usize = 3;
/// Relative slack when testing full-gradient optimality (working set growth
/// and polish verification).
const KKT_SLACK: f64 = 1e-9;

/// Minimizer of `(1/n)||Y - X beta||^2` over the constraint set of `spec`.
///
/// `SqrtLasso` minimizes `(1/n)||Y - X beta||_2` instead; over the same
/// l1 ball the two problems share their minimizers. The returned
/// [`Fit::objective`] is always the squared-error empirical risk.
pub fn fit_constrained(data: &Dataset, spec: &EstimatorSpec, cfg: &SolverConfig) -> Result<Fit> {
    fit_constrained_from(data, spec, cfg, None)
}

/// As [`fit_constrained`], warm-started from `start` (projected onto the
/// constraint set first if necessary).
pub fn fit_constrained_from(
    data: &Dataset,
    spec: &EstimatorSpec,
    cfg: &SolverConfig,
    start: Option<&DVector<f64>>,
) -> Result<Fit> {
    let p = data.p();
    if let Some(s) = start {
        if s.len() != p {
            return Err(Error::DimensionMismatch {
                what: "warm start",
                expected: p,
                found: s.len(),
            });
        }
    }
    if spec.t() == 0.0 {
        return Ok(Fit::new(data, DVector::zeros(p), 0, true));
    }
    let constraint = match (spec.penalty(), spec.groups()) {
        (Penalty::GroupLasso, Some(g)) => Constraint::Group(g),
        _ => Constraint::L1,
    };
    let loss = match spec.penalty() {
        Penalty::SqrtLasso => Loss::Root,
        _ => Loss::Squared,
    };
    let t = spec.t();
    let beta0 = match start {
        Some(s) => constraint.project(s, t),
        None => DVector::zeros(p),
    };
    let fit = match constraint {
        Constraint::L1 => solve_l1_working_set(data, loss, t, beta0, cfg),
        Constraint::Group(_) => {
            let problem = Problem::new(data.x(), data.y(), loss);
            let out = fista(&problem, &|v| constraint.project(v, t), beta0, cfg, cfg.max_iter);
            Fit::new(data, out.beta, out.iterations, out.converged)
        }
    };
    Ok(fit)
}

#[derive(Clone, Copy)]
enum Constraint<'a> {
    L1,
    Group(&'a Groups),
}

impl Constraint<'_> {
    fn project(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        match self {
            Constraint::L1 => project_l1_unchecked(v, t),
            Constraint::Group(g) => project_group_unchecked(v, g, t),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Loss {
    /// `(1/n)||r||^2`
    Squared,
    /// `(1/n)||r||`
    Root,
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    n: f64,
    loss: Loss,
}

impl<'a> Problem<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, loss: Loss) -> Self {
        Problem {
            x,
            y,
            n: y.len() as f64,
            loss,
        }
    }

    /// Loss as a function of the fitted values `X beta`.
    fn value(&self, fitted: &DVector<f64>) -> f64 {
        let rss = (fitted - self.y).norm_squared();
        match self.loss {
            Loss::Squared => rss / self.n,
            Loss::Root => rss.sqrt() / self.n,
        }
    }

    fn gradient(&self, fitted: &DVector<f64>) -> DVector<f64> {
        let r = fitted - self.y;
        let g = self.x.tr_mul(&r);
        match self.loss {
            Loss::Squared => g * (2.0 / self.n),
            Loss::Root => {
                let norm = r.norm();
                if norm == 0.0 {
                    g * 0.0
                } else {
                    g / (self.n * norm)
                }
            }
        }
    }

    /// Largest eigenvalue of `X^T X` by power iteration (through the Gram
    /// matrix when it is the smaller operator).
    fn gram_top_eigenvalue(&self) -> f64 {
        let (nr, nc) = self.x.shape();
        if nc == 0 {
            return 0.0;
        }
        let gram = (nc <= nr).then(|| self.x.tr_mul(self.x));
        let apply = |v: &DVector<f64>| match &gram {
            Some(g) => g * v,
            None => self.x.tr_mul(&(self.x * v)),
        };
        let mut v = DVector::from_element(nc, 1.0 / (nc as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let w = apply(&v);
            lambda = w.norm();
            if lambda == 0.0 {
                return 0.0;
            }
            v = w / lambda;
        }
        lambda
    }

    /// Initial Lipschitz estimate of the loss gradient.
    fn lipschitz(&self, fitted: &DVector<f64>) -> f64 {
        let top = self.gram_top_eigenvalue();
        let l = match self.loss {
            Loss::Squared => 2.0 * top / self.n,
            Loss::Root => {
                let r = (fitted - self.y).norm();
                top / (self.n * r.max(1e-12))
            }
        };
        if l > 0.0 && l.is_finite() {
            l
        } else {
            1.0
        }
    }
}

struct FistaOutput {
    beta: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Monotone FISTA with backtracking. `x0` must be feasible.
fn fista(
    problem: &Problem<'_>,
    project: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
    cfg: &SolverConfig,
    max_iter: usize,
) -> FistaOutput {
    let mut x = x0;
    let mut xx = problem.x * &x;
    let mut f_x = problem.value(&xx);
    let mut y = x.clone();
    let mut xy = xx.clone();
    let mut theta = 1.0_f64;
    let mut lip = problem.lipschitz(&xx);
    // relative decrease is measured against f + floor so exact fits terminate
    let floor = 1e-8 * problem.value(&DVector::zeros(xx.len())).max(f64::MIN_POSITIVE);
    let mut quiet = 0;

    for iter in 1..=max_iter {
        let f_y = problem.value(&xy);
        let g = problem.gradient(&xy);
        let (x_new, xx_new, f_new) = loop {
            let cand = project(&(&y - &g / lip));
            let xc = problem.x * &cand;
            let fc = problem.value(&xc);
            let d = &cand - &y;
            let model = f_y + g.dot(&d) + 0.5 * lip * d.norm_squared();
            if fc <= model + 1e-14 * f_y.abs() || !lip.is_finite() {
                break (cand, xc, fc);
            }
            lip *= 2.0;
        };

        if f_new > f_x {
            // momentum overshoot: restart from the last accepted point
            if theta == 1.0 {
                // a plain gradient step failed to decrease: we are at the
                // optimum up to rounding
                return FistaOutput {
                    beta: x,
                    iterations: iter,
                    converged: true,
                };
            }
            theta = 1.0;
            y = x.clone();
            xy = xx.clone();
            quiet = 0;
            continue;
        }

        let decrease = f_x - f_new;
        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_new;
        y = &x_new + (&x_new - &x) * momentum;
        xy = &xx_new + (&xx_new - &xx) * momentum;
        theta = theta_new;
        x = x_new;
        xx = xx_new;
        f_x = f_new;

        if decrease <= cfg.tol * (f_x + floor) {
            quiet += 1;
            if quiet >= PATIENCE {
                return FistaOutput {
                    beta: x,
                    iterations: iter,
                    converged: true,
                };
            }
        } else {
            quiet = 0;
        }
    }
    FistaOutput {
        beta: x,
        iterations: max_iter,
        converged: false,
    }
}

/// Squared-loss gradient `(2/n) X^T (X beta - Y)` on all columns.
fn full_gradient(data: &Dataset, beta: &DVector<f64>) -> DVector<f64> {
    let r = data.x() * beta - data.y();
    data.x().tr_mul(&r) * (2.0 / data.n() as f64)
}

fn solve_l1_working_set(
    data: &Dataset,
    loss: Loss,
    t: f64,
    mut beta: DVector<f64>,
    cfg: &SolverConfig,
) -> Fit {
    let p = data.p();
    let gscale = full_gradient(data, &DVector::zeros(p)).amax().max(f64::MIN_POSITIVE);
    let mut grad = full_gradient(data, &beta);
    let mut in_set = vec![false; p];
    let mut work: Vec<usize> = Vec::new();
    for j in 0..p {
        if beta[j] != 0.0 {
            in_set[j] = true;
            work.push(j);
        }
    }
    add_largest(&mut work, &mut in_set, &grad, (0..p).collect(), 10);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        work.sort_unstable();
        let xw = data.x().select_columns(&work);
        let problem = Problem::new(&xw, data.y(), loss);
        let start = DVector::from_iterator(work.len(), work.iter().map(|&j| beta[j]));
        let out = fista(
            &problem,
            &|v| project_l1_unchecked(v, t),
            start,
            cfg,
            cfg.max_iter - iterations,
        );
        iterations += out.iterations;
        beta.fill(0.0);
        for (k, &j) in work.iter().enumerate() {
            beta[j] = out.beta[k];
        }
        grad = full_gradient(data, &beta);

        let mu = multiplier(&beta, &grad, t);
        let violators: Vec<usize> = (0..p)
            .filter(|&j| !in_set[j] && grad[j].abs() > mu + KKT_SLACK * gscale)
            .collect();
        if violators.is_empty() || work.len() == p {
            converged = out.converged;
            break;
        }
        let budget = violators.len().min(work.len().max(10));
        add_largest(&mut work, &mut in_set, &grad, violators, budget);
    }

    if let Some(polished) = polish(data, &beta, t, gscale) {
        beta = polished;
    }
    Fit::new(data, beta, iterations, converged)
}

/// KKT multiplier estimate: `max_{beta_j != 0} |g_j|` when the constraint is
/// active, zero otherwise.
fn multiplier(beta: &DVector<f64>, grad: &DVector<f64>, t: f64) -> f64 {
    if beta.lp_norm(1) < t * (1.0 - 1e-9) {
        return 0.0;
    }
    beta.iter()
        .zip(grad.iter())
        .filter(|(b, _)| **b != 0.0)
        .map(|(_, g)| g.abs())
        .fold(0.0, f64::max)
}

fn add_largest(
    work: &mut Vec<usize>,
    in_set: &mut [bool],
    grad: &DVector<f64>,
    mut candidates: Vec<usize>,
    count: usize,
) {
    candidates.retain(|&j| !in_set[j]);
    candidates.sort_by(|&a, &b| grad[b].abs().partial_cmp(&grad[a].abs()).unwrap().then(a.cmp(&b)));
    for j in candidates.into_iter().take(count) {
        in_set[j] = true;
        work.push(j);
    }
}

/// Exact solve on the face of the l1 ball (or the interior) picked out by
/// the support and signs of `beta`. Returns `None` unless the result
/// verifies as a KKT point of the full problem.
fn polish(data: &Dataset, beta: &DVector<f64>, t: f64, gscale: f64) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() || support.len() > data.n() {
        return None;
    }
    let xs = data.x().select_columns(&support);
    let chol = xs.tr_mul(&xs).cholesky()?;
    let b = xs.tr_mul(data.y());
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&j| beta[j].signum()));
    let n = data.n() as f64;

    let on_boundary = beta.lp_norm(1) >= t * (1.0 - 1e-9);
    let attempts: [bool; 2] = if on_boundary { [true, false] } else { [false, true] };
    for face in attempts {
        let (coef, mu) = if face {
            // minimize ||Y - X_S b||^2 subject to s^T b = t
            let gb = chol.solve(&b);
            let gs = chol.solve(&signs);
            let nu = (signs.dot(&gb) - t) / signs.dot(&gs);
            (gb - gs * nu, 2.0 * nu / n)
        } else {
            (chol.solve(&b), 0.0)
        };
        if mu < 0.0 || coef.iter().zip(signs.iter()).any(|(c, s)| c * s <= 0.0) {
            continue;
        }
        if !face && coef.lp_norm(1) > t {
            continue;
        }
        let mut cand = DVector::zeros(beta.len());
        for (k, &j) in support.iter().enumerate() {
            cand[j] = coef[k];
        }
        if face {
            // exact feasibility; the solve leaves ||cand||_1 = t up to rounding
            cand = project_l1_unchecked(&cand, t);
        }
        let grad = full_gradient(data, &cand);
        let ok = (0..beta.len())
            .filter(|&j| cand[j] == 0.0)
            .all(|j| grad[j].abs() <= mu + 1e3 * KKT_SLACK * gscale);
        if ok {
            return Some(cand);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::project_l1_ball;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn zero_radius_gives_zero() {
        let data = Dataset::from_rows(&[1.0, 2.0], &[&[1.0, 3.0], &[2.0, -1.0]]).unwrap();
        let fit = fit_constrained(&data, &EstimatorSpec::lasso(0.0).unwrap(), &cfg()).unwrap();
        assert_eq!(fit.beta, DVector::zeros(2));
        assert!(fit.converged);
    }

    #[test]
    fn identity_design_recovers_least_squares() {
        let data = Dataset::from_rows(
            &[1.0, 2.0, 3.0],
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
        )
        .unwrap();
        let fit = fit_constrained(&data, &EstimatorSpec::lasso(10.0).unwrap(), &cfg()).unwrap();
        assert!((&fit.beta - data.y()).amax() < 1e-12);
        assert!(fit.objective < 1e-20);
    }

    #[test]
    fn identity_design_binding_is_projection() {
        // with X = I the problem is the projection of Y onto the ball
        let y = [3.0, -1.0, 0.5];
        let data = Dataset::from_rows(
            &y,
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
        )
        .unwrap();
        for t in [0.3, 1.0, 2.5, 4.0] {
            let fit = fit_constrained(&data, &EstimatorSpec::lasso(t).unwrap(), &cfg()).unwrap();
            let expect = project_l1_ball(data.y(), t).unwrap();
            assert!((&fit.beta - &expect).amax() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn sqrt_lasso_handles_exact_fit() {
        let data = Dataset::from_rows(&[1.0, 1.0], &[&[1.0], &[1.0]]).unwrap();
        let fit = fit_constrained(&data, &EstimatorSpec::sqrt_lasso(5.0).unwrap(), &cfg()).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_dimension_is_checked() {
        let data = Dataset::from_rows(&[1.0], &[&[1.0, 2.0]]).unwrap();
        let spec = EstimatorSpec::lasso(1.0).unwrap();
        let bad = DVector::zeros(3);
        assert!(fit_constrained_from(&data, &spec, &cfg(), Some(&bad)).is_err());
    }

    #[test]
    fn group_lasso_single_block_is_scaled_ls() {
        // X = I, one block: projection of Y onto the l2 ball of radius t / sqrt(p)
        let data = Dataset::from_rows(&[3.0, 4.0], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let g = Groups::new(vec![vec![0, 1]], 2).unwrap();
        let spec = EstimatorSpec::group_lasso(2f64.sqrt(), g).unwrap();
        let fit = fit_constrained(&data, &spec, &cfg()).unwrap();
        assert!((fit.beta[0] - 0.6).abs() < 1e-8);
        assert!((fit.beta[1] - 0.8).abs() < 1e-8);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let data = Dataset::from_rows(
            &[1.0, -1.0, 2.0],
            &[&[1.0, 0.9, 0.3], &[0.2, 1.0, 0.8], &[0.5, 0.1, 1.0]],
        )
        .unwrap();
        let cfg = SolverConfig::new(1, 1e-14, 1e-8).unwrap();
        let g = Groups::singletons(3);
        let fit = fit_constrained(&data, &EstimatorSpec::group_lasso(1.0, g).unwrap(), &cfg).unwrap();
        assert!(!fit.converged);
        assert!(fit.beta.lp_norm(1) <= 1.0 + 1e-12);
    }
}
