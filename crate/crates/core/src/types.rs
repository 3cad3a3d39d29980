//! Domain types shared across the crate.
//!
//! Every constructor validates its invariants and returns
//! [`Error::InvalidInput`] (or [`Error::DimensionMismatch`]) when they fail,
//! so a value of any of these types is always well formed.
//!
//! Indices are zero-based throughout. In augmented `(p+1)`-dimensional
//! objects coordinate 0 is the response.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Observed regression data `(Y, X)`; row `i` of `x` is `X_i^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                what: "dataset rows",
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if y.is_empty() || x.ncols() == 0 {
            return Err(Error::invalid("dataset must have n >= 1 and p >= 1"));
        }
        if !y.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite entries"));
        }
        Ok(Dataset { y, x })
    }

    /// Builds a dataset from row-major slices, mostly for tests and examples.
    pub fn from_rows(y: &[f64], rows: &[&[f64]]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("ragged design rows"));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Dataset::new(DVector::from_column_slice(y), x)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(idx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    /// Student t with 3 degrees of freedom scaled by `3^{-1/2}` (unit variance).
    #[serde(rename = "t3")]
    ScaledT3,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::ScaledT3 => "t3",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseKind::Gaussian),
            "t3" | "scaledt3" | "scaled_t3" => Ok(NoiseKind::ScaledT3),
            other => Err(Error::invalid(format!(
                "unknown noise kind `{other}` (expected gaussian or t3)"
            ))),
        }
    }
}

/// Linear data-generating process `Y = X^T beta* + eps`, `X ~ (0, D)`,
/// `Var(eps) = sigma2`.
///
/// The covariance is reference counted so many replications can share one
/// `p x p` matrix.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    beta_star: DVector<f64>,
    d: Arc<DMatrix<f64>>,
    sigma2: f64,
    noise_kind: NoiseKind,
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

impl PopulationModel {
    /// Validates symmetry and positive semi-definiteness of `d`.
    pub fn new(
        beta_star: DVector<f64>,
        d: DMatrix<f64>,
        sigma2: f64,
        noise_kind: NoiseKind,
    ) -> Result<Self> {
        check_symmetric(&d, "covariance")?;
        if d.nrows() != beta_star.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance vs coefficients",
                expected: beta_star.len(),
                found: d.nrows(),
            });
        }
        // eigenvalues >= -PSD_TOL  <=>  D + PSD_TOL * I is PSD; Cholesky with a
        // little extra shift is the cheap test.
        let shifted = &d + DMatrix::identity(d.nrows(), d.ncols()) * (2.0 * PSD_TOL);
        if shifted.cholesky().is_none() {
            return Err(Error::invalid("covariance is not positive semi-definite"));
        }
        Self::with_shared_covariance(beta_star, Arc::new(d), sigma2, noise_kind)
    }

    /// Skips the PSD test; the caller vouches for `d` (e.g. an equicorrelation
    /// matrix that is PSD by construction). Dimensions and `sigma2` are still
    /// checked.
    pub fn with_shared_covariance(
        beta_star: DVector<f64>,
        d: Arc<DMatrix<f64>>,
        sigma2: f64,
        noise_kind: NoiseKind,
    ) -> Result<Self> {
        if d.nrows() != beta_star.len() || d.ncols() != beta_star.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance vs coefficients",
                expected: beta_star.len(),
                found: d.nrows(),
            });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !beta_star.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("beta_star contains non-finite entries"));
        }
        Ok(PopulationModel {
            beta_star,
            d,
            sigma2,
            noise_kind,
        })
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn shared_d(&self) -> Arc<DMatrix<f64>> {
        Arc::clone(&self.d)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn p(&self) -> usize {
        self.beta_star.len()
    }

    /// `beta*^T D beta*`.
    pub fn snr(&self) -> f64 {
        quad_form(&self.d, &self.beta_star)
    }
}

pub(crate) fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid(format!("{what} must be square")));
    }
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::invalid(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Second-moment matrix of the augmented vector `Z = (Y, X^T)^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSecondMoment {
    sigma: DMatrix<f64>,
}

impl AugmentedSecondMoment {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&sigma, "second moment")?;
        if sigma.nrows() < 2 {
            return Err(Error::invalid("second moment must be at least 2 x 2"));
        }
        if sigma.diagonal().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("second moment has a negative diagonal entry"));
        }
        Ok(AugmentedSecondMoment { sigma })
    }

    /// `(1/|rows|) sum_i Z_i Z_i^T` over the selected rows.
    pub fn empirical(data: &Dataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("empirical second moment needs at least one row"));
        }
        let p = data.p();
        let mut z = DMatrix::zeros(rows.len(), p + 1);
        for (r, &i) in rows.iter().enumerate() {
            z[(r, 0)] = data.y()[i];
            for j in 0..p {
                z[(r, j + 1)] = data.x()[(i, j)];
            }
        }
        let mut sigma = z.tr_mul(&z) / rows.len() as f64;
        // tr_mul is symmetric up to rounding; make it exact.
        for i in 0..=p {
            for j in 0..i {
                sigma[(j, i)] = sigma[(i, j)];
            }
        }
        Ok(AugmentedSecondMoment { sigma })
    }

    /// Empirical second moment over all rows.
    pub fn of_dataset(data: &Dataset) -> Self {
        let rows: Vec<usize> = (0..data.n()).collect();
        Self::empirical(data, &rows).expect("dataset has n >= 1")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `gamma^T Sigma gamma` with `gamma = (-1, beta^T)^T`.
    pub fn risk_of(&self, beta: &DVector<f64>) -> Result<f64> {
        if beta.len() + 1 != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "coefficients vs second moment",
                expected: self.dim() - 1,
                found: beta.len(),
            });
        }
        let mut gamma = DVector::zeros(self.dim());
        gamma[0] = -1.0;
        gamma.rows_mut(1, beta.len()).copy_from(beta);
        Ok(quad_form(&self.sigma, &gamma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `||beta||_1 <= t`, squared-error loss.
    Lasso,
    /// `sum_g sqrt(|g|) ||beta_g||_2 <= t`.
    GroupLasso,
    /// `||beta||_1 <= t`, loss `(1/n) ||Y - X beta||_2` (not squared).
    SqrtLasso,
}

/// A partition of `0..p` into disjoint, covering, nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    groups: Vec<Vec<usize>>,
    p: usize,
}

impl Groups {
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::invalid("empty group in partition"));
            }
            for &j in g {
                if j >= p {
                    return Err(Error::invalid(format!("group index {j} out of range 0..{p}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::invalid(format!("index {j} appears in two groups")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("index {j} is not covered by any group")));
        }
        Ok(Groups { groups, p })
    }

    /// Every coordinate in its own group.
    pub fn singletons(p: usize) -> Self {
        Groups {
            groups: (0..p).map(|j| vec![j]).collect(),
            p,
        }
    }

    /// Consecutive blocks of `size` coordinates (the last may be shorter).
    pub fn contiguous(p: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("group size must be positive"));
        }
        let groups = (0..p)
            .step_by(size)
            .map(|s| (s..(s + size).min(p)).collect())
            .collect();
        Groups::new(groups, p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.iter().map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `sum_g sqrt(|g|) ||beta_g||_2`.
    pub fn norm(&self, beta: &DVector<f64>) -> f64 {
        self.iter()
            .map(|g| {
                let ss: f64 = g.iter().map(|&j| beta[j] * beta[j]).sum();
                (g.len() as f64).sqrt() * ss.sqrt()
            })
            .sum()
    }
}

/// Penalty geometry plus constraint radius.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    penalty: Penalty,
    t: f64,
    groups: Option<Groups>,
}

impl EstimatorSpec {
    pub fn new(penalty: Penalty, t: f64, groups: Option<Groups>) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("radius t must be finite and >= 0, got {t}")));
        }
        match (penalty, &groups) {
            (Penalty::GroupLasso, None) => {
                return Err(Error::invalid("group lasso requires a group partition"))
            }
            (Penalty::Lasso | Penalty::SqrtLasso, Some(_)) => {
                return Err(Error::invalid("groups are only meaningful for the group lasso"))
            }
            _ => {}
        }
        Ok(EstimatorSpec { penalty, t, groups })
    }

    pub fn lasso(t: f64) -> Result<Self> {
        Self::new(Penalty::Lasso, t, None)
    }

    pub fn sqrt_lasso(t: f64) -> Result<Self> {
        Self::new(Penalty::SqrtLasso, t, None)
    }

    pub fn group_lasso(t: f64, groups: Groups) -> Result<Self> {
        Self::new(Penalty::GroupLasso, t, Some(groups))
    }

    /// Same geometry, different radius.
    pub fn with_radius(&self, t: f64) -> Result<Self> {
        Self::new(self.penalty, t, self.groups.clone())
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn groups(&self) -> Option<&Groups> {
        self.groups.as_ref()
    }

    /// Value of the constraint function at `beta`.
    pub fn constraint_norm(&self, beta: &DVector<f64>) -> f64 {
        match &self.groups {
            Some(g) => g.norm(beta),
            None => beta.lp_norm(1),
        }
    }
}

/// Family of disjoint validation folds over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldScheme {
    folds: Vec<Vec<usize>>,
    n: usize,
}

impl FoldScheme {
    pub fn new(folds: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::invalid("fold scheme needs at least one fold"));
        }
        let mut seen = vec![false; n];
        for f in &folds {
            if f.is_empty() {
                return Err(Error::invalid("empty validation fold"));
            }
            for &i in f {
                if i >= n {
                    return Err(Error::invalid(format!("fold index {i} out of range 0..{n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid(format!("index {i} appears in two folds")));
                }
            }
        }
        let sizes = folds.iter().map(Vec::len);
        let (lo, hi) = (sizes.clone().min().unwrap(), sizes.max().unwrap());
        if hi - lo > 1 {
            return Err(Error::invalid(format!(
                "unbalanced folds: sizes range from {lo} to {hi}"
            )));
        }
        Ok(FoldScheme { folds, n })
    }

    /// Seeded K-fold split: shuffle `0..n`, then deal round-robin.
    pub fn k_fold(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid(format!("need 1 <= K <= n, got K={k}, n={n}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::from_seed(seed));
        let mut folds = vec![Vec::with_capacity(n / k + 1); k];
        for (pos, i) in idx.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        FoldScheme::new(folds, n)
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// `c_n = floor(n / K)`.
    pub fn c_n(&self) -> usize {
        self.n / self.k()
    }

    /// `b_n = min(n - c_n, c_n)`.
    pub fn b_n(&self) -> usize {
        b_n(self.n, self.k())
    }

    /// Indices not in fold `v`, ascending.
    pub fn complement(&self, v: usize) -> Vec<usize> {
        let mut in_fold = vec![false; self.n];
        for &i in &self.folds[v] {
            in_fold[i] = true;
        }
        (0..self.n).filter(|&i| !in_fold[i]).collect()
    }

    /// Same folds in a different order.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.k() {
            return Err(Error::invalid("fold permutation has wrong length"));
        }
        FoldScheme::new(order.iter().map(|&v| self.folds[v].clone()).collect(), self.n)
    }
}

/// `b_n = min(n - floor(n/K), floor(n/K))`.
pub fn b_n(n: usize, k: usize) -> usize {
    let c = n / k.max(1);
    c.min(n - c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Cv,
    Aic,
    Bic,
    Gcv,
    Ssr,
}

impl Selector {
    pub const ALL: [Selector; 5] = [
        Selector::Cv,
        Selector::Aic,
        Selector::Bic,
        Selector::Gcv,
        Selector::Ssr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Cv => "cv",
            Selector::Aic => "aic",
            Selector::Bic => "bic",
            Selector::Gcv => "gcv",
            Selector::Ssr => "ssr",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL
            .into_iter()
            .find(|sel| sel.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown selector `{s}` (expected one of cv, aic, bic, gcv, ssr)"
                ))
            })
    }
}

/// Outcome of a tuning-parameter selector.
///
/// For SSR the `grid` holds iteration numbers and `criterion` the noise-level
/// trajectory, since SSR does not search over `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selector: Selector,
    pub t_hat: f64,
    pub grid: Vec<f64>,
    pub criterion: Vec<f64>,
    pub beta_hat: DVector<f64>,
    /// False when an inner solve hit its iteration cap.
    pub converged: bool,
}

impl SelectionResult {
    /// Position of `t_hat` in the grid (first match).
    pub fn index(&self) -> Option<usize> {
        self.grid.iter().position(|&t| t == self.t_hat)
    }
}

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCondition {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub noise_kind: NoiseKind,
    pub replications: usize,
    pub seed: u64,
}

impl SimCondition {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.replications == 0 {
            return Err(Error::invalid("n, p and replications must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        let s = sparsity(self.n, self.alpha);
        if s > self.p {
            return Err(Error::invalid(format!(
                "sparsity s = ceil(n^alpha) = {s} exceeds p = {}",
                self.p
            )));
        }
        Ok(())
    }

    /// `s = ceil(n^alpha)`.
    pub fn sparsity(&self) -> usize {
        sparsity(self.n, self.alpha)
    }

    /// Stable human-readable identifier, also used to key RNG streams.
    pub fn id(&self) -> String {
        format!(
            "n{}_p{}_rho{}_alpha{}_snr{}_{}",
            self.n, self.p, self.rho, self.alpha, self.snr, self.noise_kind
        )
    }
}

/// `ceil(n^alpha)`, treating values within rounding of an integer as that
/// integer (so `100^0.5` is 10, not 11).
pub fn sparsity(n: usize, alpha: f64) -> usize {
    let v = (n as f64).powf(alpha);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}
