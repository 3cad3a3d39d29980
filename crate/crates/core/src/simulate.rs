//! Data-generating process, replication runner and the risk-consistency
//! experiment.
//!
//! A replication draws `beta*` (sparse Laplace, rescaled to the target SNR),
//! an equicorrelated Gaussian design and noise, then runs each selector and
//! scores the chosen fit by its exact population risk.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::risk::{equicorrelation_matrix, oracle_with_factor, population_risk, DesignFactor};
use crate::rng::{self, SimRng};
use crate::selection::{
    build_grid, compute_t_max, default_a_n, default_m_n, default_t_n, fit_path, select_cv,
    select_gcv_on_path, select_gic_on_path, select_ssr, GicScaling, SearchGrid,
};
use crate::solvers::SolverConfig;
use crate::types::{
    quad_form, sparsity, Dataset, EstimatorSpec, FoldScheme, NoiseKind, PopulationModel,
    SelectionResult, Selector, SimCondition,
};

/// Exceedance level for the excess-risk probability.
pub const DEFAULT_DELTA: f64 = 0.5;

/// Gaussian design with rows i.i.d. `N(0, D(rho))`.
pub fn generate_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    let factor = DesignFactor::equicorrelation(p, rho)?;
    Ok(design_with(&mut rng::from_seed(seed), n, &factor))
}

fn design_with(rng: &mut SimRng, n: usize, factor: &DesignFactor) -> DMatrix<f64> {
    let z = DMatrix::from_fn(n, factor.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor.correlate(&z)
}

/// Sparse coefficients: `s = ceil(n^alpha)` Laplace(1) entries at uniformly
/// random positions, zero elsewhere.
pub fn generate_coefficients(n: usize, p: usize, alpha: f64, seed: u64) -> Result<DVector<f64>> {
    coefficients_with(&mut rng::from_seed(seed), n, p, alpha)
}

fn coefficients_with(rng: &mut SimRng, n: usize, p: usize, alpha: f64) -> Result<DVector<f64>> {
    let s = sparsity(n, alpha);
    if s > p {
        return Err(Error::invalid(format!("sparsity {s} exceeds p = {p}")));
    }
    let mut beta = DVector::zeros(p);
    for j in sample(rng, p, s) {
        let magnitude: f64 = rng.sample(Exp1);
        beta[j] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    Ok(beta)
}

/// `beta * sqrt(snr / beta^T D beta)`, so the result has `beta^T D beta = snr`.
pub fn scale_to_snr(beta: &DVector<f64>, d: &DMatrix<f64>, snr: f64) -> Result<DVector<f64>> {
    if d.nrows() != beta.len() || !d.is_square() {
        return Err(Error::DimensionMismatch {
            what: "covariance vs coefficients",
            expected: beta.len(),
            found: d.nrows(),
        });
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::invalid(format!("target SNR must be positive, got {snr}")));
    }
    let raw = quad_form(d, beta);
    if !(raw > 0.0) {
        return Err(Error::invalid("cannot rescale coefficients with zero signal"));
    }
    Ok(beta * (snr / raw).sqrt())
}

/// i.i.d. unit-variance noise: standard normal, or `t(3) / sqrt(3)`.
pub fn generate_noise(n: usize, kind: NoiseKind, seed: u64) -> DVector<f64> {
    noise_with(&mut rng::from_seed(seed), n, kind)
}

fn noise_with(rng: &mut SimRng, n: usize, kind: NoiseKind) -> DVector<f64> {
    match kind {
        NoiseKind::Gaussian => DVector::from_fn(n, |_, _| rng.sample(StandardNormal)),
        NoiseKind::ScaledT3 => {
            let t3 = StudentT::new(3.0).unwrap();
            let scale = 3f64.sqrt().recip();
            DVector::from_fn(n, |_, _| rng.sample(t3) * scale)
        }
    }
}

/// One simulated data set with its population model.
#[derive(Debug, Clone)]
pub struct Replication {
    pub model: PopulationModel,
    pub data: Dataset,
}

/// Shared per-condition state: the covariance and its square root.
#[derive(Debug, Clone)]
pub struct ConditionDesign {
    d: Arc<DMatrix<f64>>,
    factor: Arc<DesignFactor>,
}

impl ConditionDesign {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        Ok(ConditionDesign {
            d: Arc::new(equicorrelation_matrix(p, rho)),
            factor: Arc::new(DesignFactor::equicorrelation(p, rho)?),
        })
    }

    pub fn factor(&self) -> &DesignFactor {
        &self.factor
    }
}

/// Draws replication `rep` of `cond`. Each ingredient has its own stream
/// keyed by the condition seed, the condition id and `rep`.
pub fn draw_replication(
    cond: &SimCondition,
    design: &ConditionDesign,
    rep: usize,
) -> Result<Replication> {
    let id = cond.id();
    let stream = |what: &str| rng::child(cond.seed, &format!("{id}/{what}"), rep as u64);
    let raw = coefficients_with(&mut stream("beta"), cond.n, cond.p, cond.alpha)?;
    let beta = scale_to_snr(&raw, &design.d, cond.snr)?;
    let x = design_with(&mut stream("design"), cond.n, &design.factor);
    let noise = noise_with(&mut stream("noise"), cond.n, cond.noise_kind);
    let y = &x * &beta + noise;
    let model =
        PopulationModel::with_shared_covariance(beta, Arc::clone(&design.d), 1.0, cond.noise_kind)?;
    Ok(Replication {
        model,
        data: Dataset::new(y, x)?,
    })
}

/// Fold assignment for replication `rep`.
pub fn replication_folds(cond: &SimCondition, k: usize, rep: usize) -> Result<FoldScheme> {
    let seed = rng::child_seed(cond.seed, &format!("{}/folds", cond.id()), rep as u64);
    FoldScheme::k_fold(cond.n, k, seed)
}

/// How the upper end of the search interval is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TMaxRule {
    /// `t_max = ||Y||^2 / n`, the second moment of the response.
    SampleMoment,
    /// `t_max = ||Y||^2 / a_n` with the rate-optimal `a_n` for the given
    /// `q` and `m_n = max(1, log log n)`.
    RateOptimal,
    /// `t_max = ||Y||^2 / a_n` for a fixed `a_n`.
    FixedAn(f64),
    /// A fixed `t_max`, independent of the data.
    Fixed(f64),
}

impl FromStr for TMaxRule {
    type Err = Error;

    /// `"n"`, `"rate"`, or a positive number taken as a fixed `a_n`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "n" => Ok(TMaxRule::SampleMoment),
            "rate" => Ok(TMaxRule::RateOptimal),
            other => match other.parse::<f64>() {
                Ok(a) if a > 0.0 && a.is_finite() => Ok(TMaxRule::FixedAn(a)),
                _ => Err(Error::invalid(format!(
                    "a_n must be `n`, `rate` or a positive number, got `{other}`"
                ))),
            },
        }
    }
}

impl TMaxRule {
    /// The `a_n` this rule uses at size `(n, p)` with `k` folds, or `None`
    /// for a fixed `t_max`.
    pub fn a_n(&self, n: usize, p: usize, q: f64, k: usize) -> Result<Option<f64>> {
        match *self {
            TMaxRule::RateOptimal => {
                let b = crate::types::b_n(n, k).max(1);
                Ok(Some(default_a_n(n, p, q, b, default_m_n(n))?))
            }
            TMaxRule::SampleMoment => Ok(Some(n as f64)),
            TMaxRule::FixedAn(a) => Ok(Some(a)),
            TMaxRule::Fixed(_) => Ok(None),
        }
    }

    pub fn grid(&self, data: &Dataset, q: f64, k: usize, size: usize) -> Result<SearchGrid> {
        let t_max = match (*self, self.a_n(data.n(), data.p(), q, k)?) {
            (TMaxRule::Fixed(t), _) => t,
            (_, Some(a)) => compute_t_max(data, a)?,
            (_, None) => unreachable!(),
        };
        build_grid(t_max, size)
    }
}

/// Settings shared by every replication of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Number of CV folds.
    pub k: usize,
    pub grid_size: usize,
    pub t_max: TMaxRule,
    /// Moment index used for `a_n` and for the oracle radius `t_n`.
    pub q: f64,
    pub gic_scaling: GicScaling,
    pub solver: SolverConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            k: 10,
            grid_size: 100,
            t_max: TMaxRule::SampleMoment,
            q: 2.0,
            gic_scaling: GicScaling::Normalized,
            solver: SolverConfig::default(),
        }
    }
}

impl SimOptions {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || self.k > n {
            return Err(Error::invalid(format!("k must lie in 2..={n}, got {}", self.k)));
        }
        if self.grid_size < 2 {
            return Err(Error::invalid("grid_size must be >= 2"));
        }
        if self.q.is_nan() || self.q < 1.0 {
            return Err(Error::invalid("q must be >= 1"));
        }
        Ok(())
    }

    /// Oracle radius `t_n` for a problem of size `(n, p)`.
    pub fn t_n(&self, n: usize, p: usize) -> Result<f64> {
        let b = crate::types::b_n(n, self.k).max(1);
        default_t_n(p.max(2), self.q, b, default_m_n(n))
    }
}

/// Outcome of one selector on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub condition: SimCondition,
    pub rep_index: usize,
    pub selector: Selector,
    pub t_hat: f64,
    /// `R(beta_hat) / sigma^2`.
    pub risk_ratio: f64,
    /// `R(beta_hat) - R(beta_{t_n})`.
    pub excess_risk: f64,
    pub wall_time_ms: f64,
    /// Set when the replication failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl ReplicationRecord {
    fn failed(cond: &SimCondition, rep: usize, selector: Selector, err: &Error) -> Self {
        ReplicationRecord {
            condition: cond.clone(),
            rep_index: rep,
            selector,
            t_hat: f64::NAN,
            risk_ratio: f64::NAN,
            excess_risk: f64::NAN,
            wall_time_ms: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

/// Runs every selector on one data set. The full-data path is fitted once
/// and shared by AIC, BIC and GCV.
pub fn run_selectors(
    data: &Dataset,
    folds: &FoldScheme,
    grid: &SearchGrid,
    selectors: &[Selector],
    sigma2: f64,
    opts: &SimOptions,
) -> Vec<(Selector, Result<SelectionResult>, f64)> {
    let lasso = EstimatorSpec::lasso(0.0).unwrap();
    let cfg = &opts.solver;
    let needs_path = selectors
        .iter()
        .any(|s| matches!(s, Selector::Aic | Selector::Bic | Selector::Gcv));
    let start = Instant::now();
    let path = if needs_path { Some(fit_path(data, &lasso, grid, cfg)) } else { None };
    let path_ms = start.elapsed().as_secs_f64() * 1e3;
    selectors
        .iter()
        .map(|&sel| {
            let start = Instant::now();
            let out = match sel {
                Selector::Cv => select_cv(data, &lasso, folds, grid, cfg),
                Selector::Ssr => select_ssr(data, cfg),
                _ => match path.as_ref().unwrap() {
                    Err(e) => Err(Error::Selection(format!("path fit failed: {e}"))),
                    Ok(path) => {
                        let c_n = if sel == Selector::Aic { 2.0 } else { (data.n() as f64).ln() };
                        if sel == Selector::Gcv {
                            select_gcv_on_path(data, grid, path, cfg)
                        } else {
                            select_gic_on_path(
                                sel, data, grid, path, c_n, sigma2, opts.gic_scaling, cfg,
                            )
                        }
                    }
                },
            };
            let mut ms = start.elapsed().as_secs_f64() * 1e3;
            if matches!(sel, Selector::Aic | Selector::Bic | Selector::Gcv) {
                ms += path_ms;
            }
            (sel, out, ms)
        })
        .collect()
}

fn run_replication(
    cond: &SimCondition,
    design: &ConditionDesign,
    rep: usize,
    selectors: &[Selector],
    opts: &SimOptions,
) -> Vec<ReplicationRecord> {
    let setup = || -> Result<_> {
        let draw = draw_replication(cond, design, rep)?;
        let folds = replication_folds(cond, opts.k, rep)?;
        let grid = opts.t_max.grid(&draw.data, opts.q, opts.k, opts.grid_size)?;
        let t_n = opts.t_n(cond.n, cond.p)?;
        let oracle = oracle_with_factor(&design.factor, draw.model.beta_star(), t_n, &opts.solver)?;
        let oracle_risk = population_risk(&oracle, &draw.model)?;
        Ok((draw, folds, grid, oracle_risk))
    };
    let (draw, folds, grid, oracle_risk) = match setup() {
        Ok(v) => v,
        Err(e) => {
            return selectors
                .iter()
                .map(|&s| ReplicationRecord::failed(cond, rep, s, &e))
                .collect()
        }
    };
    let sigma2 = draw.model.sigma2();
    run_selectors(&draw.data, &folds, &grid, selectors, sigma2, opts)
        .into_iter()
        .map(|(sel, out, ms)| {
            let scored = out.and_then(|res| {
                let risk = population_risk(&res.beta_hat, &draw.model)?;
                Ok((res.t_hat, risk))
            });
            match scored {
                Ok((t_hat, risk)) => ReplicationRecord {
                    condition: cond.clone(),
                    rep_index: rep,
                    selector: sel,
                    t_hat,
                    risk_ratio: risk / sigma2,
                    excess_risk: risk - oracle_risk,
                    wall_time_ms: ms,
                    error: None,
                },
                Err(e) => ReplicationRecord::failed(cond, rep, sel, &e),
            }
        })
        .collect()
}

fn dedup(selectors: &[Selector]) -> Vec<Selector> {
    let mut out: Vec<Selector> = Vec::new();
    for &s in selectors {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// All replications of one condition, ordered by `(rep, selector)` with
/// selectors in the order given. Replications run concurrently on the
/// current rayon pool; the output does not depend on the pool size.
pub fn run_condition(
    cond: &SimCondition,
    selectors: &[Selector],
    opts: &SimOptions,
) -> Result<Vec<ReplicationRecord>> {
    cond.validate()?;
    opts.validate(cond.n)?;
    if selectors.is_empty() {
        return Err(Error::invalid("no selectors requested"));
    }
    let selectors = dedup(selectors);
    let design = ConditionDesign::new(cond.p, cond.rho)?;
    let per_rep: Vec<Vec<ReplicationRecord>> = (0..cond.replications)
        .into_par_iter()
        .map(|rep| run_replication(cond, &design, rep, &selectors, opts))
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Dimension as a function of sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PRule {
    /// `p = round(c n)`.
    Linear(f64),
    /// `p` fixed.
    Constant(usize),
}

impl PRule {
    pub fn p(&self, n: usize) -> usize {
        match *self {
            PRule::Linear(c) => (c * n as f64).round() as usize,
            PRule::Constant(p) => p,
        }
    }
}

impl FromStr for PRule {
    type Err = Error;

    /// `"2n"`, `"n"`, `"0.5n"` or a plain integer such as `"350"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("cannot parse p rule `{s}` (try `2n` or `350`)"));
        if let Some(c) = s.strip_suffix('n') {
            let c = c.trim().trim_end_matches('*');
            let c: f64 = if c.is_empty() { 1.0 } else { c.parse().map_err(|_| bad())? };
            if !(c > 0.0 && c.is_finite()) {
                return Err(bad());
            }
            return Ok(PRule::Linear(c));
        }
        s.parse::<usize>()
            .ok()
            .filter(|&p| p > 0)
            .map(PRule::Constant)
            .ok_or_else(bad)
    }
}

/// Settings of the risk-consistency experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyConfig {
    pub n_list: Vec<usize>,
    pub p_rule: PRule,
    pub q: f64,
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub noise: NoiseKind,
    pub grid_size: usize,
    pub delta: f64,
    pub solver: SolverConfig,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            n_list: vec![100, 200, 400, 800],
            p_rule: PRule::Linear(2.0),
            q: 2.0,
            k: 2,
            reps: 50,
            seed: 1,
            rho: 0.0,
            alpha: 0.1,
            snr: 0.25,
            noise: NoiseKind::Gaussian,
            grid_size: 100,
            delta: DEFAULT_DELTA,
            solver: SolverConfig::default(),
        }
    }
}

/// One sample size of the risk-consistency experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    pub p: usize,
    pub b_n: usize,
    pub a_n: f64,
    pub t_n: f64,
    pub median_excess: f64,
    pub mean_excess: f64,
    /// Fraction of replications with excess risk above `delta`.
    pub exceed_fraction: f64,
    pub failures: usize,
}

/// For each `n`: CV over `[0, ||Y||^2 / a_n]` with the rate-optimal `a_n`,
/// scored by the excess risk against the oracle at the rate-optimal `t_n`.
pub fn consistency_experiment(cfg: &ConsistencyConfig) -> Result<Vec<ConsistencyRow>> {
    if cfg.n_list.is_empty() {
        return Err(Error::invalid("n_list is empty"));
    }
    if cfg.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_list must be strictly increasing"));
    }
    if cfg.reps == 0 {
        return Err(Error::invalid("reps must be positive"));
    }
    if !(cfg.delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let opts = SimOptions {
        k: cfg.k,
        grid_size: cfg.grid_size,
        t_max: TMaxRule::RateOptimal,
        q: cfg.q,
        gic_scaling: GicScaling::Normalized,
        solver: cfg.solver,
    };
    cfg.n_list
        .iter()
        .map(|&n| consistency_row(cfg, &opts, n))
        .collect()
}

fn consistency_row(cfg: &ConsistencyConfig, opts: &SimOptions, n: usize) -> Result<ConsistencyRow> {
    let p = cfg.p_rule.p(n);
    let cond = SimCondition {
        n,
        p,
        rho: cfg.rho,
        alpha: cfg.alpha,
        snr: cfg.snr,
        noise_kind: cfg.noise,
        replications: cfg.reps,
        seed: cfg.seed,
    };
    cond.validate()?;
    opts.validate(n)?;
    let a_n = TMaxRule::RateOptimal.a_n(n, p, cfg.q, cfg.k)?.unwrap();
    let t_n = opts.t_n(n, p)?;
    let design = ConditionDesign::new(p, cfg.rho)?;
    let outcomes: Vec<Option<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let records = run_replication(&cond, &design, rep, &[Selector::Cv], opts);
            let e = records[0].excess_risk;
            if records[0].error.is_some() {
                eprintln!("n={n} rep {rep}: {}", records[0].error.as_deref().unwrap());
            }
            e.is_finite().then_some(e)
        })
        .collect();
    let mut excess: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let failures = cfg.reps - excess.len();
    if excess.is_empty() {
        return Err(Error::Selection(format!("every replication failed at n = {n}")));
    }
    excess.sort_by(f64::total_cmp);
    let exceed = excess.iter().filter(|&&e| e > cfg.delta).count();
    Ok(ConsistencyRow {
        n,
        p,
        b_n: crate::types::b_n(n, cfg.k),
        a_n,
        t_n,
        median_excess: median_sorted(&excess),
        mean_excess: excess.iter().sum::<f64>() / excess.len() as f64,
        exceed_fraction: exceed as f64 / excess.len() as f64,
        failures,
    })
}

/// Median of an ascending slice.
pub fn median_sorted(v: &[f64]) -> f64 {
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
