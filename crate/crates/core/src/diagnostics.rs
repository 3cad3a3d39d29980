//! Numerical evaluation of the finite-sample bound terms and Monte Carlo
//! checks of the concentration and tail inequalities behind them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::risk::{population_second_moment, DesignFactor};
use crate::rng::{self, SimRng};
use crate::selection::{default_a_n, default_m_n, default_t_n};
use crate::simulate::generate_noise;
use crate::types::{b_n, NoiseKind, PopulationModel};

/// Inputs of the two bound terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub n: usize,
    pub p: usize,
    /// Moment index; `f64::INFINITY` is allowed and sets `2/q = 0`.
    pub q: f64,
    pub c_n: usize,
    pub a_n: f64,
    pub t_n: f64,
    /// Proxy for the squared sup-norm of the regression function.
    pub f_const: f64,
    /// Orlicz bound on the noise.
    pub kappa: f64,
    /// Overrides `ln p`; for evaluating the display at exact values.
    pub log_p: Option<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_n > 0 && self.c_n < self.n) {
            return Err(Error::invalid(format!("need 0 < c_n < n, got c_n = {}, n = {}", self.c_n, self.n)));
        }
        if !(self.a_n > 0.0) {
            return Err(Error::invalid("a_n must be positive"));
        }
        if !(self.t_n >= 0.0 && self.t_n.is_finite()) {
            return Err(Error::invalid("t_n must be finite and >= 0"));
        }
        if self.q.is_nan() || self.q < 1.0 {
            return Err(Error::invalid("q must be >= 1"));
        }
        if !(self.f_const >= 0.0 && self.kappa >= 0.0) {
            return Err(Error::invalid("f_const and kappa must be >= 0"));
        }
        match self.log_p {
            Some(l) if !(l > 0.0) => Err(Error::invalid("injected log p must be positive")),
            None if self.p < 2 => Err(Error::invalid("the bound needs p >= 2")),
            _ => Ok(()),
        }
    }

    /// `b_n = min(c_n, n - c_n)`.
    pub fn b_n(&self) -> usize {
        self.c_n.min(self.n - self.c_n)
    }

    fn log_factor(&self) -> f64 {
        let l = self.log_p.unwrap_or_else(|| (self.p as f64).ln());
        let two_over_q = if self.q.is_infinite() { 0.0 } else { 2.0 / self.q };
        l.powf(1.0 + two_over_q).sqrt()
    }
}

/// `(Omega_1, Omega_2)` where
/// `Omega_1 = [1 + 2 n (F + 4 kappa^2) / a_n]^2 sqrt(log(p)^(1 + 2/q))
///            (n^-1/2 + c_n^-1/2 + (n - c_n)^-1/2)` and
/// `Omega_2 = (1 + t_n)^2 sqrt(log(p)^(1 + 2/q) / n)`.
pub fn bound_terms(inputs: &BoundInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    let n = inputs.n as f64;
    let c = inputs.c_n as f64;
    let root = inputs.log_factor();
    let bracket = 1.0 + 2.0 * n * (inputs.f_const + 4.0 * inputs.kappa.powi(2)) / inputs.a_n;
    let omega1 = bracket.powi(2) * root * (n.powf(-0.5) + c.powf(-0.5) + (n - c).powf(-0.5));
    let omega2 = (1.0 + inputs.t_n).powi(2) * root / n.sqrt();
    Ok((omega1, omega2))
}

/// Bound inputs with the rate-optimal `a_n`, `t_n` and `m_n` for `K` folds.
pub fn rate_optimal_inputs(n: usize, p: usize, q: f64, k: usize, f_const: f64, kappa: f64) -> Result<BoundInputs> {
    let c_n = n / k.max(1);
    let b = b_n(n, k);
    if b == 0 {
        return Err(Error::invalid(format!("K = {k} leaves an empty side at n = {n}")));
    }
    let m = default_m_n(n);
    Ok(BoundInputs {
        n,
        p,
        q,
        c_n,
        a_n: default_a_n(n, p, q, b, m)?,
        t_n: default_t_n(p, q, b, m)?,
        f_const,
        kappa,
        log_p: None,
    })
}

/// Entry-wise max norm `max_ij |A_ij|`.
pub fn max_abs_entry(a: &DMatrix<f64>) -> f64 {
    a.amax()
}

/// Both sides of `a^T A a <= ||a||_1^2 max_ij |A_ij|`.
pub fn quad_form_bound(a: &DVector<f64>, m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if m.nrows() != a.len() || m.ncols() != a.len() {
        return Err(Error::DimensionMismatch {
            what: "matrix vs vector",
            expected: a.len(),
            found: m.nrows(),
        });
    }
    Ok(((a.transpose() * m * a)[0], a.lp_norm(1).powi(2) * max_abs_entry(m)))
}

/// `||(1/m) Z^T Z - Sigma||_max` for rows `Z_i = (Y_i, X_i^T)`.
pub fn second_moment_error(z: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let m = z.nrows() as f64;
    max_abs_entry(&(z.tr_mul(z) / m - sigma))
}

/// Draws `m` rows `(Y, X^T)` from the linear model with Gaussian design.
pub fn draw_rows(rng: &mut SimRng, model: &PopulationModel, factor: &DesignFactor, m: usize) -> DMatrix<f64> {
    let p = model.p();
    let raw = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = factor.correlate(&raw);
    let noise = generate_noise(m, model.noise_kind(), rng.random());
    let y = &x * model.beta_star() + noise * model.sigma2().sqrt();
    let mut z = DMatrix::zeros(m, p + 1);
    z.set_column(0, &y);
    z.view_mut((0, 1), (m, p)).copy_from(&x);
    z
}

/// Mean second-moment error per validation-set size and the least-squares
/// slope of `log(mean error)` on `log |v|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationFit {
    pub sizes: Vec<usize>,
    pub mean_errors: Vec<f64>,
    pub slope: f64,
}

/// Monte Carlo estimate of `E ||Sigma_hat_v - Sigma_n||_max` at each size.
pub fn concentration_rate(
    model: &PopulationModel,
    v_sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ConcentrationFit> {
    if reps < 10 {
        return Err(Error::invalid(format!("need at least 10 replications, got {reps}")));
    }
    if v_sizes.len() < 2 || v_sizes[0] == 0 || v_sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("v_sizes must be at least two increasing positive sizes"));
    }
    let factor = DesignFactor::from_covariance(model.d())?;
    let sigma = population_second_moment(model).matrix().clone();
    let mean_errors: Vec<f64> = v_sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let errs: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut g = rng::child(seed, &format!("concentration/{i}"), r as u64);
                    second_moment_error(&draw_rows(&mut g, model, &factor, m), &sigma)
                })
                .collect();
            errs.iter().sum::<f64>() / reps as f64
        })
        .collect();
    let xs: Vec<f64> = v_sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = mean_errors.iter().map(|e| e.ln()).collect();
    Ok(ConcentrationFit {
        sizes: v_sizes.to_vec(),
        mean_errors,
        slope: ls_slope(&xs, &ys),
    })
}

/// Least-squares slope of `ys` on `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Standard error of a binomial frequency at success probability `p`.
pub fn binomial_se(p: f64, reps: usize) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

/// Choice of `a_n` for [`tail_events`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnRule {
    /// Rate-optimal `a_n` for `K` folds and moment index `q`.
    RateOptimal { k: usize, q: f64 },
    Fixed(f64),
}

impl AnRule {
    pub fn a_n(&self, n: usize, p: usize) -> Result<f64> {
        match *self {
            AnRule::RateOptimal { k, q } => {
                default_a_n(n, p, q, b_n(n, k).max(1), default_m_n(n))
            }
            AnRule::Fixed(a) if a > 0.0 => Ok(a),
            AnRule::Fixed(a) => Err(Error::invalid(format!("a_n must be positive, got {a}"))),
        }
    }
}

/// Tail-event frequencies at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub a_n: f64,
    /// `2 n (F + 4 kappa^2) / a_n`.
    pub upper: f64,
    /// Frequency of `t_max > upper`.
    pub freq_upper: f64,
    /// Frequency of `t_max < t_n`.
    pub freq_lower: f64,
    /// `exp(-n/8)`.
    pub bound: f64,
    pub reps: usize,
}

impl TailRow {
    /// Both frequencies lie below the bound plus three binomial standard
    /// errors.
    pub fn within_bound(&self) -> bool {
        let limit = self.bound + 3.0 * binomial_se(self.bound, self.reps);
        self.freq_upper <= limit && self.freq_lower <= limit
    }
}

/// Monte Carlo frequencies of `t_max` leaving `[t_n, 2n(F + 4 kappa^2)/a_n]`.
///
/// Only `||Y||^2` enters, and under a Gaussian design `X^T beta*` is
/// exactly `N(0, beta*^T D beta*)`, so responses are drawn directly.
#[allow(clippy::too_many_arguments)]
pub fn tail_events(
    model: &PopulationModel,
    a_n: AnRule,
    t_n: f64,
    n_list: &[usize],
    reps: usize,
    seed: u64,
    f_const: f64,
    kappa: f64,
) -> Result<Vec<TailRow>> {
    if reps == 0 || n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("need reps > 0 and a nonempty list of positive n"));
    }
    if !(t_n >= 0.0) {
        return Err(Error::invalid("t_n must be >= 0"));
    }
    let signal_sd = model.snr().sqrt();
    let noise_sd = model.sigma2().sqrt();
    n_list
        .iter()
        .map(|&n| {
            let a = a_n.a_n(n, model.p())?;
            let upper = 2.0 * n as f64 * (f_const + 4.0 * kappa * kappa) / a;
            let hits: Vec<(bool, bool)> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut g = rng::child(seed, &format!("tails/{n}"), r as u64);
                    let noise = generate_noise(n, model.noise_kind(), g.random());
                    let y2: f64 = noise
                        .iter()
                        .map(|e| {
                            let f = signal_sd * g.sample::<f64, _>(StandardNormal);
                            (f + noise_sd * e).powi(2)
                        })
                        .sum();
                    let t_max = y2 / a;
                    (t_max > upper, t_max < t_n)
                })
                .collect();
            let count = |f: fn(&(bool, bool)) -> bool| hits.iter().filter(|h| f(h)).count();
            Ok(TailRow {
                n,
                a_n: a,
                upper,
                freq_upper: count(|h| h.0) as f64 / reps as f64,
                freq_lower: count(|h| h.1) as f64 / reps as f64,
                bound: (-(n as f64) / 8.0).exp(),
                reps,
            })
        })
        .collect()
}

/// One level of the chi-square concentration check.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTailRow {
    pub x: f64,
    pub frequency: f64,
    /// `exp(-x)`.
    pub bound: f64,
    pub se: f64,
    pub pass: bool,
}

/// Frequency of `| ||eps||^2 - n | >= sqrt(8 n x) + x` for standard
/// Gaussian noise (`kappa = kappa_1 = 1`), compared with `exp(-x)`.
pub fn noise_tail_check(
    kind: NoiseKind,
    n: usize,
    reps: usize,
    seed: u64,
    xs: &[f64],
) -> Result<Vec<NoiseTailRow>> {
    if kind == NoiseKind::ScaledT3 {
        return Err(Error::invalid(
            "the chi-square tail bound needs sub-Gaussian noise; t(3) has no finite psi_2 norm",
        ));
    }
    if n == 0 || reps == 0 {
        return Err(Error::invalid("n and reps must be positive"));
    }
    let norms: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| generate_noise(n, kind, rng::child_seed(seed, "noise-tail", r as u64)).norm_squared())
        .collect();
    let nf = n as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let radius = (8.0 * nf * x).sqrt() + x;
            let hits = norms.iter().filter(|&&s| (s - nf).abs() >= radius).count();
            let frequency = hits as f64 / reps as f64;
            let bound = (-x).exp();
            let se = binomial_se(bound.min(1.0), reps);
            NoiseTailRow {
                x,
                frequency,
                bound,
                se,
                pass: frequency <= bound + 3.0 * se,
            }
        })
        .collect())
}
