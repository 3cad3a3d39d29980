//! Independent oracles for the solver tests. Nothing here calls into the
//! solver code paths it is used to check.
#![allow(dead_code)]

use lassocv::types::{Dataset, Groups};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random instance with a few active coefficients plus noise.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let x = gaussian_matrix(rng, n, p);
    let mut beta = DVector::zeros(p);
    for j in 0..p.min(3) {
        beta[j] = rng.random_range(-2.0..2.0);
    }
    let y = &x * &beta + gaussian_vector(rng, n) * 0.5;
    Dataset::new(y, x).unwrap()
}

pub fn objective(data: &Dataset, beta: &DVector<f64>) -> f64 {
    (data.y() - data.x() * beta).norm_squared() / data.n() as f64
}

/// All subsets of `0..p` with size in `1..=max_size`.
fn subsets(p: usize, max_size: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << p))
        .filter(|m| (m.count_ones() as usize) <= max_size)
        .map(|m| (0..p).filter(|j| m & (1 << j) != 0).collect())
        .collect()
}

fn sign_patterns(k: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u32..(1 << k)).map(move |m| {
        (0..k)
            .map(|i| if m & (1 << i) != 0 { -1.0 } else { 1.0 })
            .collect()
    })
}

/// Exhaustive minimum of `(1/n)||Y - X beta||^2` over `||beta||_1 <= t`.
///
/// The minimum is attained at a point whose support has at most `n`
/// elements and which is either an unconstrained least-squares point on
/// its support or the least-squares point of a face
/// `{s^T beta_S = t, sign(beta_S) = s}`. Every support/sign pair is
/// enumerated, each stationary point is solved through the full KKT system
/// with an LU factorization, and the best feasible candidate wins. A dense
/// random search of the ball is run as a cross-check that nothing better
/// exists.
pub fn brute_force_constrained<R: Rng>(data: &Dataset, t: f64, rng: &mut R) -> f64 {
    let (n, p) = (data.n(), data.p());
    let mut best = objective(data, &DVector::zeros(p));
    for support in subsets(p, n.min(p)) {
        let k = support.len();
        let xs = data.x().select_columns(&support);
        let gram = xs.tr_mul(&xs) * 2.0;
        let rhs = xs.tr_mul(data.y()) * 2.0;
        // interior stationary point
        if let Some(b) = gram.clone().lu().solve(&rhs) {
            if b.lp_norm(1) <= t * (1.0 + 1e-12) {
                best = best.min(objective(data, &scatter(&support, &b, p)));
            }
        }
        for signs in sign_patterns(k) {
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            kkt.view_mut((0, 0), (k, k)).copy_from(&gram);
            for i in 0..k {
                kkt[(i, k)] = signs[i];
                kkt[(k, i)] = signs[i];
            }
            let mut r = DVector::zeros(k + 1);
            r.rows_mut(0, k).copy_from(&rhs);
            r[k] = t;
            let Some(sol) = kkt.lu().solve(&r) else { continue };
            let b = sol.rows(0, k).into_owned();
            if b.iter().zip(&signs).all(|(v, s)| v * s >= -1e-12) {
                best = best.min(objective(data, &scatter(&support, &b, p)));
            }
        }
    }
    let sampled = dense_search(data, t, rng, 2000);
    assert!(
        sampled >= best - 1e-9,
        "random search beat the enumeration: {sampled} < {best}"
    );
    best
}

fn scatter(support: &[usize], b: &DVector<f64>, p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (k, &j) in support.iter().enumerate() {
        out[j] = b[k];
    }
    out
}

/// Best objective over random points of the ball: uniform directions scaled
/// to the boundary and to random interior radii.
pub fn dense_search<R: Rng>(data: &Dataset, t: f64, rng: &mut R, samples: usize) -> f64 {
    let p = data.p();
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let v = gaussian_vector(rng, p);
        let scale = t * rng.random::<f64>().sqrt() / v.lp_norm(1).max(1e-300);
        best = best.min(objective(data, &(v * scale)));
    }
    best
}

/// Projection onto the l1 ball by enumerating supports and signs: on a
/// given face the projection is `v_S - nu s` with `nu = (s^T v_S - t)/|S|`.
pub fn brute_force_l1_projection(v: &DVector<f64>, t: f64) -> DVector<f64> {
    let p = v.len();
    if v.lp_norm(1) <= t {
        return v.clone();
    }
    let mut best = DVector::zeros(p);
    let mut best_d = v.norm_squared();
    for support in subsets(p, p) {
        let k = support.len();
        for signs in sign_patterns(k) {
            let sv: f64 = support.iter().zip(&signs).map(|(&j, s)| s * v[j]).sum();
            let nu = (sv - t) / k as f64;
            let b = DVector::from_iterator(
                k,
                support.iter().zip(&signs).map(|(&j, s)| v[j] - nu * s),
            );
            if b.iter().zip(&signs).all(|(x, s)| x * s >= 0.0) {
                let cand = scatter(&support, &b, p);
                let d = (&cand - v).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = cand;
                }
            }
        }
    }
    best
}

/// Projection onto the weighted group ball by enumerating the set of
/// nonzero groups: with active set `A` every active block is shrunk by the
/// common multiplier `lambda = (sum_A w a - t) / sum_A w^2`.
pub fn brute_force_group_projection(v: &DVector<f64>, groups: &[Vec<usize>], t: f64) -> DVector<f64> {
    let norms: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt())
        .collect();
    let weights: Vec<f64> = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
    let total: f64 = norms.iter().zip(&weights).map(|(a, w)| a * w).sum();
    if total <= t {
        return v.clone();
    }
    let mut best = DVector::zeros(v.len());
    let mut best_d = v.norm_squared();
    for active in subsets(groups.len(), groups.len()) {
        let s1: f64 = active.iter().map(|&g| weights[g] * norms[g]).sum();
        let s2: f64 = active.iter().map(|&g| weights[g] * weights[g]).sum();
        let lambda = (s1 - t) / s2;
        if lambda < 0.0 || active.iter().any(|&g| norms[g] - lambda * weights[g] <= 0.0) {
            continue;
        }
        let mut cand = DVector::zeros(v.len());
        for &g in &active {
            let f = 1.0 - lambda * weights[g] / norms[g];
            for &j in &groups[g] {
                cand[j] = v[j] * f;
            }
        }
        let d = (&cand - v).norm_squared();
        if d < best_d {
            best_d = d;
            best = cand;
        }
    }
    best
}

/// Random partition of `0..p` into contiguous blocks of random sizes.
pub fn random_groups<R: Rng>(rng: &mut R, p: usize) -> Groups {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < p {
        let size = rng.random_range(1..=3).min(p - start);
        groups.push((start..start + size).collect());
        start += size;
    }
    Groups::new(groups, p).unwrap()
}

/// Minimum-norm least squares for a full-row-rank wide design,
/// `X^T (X X^T)^{-1} Y`, or the normal equations when tall.
pub fn pinv_solution(data: &Dataset) -> DVector<f64> {
    let x = data.x();
    if x.nrows() <= x.ncols() {
        let xxt = x * x.transpose();
        x.transpose() * xxt.lu().solve(data.y()).unwrap()
    } else {
        x.tr_mul(x).lu().solve(&x.tr_mul(data.y())).unwrap()
    }
}

/// Monte Carlo mean and standard error of `(Y - X^T beta)^2` over fresh
/// draws from a Gaussian-design linear model, with the design drawn through
/// a Cholesky factor of `D` and Gaussian noise.
pub fn monte_carlo_risk<R: Rng>(
    rng: &mut R,
    beta_star: &DVector<f64>,
    d: &DMatrix<f64>,
    sigma2: f64,
    beta: &DVector<f64>,
    draws: usize,
) -> (f64, f64) {
    let p = beta.len();
    // tiny ridge so singular covariances still factor
    let l = (d + DMatrix::identity(p, p) * 1e-13).cholesky().unwrap().unpack();
    let diff = beta_star - beta;
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut z = DVector::zeros(p);
    for _ in 0..draws {
        for j in 0..p {
            z[j] = rng.sample(StandardNormal);
        }
        let x = &l * &z;
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * sigma2.sqrt();
        let r = x.dot(&diff) + e;
        sum += r * r;
        sum2 += r.powi(4);
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean) * m / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `(1/n) sum_i (Y_i - X_i^T beta)^2` by an explicit loop.
pub fn residual_risk(data: &Dataset, beta: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        let mut pred = 0.0;
        for j in 0..data.p() {
            pred += data.x()[(i, j)] * beta[j];
        }
        total += (data.y()[i] - pred).powi(2);
    }
    total / data.n() as f64
}
