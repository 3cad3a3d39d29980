mod common;

use common::*;
use lassocv::risk::{cv_risk, empirical_risk};
use lassocv::rng;
use lassocv::selection::{
    argmin, build_grid, compute_t_max, cv_curve, df_hat, fit_path, gcv_value, gic_value,
    select_aic, select_bic, select_cv, select_gcv, select_ssr, GicScaling,
};
use lassocv::solvers::{fit_constrained, SolverConfig};
use lassocv::types::{Dataset, EstimatorSpec, FoldScheme, Selector};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn lasso() -> EstimatorSpec {
    EstimatorSpec::lasso(0.0).unwrap()
}

fn instance(seed: u64, n: usize, p: usize) -> Dataset {
    random_dataset(&mut rng::from_seed(seed), n, p)
}

#[test]
fn every_selector_returns_the_argmin_of_its_curve() {
    let cfg = SolverConfig::default();
    for seed in 0..4 {
        let data = instance(seed, 30, 8);
        let grid = build_grid(compute_t_max(&data, 30.0).unwrap(), 25).unwrap();
        let folds = FoldScheme::k_fold(30, 5, seed).unwrap();
        let results = [
            select_cv(&data, &lasso(), &folds, &grid, &cfg).unwrap(),
            select_aic(&data, &lasso(), &grid, 0.25, GicScaling::Normalized, &cfg).unwrap(),
            select_bic(&data, &lasso(), &grid, 0.25, GicScaling::Normalized, &cfg).unwrap(),
            select_gcv(&data, &lasso(), &grid, &cfg).unwrap(),
        ];
        for res in &results {
            let i = argmin(&res.criterion).unwrap();
            assert_eq!(res.t_hat, grid.points()[i], "{:?}", res.selector);
            assert!(res.criterion.iter().all(|&c| c >= res.criterion[i]));

            // recompute the criterion at t_hat with a cold fit
            let t = res.t_hat;
            let spec = EstimatorSpec::lasso(t).unwrap();
            let cold = fit_constrained(&data, &spec, &cfg).unwrap();
            let risk = empirical_risk(&cold.beta, &data).unwrap();
            let df = df_hat(&cold.beta, cfg.zero_threshold);
            let fresh = match res.selector {
                Selector::Cv => cv_risk(&data, &spec, &folds, &cfg).unwrap(),
                Selector::Aic => gic_value(risk, df, 30, 2.0, 0.25, GicScaling::Normalized),
                Selector::Bic => gic_value(risk, df, 30, 30f64.ln(), 0.25, GicScaling::Normalized),
                Selector::Gcv => gcv_value(risk, df, 30),
                Selector::Ssr => unreachable!(),
            };
            assert!(
                (fresh - res.criterion[i]).abs() <= 1e-10 * fresh.max(1.0),
                "{:?}: {fresh} vs {}",
                res.selector,
                res.criterion[i]
            );
        }
    }
}

#[test]
fn cv_is_invariant_to_fold_order() {
    let cfg = SolverConfig::default();
    let mut g = rng::from_seed(11);
    for seed in 0..3 {
        let data = instance(100 + seed, 24, 10);
        let grid = build_grid(compute_t_max(&data, 24.0).unwrap(), 20).unwrap();
        let folds = FoldScheme::k_fold(24, 4, seed).unwrap();
        let base = select_cv(&data, &lasso(), &folds, &grid, &cfg).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.shuffle(&mut g);
        let permuted = folds.permuted(&order).unwrap();
        let other = select_cv(&data, &lasso(), &permuted, &grid, &cfg).unwrap();
        assert_eq!(base.t_hat, other.t_hat);
        assert_eq!(base.criterion, other.criterion);
    }
}

#[test]
fn refining_the_grid_never_raises_the_minimum() {
    let cfg = SolverConfig::default();
    for seed in 0..3 {
        let data = instance(200 + seed, 20, 6);
        let folds = FoldScheme::k_fold(20, 4, seed).unwrap();
        let t_max = compute_t_max(&data, 20.0).unwrap();
        // 2m - 1 points contain every point of the m-point grid
        let coarse = build_grid(t_max, 11).unwrap();
        let fine = build_grid(t_max, 21).unwrap();
        let a = select_cv(&data, &lasso(), &folds, &coarse, &cfg).unwrap();
        let b = select_cv(&data, &lasso(), &folds, &fine, &cfg).unwrap();
        let min = |c: &[f64]| c.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min(&b.criterion) <= min(&a.criterion) + 1e-12);
    }
}

#[test]
fn noiseless_sparse_data_reaches_zero_cv_risk() {
    let mut g = rng::from_seed(3);
    let x = gaussian_matrix(&mut g, 40, 6);
    let beta = DVector::from_column_slice(&[1.5, 0.0, -1.0, 0.0, 0.0, 0.0]);
    let data = Dataset::new(&x * &beta, x).unwrap();
    // the grid contains ||beta*||_1 = 2.5 exactly
    let grid = build_grid(5.0, 11).unwrap();
    let folds = FoldScheme::k_fold(40, 5, 1).unwrap();
    let res = select_cv(&data, &lasso(), &folds, &grid, &SolverConfig::default()).unwrap();
    let i = res.index().unwrap();
    assert!(res.criterion[i] < 1e-6, "{}", res.criterion[i]);
    assert!(res.t_hat >= 2.5 - 1e-12);
}

#[test]
fn pure_noise_selects_a_small_radius() {
    let mut g = rng::from_seed(4);
    let n = 2000;
    let x = gaussian_matrix(&mut g, n, 5);
    let y = gaussian_vector(&mut g, n);
    let data = Dataset::new(y, x).unwrap();
    let grid = build_grid(1.0, 51).unwrap();
    let folds = FoldScheme::k_fold(n, 10, 2).unwrap();
    let res = select_cv(&data, &lasso(), &folds, &grid, &SolverConfig::default()).unwrap();
    // the least-squares fit has l1 norm of order 5 / sqrt(n)
    assert!(res.t_hat <= 0.15, "t_hat = {}", res.t_hat);
}

#[test]
fn cv_curve_matches_independent_refits_for_several_k() {
    let cfg = SolverConfig::default();
    let data = instance(300, 20, 5);
    let grid = build_grid(compute_t_max(&data, 20.0).unwrap(), 8).unwrap();
    for k in [2, 5] {
        let folds = FoldScheme::k_fold(20, k, 9).unwrap();
        let (curve, converged) = cv_curve(&data, &lasso(), &folds, &grid, &cfg).unwrap();
        assert!(converged);
        for (g, &t) in grid.points().iter().enumerate() {
            // hand-rolled refits with explicit residual sums
            let mut total = 0.0;
            for v in 0..k {
                let train = data.rows(&folds.complement(v));
                let beta = fit_constrained(&train, &EstimatorSpec::lasso(t).unwrap(), &cfg)
                    .unwrap()
                    .beta;
                let fold = &folds.folds()[v];
                let mut sse = 0.0;
                for &r in fold {
                    let mut pred = 0.0;
                    for j in 0..5 {
                        pred += data.x()[(r, j)] * beta[j];
                    }
                    sse += (data.y()[r] - pred).powi(2);
                }
                total += sse / fold.len() as f64;
            }
            let expect = total / k as f64;
            assert!((curve[g] - expect).abs() < 1e-10, "k={k} t={t}: {} vs {expect}", curve[g]);
        }
    }
}

#[test]
fn path_matches_cold_fits() {
    let cfg = SolverConfig::default();
    let data = instance(400, 15, 20);
    let grid = build_grid(3.0, 10).unwrap();
    let path = fit_path(&data, &lasso(), &grid, &cfg).unwrap();
    for (fit, &t) in path.iter().zip(grid.points()) {
        let cold = fit_constrained(&data, &EstimatorSpec::lasso(t).unwrap(), &cfg).unwrap();
        assert!((fit.objective - cold.objective).abs() < 1e-9);
    }
}

#[test]
fn ssr_estimates_the_noise_level() {
    let trials = 100;
    let mut within = 0;
    for seed in 0..trials {
        let mut g = rng::child(5, "ssr", seed);
        let n = 2000;
        let x = gaussian_matrix(&mut g, n, 10);
        let y = gaussian_vector(&mut g, n);
        let data = Dataset::new(y, x).unwrap();
        let res = select_ssr(&data, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        let sigma2 = res.criterion.last().unwrap().powi(2);
        if (sigma2 - 1.0).abs() <= 0.1 {
            within += 1;
        }
    }
    assert!(within >= 99, "{within} of {trials}");
}

#[test]
fn t_max_of_gaussian_response_is_near_one() {
    let mut g = rng::from_seed(6);
    let y = gaussian_vector(&mut g, 100);
    let x = gaussian_matrix(&mut g, 100, 3);
    let data = Dataset::new(y, x).unwrap();
    let t = compute_t_max(&data, 100.0).unwrap();
    assert!((t - 1.0).abs() < 0.5, "{t}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn df_is_nonincreasing_in_threshold(
        v in prop::collection::vec(-1.0..1.0f64, 1..20),
        a in 0.0..0.5f64,
        b in 0.0..0.5f64,
    ) {
        let beta = DVector::from_vec(v);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(df_hat(&beta, hi) <= df_hat(&beta, lo));
    }

    #[test]
    fn argmin_is_a_first_minimum(v in prop::collection::vec(0..5u8, 1..30)) {
        let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let i = argmin(&vals).unwrap();
        prop_assert!(vals.iter().all(|&x| x >= vals[i]));
        prop_assert!(vals[..i].iter().all(|&x| x > vals[i]));
    }

    #[test]
    fn grids_are_uniform_and_anchored(t_max in 0.0..50.0f64, size in 2usize..200) {
        let g = build_grid(t_max, size).unwrap();
        prop_assert_eq!(g.points()[0], 0.0);
        prop_assert_eq!(*g.points().last().unwrap(), t_max);
        if t_max > 0.0 {
            prop_assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        }
    }
}

#[test]
fn gic_penalty_grows_with_c_n() {
    let mut g = rng::from_seed(8);
    let r: f64 = g.random_range(0.5..1.5);
    let aic = gic_value(r, 3, 100, 2.0, 1.0, GicScaling::Normalized);
    let bic = gic_value(r, 3, 100, 100f64.ln(), 1.0, GicScaling::Normalized);
    assert!(bic > aic);
    let literal = gic_value(r, 3, 100, 2.0, 1.0, GicScaling::Unnormalized);
    assert!((literal - (r + 6.0)).abs() < 1e-12);
}
