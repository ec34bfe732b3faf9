mod common;

use nalgebra::{DMatrix, DVector};
use sfsod::pipeline::{prepare, solve_prepared, FitConfig, Method};
use sfsod::tuning::{
    bic_path, bic_value, deletion_threshold, fold_assignment, refine_kn, trimmed_cv, TuningPlan,
};
use sfsod::{Dataset, Error, SolveStatus};

fn plan(kp_grid: Vec<usize>, folds: usize) -> TuningPlan {
    TuningPlan {
        kp_grid,
        folds,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn untrimmed_full_model_cv_is_ordinary_kfold() {
    for seed in 0..4 {
        let data = common::random_problem(seed, 30, 4, 2, 0).data;
        let n = data.n();
        let pl = plan(vec![3], 5);
        let cv = trimmed_cv(&data, 0, f64::INFINITY, &pl, Method::Mip, &FitConfig::default()).unwrap();
        assert!(cv.train_trim.iter().chain(&cv.test_trim).all(|&t| t == 0));

        let labels = fold_assignment(n, 5, 3);
        let mut total = 0.0;
        for f in 0..5 {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            let a = DMatrix::from_fn(train.len(), 4, |r, c| data.x().get(train[r], c));
            let b = DVector::from_iterator(train.len(), train.iter().map(|&i| data.y()[i]));
            let coef = a.svd(true, true).solve(&b, 1e-12).unwrap();
            let mse = test
                .iter()
                .map(|&i| {
                    let pred: f64 = (0..4).map(|c| data.x().get(i, c) * coef[c]).sum();
                    (data.y()[i] - pred).powi(2)
                })
                .sum::<f64>()
                / test.len() as f64;
            assert!((cv.scores[0].fold_scores[f] - mse).abs() < 1e-8 * mse.max(1.0), "seed {seed} fold {f}");
            total += mse;
        }
        assert!((cv.scores[0].score - total / 5.0).abs() < 1e-8 * total.max(1.0));
    }
}

#[test]
fn tiny_folds_are_rejected() {
    let data = common::random_problem(0, 12, 3, 1, 0).data;
    let err = trimmed_cv(&data, 2, f64::INFINITY, &plan(vec![1], 10), Method::Mip, &FitConfig::default());
    assert!(matches!(err, Err(Error::FoldTooSmall(_))));
}

#[test]
fn bic_rows_are_consistent_and_warm_chain_is_no_worse() {
    for seed in 0..5 {
        let data = common::random_problem(20 + seed, 25, 6, 2, 2).data;
        let problem = prepare(&data, 0, 2, f64::INFINITY, false).unwrap();
        let cfg = FitConfig::default();
        let res = bic_path(&problem, &plan(vec![0, 1, 2, 3, 4], 5), Method::Mip, &cfg).unwrap();
        for pt in &res.path {
            assert_eq!(pt.size, pt.k_p + 1);
            assert_eq!(pt.h, 23);
            assert!((pt.bic - (pt.size as f64 * 23f64.ln() + 23.0 * pt.loss.ln())).abs() < 1e-12);
            assert_eq!(pt.bic, bic_value(pt.size, pt.h, pt.loss));
            // With optimal shifts the objective is the retained loss scaled by h/n.
            assert!((pt.objective - pt.loss * 23.0 / 25.0).abs() < 1e-9 * pt.objective.max(1e-12));

            let cold = solve_prepared(&problem.with_budgets(pt.k_p, 2).unwrap(), Method::Mip, &cfg, &[]).unwrap();
            assert!(pt.objective <= cold.objective * (1.0 + 1e-9) + 1e-15, "seed {seed} k_p {}", pt.k_p);
        }
        let objs: Vec<f64> = res.path.iter().map(|p| p.objective).collect();
        assert!(objs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn refine_keeps_clean_data_untrimmed() {
    for seed in 0..5 {
        let data = common::random_problem(40 + seed, 40, 4, 3, 0).data;
        let problem = prepare(&data, 3, 0, f64::INFINITY, false).unwrap();
        let res = refine_kn(&problem, 3, 6, 0.01, Method::Mip, &FitConfig::default()).unwrap();
        assert_eq!(res.selected, 0, "seed {seed}: {:?}", res.trace);
        assert_eq!(res.trace.len(), 7);
    }
}

#[test]
fn refine_finds_planted_shifts_and_stays_below_start() {
    for seed in 0..5 {
        let base = common::random_problem(60 + seed, 40, 4, 3, 0).data;
        let mut y = base.y().to_vec();
        for yi in y.iter_mut().take(3) {
            *yi += 25.0;
        }
        let data = Dataset::new(y, base.x().clone(), true).unwrap();
        let problem = prepare(&data, 3, 0, f64::INFINITY, false).unwrap();
        let res = refine_kn(&problem, 3, 8, 0.01, Method::Mip, &FitConfig::default()).unwrap();
        assert_eq!(res.selected, 3, "seed {seed}");
        let ks: Vec<usize> = res.trace.iter().map(|s| s.k_n).collect();
        assert_eq!(ks, (3..=8).rev().collect::<Vec<_>>());
        let last = res.trace.last().unwrap();
        assert!(last.min_abs_deletion > deletion_threshold(40, 3, 0.01));
        assert!(res.trace.iter().all(|s| s.status == SolveStatus::Optimal));
    }
}
