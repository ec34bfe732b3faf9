//! Exact fits for a fixed support: given the active features and the trimmed
//! cases, the remaining program is a (possibly constrained) least-squares problem.

use crate::linalg::{least_squares, penalized_least_squares, row_dot, LsFit};
use crate::model::{objective, SfsodProblem};
use crate::qp::constrained_fit;

/// Result of a fixed-support fit, in full coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportFit {
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub objective: f64,
}

/// Design columns of a support: the intercept (if any) followed by `features`.
pub fn support_columns(problem: &SfsodProblem, features: &[usize]) -> Vec<usize> {
    let mut cols = Vec::with_capacity(features.len() + 1);
    if problem.intercept() {
        cols.push(0);
    }
    cols.extend(features.iter().copied().filter(|&j| !(problem.intercept() && j == 0)));
    cols
}

/// Complement of `trimmed` in `0..n`.
pub fn retained_cases(n: usize, trimmed: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in trimmed {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Minimises the objective with `β` supported on `features` (plus intercept)
/// and `φ` supported on `trimmed`.
///
/// The ridge radius is enforced through a multiplier found by bisection. With
/// `respect_bigm`, big-M boxes are enforced too, falling back to projected
/// gradient when the unconstrained fit leaves the box.
pub fn fit_support(
    problem: &SfsodProblem,
    features: &[usize],
    trimmed: &[usize],
    respect_bigm: bool,
) -> SupportFit {
    let n = problem.n();
    let p = problem.p();
    let data = &problem.data;
    let cols = support_columns(problem, features);
    let retained = retained_cases(n, trimmed);
    let penalized: Vec<bool> = cols
        .iter()
        .map(|&c| !(problem.intercept() && c == 0))
        .collect();

    let mut coef = if problem.lambda == 0.0 {
        // Only unpenalized columns may be nonzero.
        let free: Vec<usize> = cols
            .iter()
            .zip(&penalized)
            .filter(|(_, &pen)| !pen)
            .map(|(&c, _)| c)
            .collect();
        let fit = least_squares(data.x(), data.y(), &retained, &free);
        let mut c = vec![0.0; cols.len()];
        let mut it = fit.coef.into_iter();
        for (ck, pen) in c.iter_mut().zip(&penalized) {
            if !pen {
                *ck = it.next().unwrap_or(0.0);
            }
        }
        c
    } else {
        let fit = least_squares(data.x(), data.y(), &retained, &cols);
        if problem.ridge_active() && pen_norm2(&fit.coef, &penalized) > problem.lambda {
            ridge_to_radius(problem, &retained, &cols, &penalized)
        } else {
            fit.coef
        }
    };

    let mut phi = vec![0.0; n];
    if respect_bigm && problem.has_bigm() {
        let mb = problem.bigm_beta.as_ref().unwrap();
        let mp = problem.bigm_phi.as_ref().unwrap();
        let bound: Vec<f64> = cols
            .iter()
            .zip(&penalized)
            .map(|(&c, &pen)| if pen { mb[c] } else { f64::INFINITY })
            .collect();
        let beta_out = coef.iter().zip(&bound).any(|(b, m)| b.abs() > *m);
        let phi_out = trimmed.iter().any(|&i| {
            let e = data.y()[i] - row_dot(data.x().row(i), &cols, &coef);
            e.abs() > mp[i]
        });
        if beta_out || phi_out {
            coef = constrained_fit(
                data.x(),
                data.y(),
                &retained,
                trimmed,
                mp,
                &cols,
                &bound,
                &penalized,
                problem.lambda,
                &coef,
            );
        }
        for &i in trimmed {
            let e = data.y()[i] - row_dot(data.x().row(i), &cols, &coef);
            phi[i] = e.clamp(-mp[i], mp[i]);
        }
    } else {
        for &i in trimmed {
            phi[i] = data.y()[i] - row_dot(data.x().row(i), &cols, &coef);
        }
    }

    let mut beta = vec![0.0; p];
    for (&c, b) in cols.iter().zip(&coef) {
        beta[c] = *b;
    }
    let objective = objective(problem, &beta, &phi).expect("dimensions are consistent");
    SupportFit {
        beta,
        phi,
        objective,
    }
}

fn pen_norm2(coef: &[f64], penalized: &[bool]) -> f64 {
    coef.iter()
        .zip(penalized)
        .filter(|(_, &p)| p)
        .map(|(b, _)| b * b)
        .sum()
}

/// Finds the ridge multiplier `μ` with `‖β_pen(μ)‖² = λ` by bisection and
/// returns the (feasible) coefficients at the upper end of the bracket.
fn ridge_to_radius(
    problem: &SfsodProblem,
    retained: &[usize],
    cols: &[usize],
    penalized: &[bool],
) -> Vec<f64> {
    let data = &problem.data;
    let solve = |mu: f64| -> LsFit {
        let pen: Vec<f64> = penalized.iter().map(|&p| if p { mu } else { 0.0 }).collect();
        penalized_least_squares(data.x(), data.y(), retained, cols, &pen)
    };
    let lambda = problem.lambda;
    let mut hi = 1e-6;
    let mut hi_fit = solve(hi);
    while pen_norm2(&hi_fit.coef, penalized) > lambda {
        hi *= 4.0;
        hi_fit = solve(hi);
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-15 * hi {
            break;
        }
        let fit = solve(mid);
        if pen_norm2(&fit.coef, penalized) > lambda {
            lo = mid;
        } else {
            hi = mid;
            hi_fit = fit;
        }
    }
    hi_fit.coef
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::Dataset;

    fn problem() -> SfsodProblem {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.5, -1.0],
            vec![1.0, 1.5, 2.0],
            vec![1.0, -0.3, 0.1],
            vec![1.0, 2.2, -0.7],
            vec![1.0, 0.9, 1.1],
            vec![1.0, -1.4, 0.3],
        ]);
        let y = vec![1.0, 4.0, -1.0, 3.5, 2.0, 30.0];
        SfsodProblem::new(Dataset::new(y, x, true).unwrap(), 2, 1).unwrap()
    }

    #[test]
    fn trimmed_case_gets_prediction_residual() {
        let pb = problem();
        let f = fit_support(&pb, &[1, 2], &[5], false);
        let e = pb.data.residuals(&f.beta);
        assert!((f.phi[5] - e[5]).abs() < 1e-12);
        assert!(f.phi[..5].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ridge_radius_is_respected() {
        let pb = problem().with_lambda(0.05).unwrap();
        let f = fit_support(&pb, &[1, 2], &[5], false);
        let n2 = f.beta[1] * f.beta[1] + f.beta[2] * f.beta[2];
        assert!(n2 <= 0.05 * (1.0 + 1e-9));
        assert!(n2 >= 0.05 * (1.0 - 1e-6));
        let loose = fit_support(&problem(), &[1, 2], &[5], false);
        assert!(f.objective >= loose.objective);
    }

    #[test]
    fn zero_radius_leaves_intercept_only() {
        let pb = problem().with_lambda(0.0).unwrap();
        let f = fit_support(&pb, &[1, 2], &[], false);
        assert_eq!(f.beta[1], 0.0);
        assert_eq!(f.beta[2], 0.0);
        let mean = pb.data.y().iter().sum::<f64>() / 6.0;
        assert!((f.beta[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn bigm_caps_shift() {
        let pb = problem().with_bigm(vec![10.0; 3], vec![1.0; 6]).unwrap();
        let f = fit_support(&pb, &[1, 2], &[5], true);
        assert!(f.phi[5].abs() <= 1.0 + 1e-12);
        let free = fit_support(&pb, &[1, 2], &[5], false);
        assert!(f.objective >= free.objective - 1e-12);
    }
}
