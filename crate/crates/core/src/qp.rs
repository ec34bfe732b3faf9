//! Projections and a small accelerated projected-gradient solver for the
//! box/ball constrained least-squares problems that appear when big-M bounds
//! or the ridge radius are binding.

use crate::linalg::{dot, Matrix};

/// Projects `v` onto `{|x_j| ≤ bound_j} ∩ {Σ_{penalized} x_j² ≤ radius2}`.
/// `bound_j = ∞` leaves a coordinate unboxed; unpenalized coordinates only see their box.
pub fn project_box_ball(v: &mut [f64], bound: &[f64], penalized: &[bool], radius2: f64) {
    let clip = |x: f64, m: f64| x.clamp(-m, m);
    let norm2 = |mu: f64, v: &[f64]| -> f64 {
        v.iter()
            .zip(bound)
            .zip(penalized)
            .filter(|(_, &p)| p)
            .map(|((x, m), _)| {
                let c = clip(x / (1.0 + mu), *m);
                c * c
            })
            .sum()
    };
    if !radius2.is_finite() || norm2(0.0, v) <= radius2 {
        for (x, m) in v.iter_mut().zip(bound) {
            *x = clip(*x, *m);
        }
        return;
    }
    if radius2 <= 0.0 {
        for ((x, m), p) in v.iter_mut().zip(bound).zip(penalized) {
            *x = if *p { 0.0 } else { clip(*x, *m) };
        }
        return;
    }
    let mut hi = 1.0;
    while norm2(hi, v) > radius2 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm2(mid, v) > radius2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for ((x, m), p) in v.iter_mut().zip(bound).zip(penalized) {
        *x = if *p { clip(*x / (1.0 + hi), *m) } else { clip(*x, *m) };
    }
}

/// Projects `v` onto `{|x_i| ≤ m_i, Σ_i |x_i| / m_i ≤ budget}`, the continuous
/// relaxation of a big-M cardinality constraint.
pub fn project_weighted_l1_box(v: &mut [f64], m: &[f64], budget: f64) {
    let shrink = |x: f64, mi: f64, tau: f64| -> f64 {
        let a = (x.abs() - tau / mi).clamp(0.0, mi);
        a.copysign(x)
    };
    let usage = |tau: f64, v: &[f64]| -> f64 {
        v.iter()
            .zip(m)
            .map(|(x, mi)| shrink(*x, *mi, tau).abs() / mi)
            .sum()
    };
    if usage(0.0, v) <= budget {
        for (x, mi) in v.iter_mut().zip(m) {
            *x = x.clamp(-mi, *mi);
        }
        return;
    }
    if budget <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut hi = v
        .iter()
        .zip(m)
        .map(|(x, mi)| x.abs() * mi)
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if usage(mid, v) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for (x, mi) in v.iter_mut().zip(m) {
        *x = shrink(*x, *mi, hi);
    }
}

/// Box/ball constrained restricted fit.
///
/// Minimises `Σ_{i∈R} e_i² + Σ_{i∈O} (|e_i| − mphi_i)₊²` over `β[cols]`, where
/// `e = y − X[:,cols] β`, subject to `|β_k| ≤ bound_k` and the ridge ball on
/// penalized coordinates. The second sum is what remains of a trimmed case
/// whose shift `φ_i` is capped by its big-M bound.
#[allow(clippy::too_many_arguments)]
pub fn constrained_fit(
    x: &Matrix,
    y: &[f64],
    retained: &[usize],
    trimmed: &[usize],
    mphi: &[f64],
    cols: &[usize],
    bound: &[f64],
    penalized: &[bool],
    radius2: f64,
    start: &[f64],
) -> Vec<f64> {
    let k = cols.len();
    let rows: Vec<usize> = retained.iter().chain(trimmed).copied().collect();
    let sub = x.select_rows(&rows).select_cols(cols);
    let lip = 2.0 * sub.gram_spectral_norm(1e-8, 500) * 1.01;
    if lip == 0.0 {
        let mut b = start.to_vec();
        project_box_ball(&mut b, bound, penalized, radius2);
        return b;
    }
    let n_ret = retained.len();
    let ysub: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let cap: Vec<f64> = trimmed.iter().map(|&i| mphi[i]).collect();

    let grad = |b: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut f = 0.0;
        for r in 0..sub.rows() {
            let e = ysub[r] - dot(sub.row(r), b);
            let psi = if r < n_ret {
                e
            } else {
                let excess = (e.abs() - cap[r - n_ret]).max(0.0);
                excess.copysign(e)
            };
            f += psi * psi;
            if psi != 0.0 {
                for (gk, xk) in g.iter_mut().zip(sub.row(r)) {
                    *gk -= 2.0 * psi * xk;
                }
            }
        }
        f
    };

    let mut b = start.to_vec();
    project_box_ball(&mut b, bound, penalized, radius2);
    let mut z = b.clone();
    let mut g = vec![0.0; k];
    let mut t = 1.0f64;
    for _ in 0..50_000 {
        grad(&z, &mut g);
        let mut next: Vec<f64> = z.iter().zip(&g).map(|(zk, gk)| zk - gk / lip).collect();
        project_box_ball(&mut next, bound, penalized, radius2);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut delta = 0.0f64;
        for kk in 0..k {
            delta = delta.max((next[kk] - b[kk]).abs() / (1.0 + next[kk].abs()));
            z[kk] = next[kk] + momentum * (next[kk] - b[kk]);
        }
        b = next;
        t = t_next;
        if delta < 1e-13 {
            break;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_projection_scales_penalized_only() {
        let mut v = vec![10.0, 3.0, 4.0];
        project_box_ball(&mut v, &[f64::INFINITY; 3], &[false, true, true], 1.0);
        assert_eq!(v[0], 10.0);
        let n2 = v[1] * v[1] + v[2] * v[2];
        assert!((n2 - 1.0).abs() < 1e-9);
        assert!((v[1] / v[2] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn l1_box_projection_respects_budget() {
        let mut v = vec![3.0, -2.0, 0.5, 1.0];
        let m = [1.0, 2.0, 1.0, 4.0];
        project_weighted_l1_box(&mut v, &m, 1.5);
        let used: f64 = v.iter().zip(&m).map(|(x, mi)| x.abs() / mi).sum();
        assert!(used <= 1.5 + 1e-9);
        for (x, mi) in v.iter().zip(&m) {
            assert!(x.abs() <= mi + 1e-12);
        }
        let mut inside = vec![0.1, 0.1];
        project_weighted_l1_box(&mut inside, &[1.0, 1.0], 1.0);
        assert_eq!(inside, vec![0.1, 0.1]);
    }

    #[test]
    fn constrained_fit_clips_at_box() {
        // y = 5 x; box |β| ≤ 1 → β = 1.
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let y = [5.0, 10.0, 15.0];
        let b = constrained_fit(&x, &y, &[0, 1, 2], &[], &[], &[0], &[1.0], &[true], f64::INFINITY, &[0.0]);
        assert!((b[0] - 1.0).abs() < 1e-10);
    }
}
