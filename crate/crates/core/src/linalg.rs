//! Small dense linear algebra used throughout the crate.
//!
//! Everything here works on row-major `f64` storage and on row/column index
//! subsets of a design matrix, which is how the solver addresses restricted
//! fits `X[R, S]` without copying the data.

use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Xᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, self.row(i), &mut out);
            }
        }
        out
    }

    /// Copy of the rows listed in `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copy of the columns listed in `idx`.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Matrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Largest eigenvalue of `XᵀX` by power iteration.
    pub fn gram_spectral_norm(&self, rel_tol: f64, max_iter: usize) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        // Deterministic start with no zero components.
        let mut v: Vec<f64> = (0..self.cols).map(|j| 1.0 + 0.01 * j as f64).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let xv = self.mul_vec(&v);
            let mut w = self.tr_mul_vec(&xv);
            let next = norm(&w);
            if next == 0.0 {
                return 0.0;
            }
            w.iter_mut().for_each(|x| *x /= next);
            let done = (next - lambda).abs() <= rel_tol * next;
            lambda = next;
            v = w;
            if done {
                break;
            }
        }
        lambda
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`, stored densely row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
    updates: usize,
}

impl Cholesky {
    /// Factors a symmetric positive definite `dim × dim` matrix. Returns `None`
    /// when a pivot is not strictly positive.
    pub fn factor(a: &[f64], dim: usize) -> Option<Self> {
        assert_eq!(a.len(), dim * dim);
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * dim + i] = s.sqrt();
                } else {
                    l[i * dim + j] = s / l[j * dim + j];
                }
            }
        }
        Some(Cholesky { dim, l, updates: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rank-one modifications applied since the last full factorization.
    pub fn updates_since_factor(&self) -> usize {
        self.updates
    }

    /// Smallest squared diagonal entry of the factor, i.e. the smallest
    /// Schur-complement pivot met during factorization.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim)
            .map(|k| self.at(k, k) * self.at(k, k))
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    /// Solves `L z = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * d + k] * b[k];
            }
            b[i] = s / self.l[i * d + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let d = self.dim;
        for i in (0..d).rev() {
            let mut s = b[i];
            for k in i + 1..d {
                s -= self.l[k * d + i] * b[k];
            }
            b[i] = s / self.l[i * d + i];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// `xᵀ A⁻¹ x`.
    pub fn quad_inv(&self, x: &[f64]) -> f64 {
        let mut z = x.to_vec();
        self.forward(&mut z);
        dot(&z, &z)
    }

    /// Diagonal of `A⁻¹`.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let d = self.dim;
        // L⁻¹ column by column; (A⁻¹)_jj = Σ_k (L⁻¹)_kj².
        let mut out = vec![0.0; d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.forward(&mut e);
            for (k, ek) in e.iter().enumerate().skip(j) {
                let _ = k;
                out[j] += ek * ek;
            }
        }
        out
    }

    /// Turns the factor of `A` into the factor of `A + x xᵀ`.
    pub fn rank_one_update(&mut self, x: &[f64]) {
        let d = self.dim;
        let mut w = x.to_vec();
        for k in 0..d {
            let lkk = self.at(k, k);
            let r = (lkk * lkk + w[k] * w[k]).sqrt();
            let c = r / lkk;
            let s = w[k] / lkk;
            self.l[k * d + k] = r;
            for i in k + 1..d {
                let lik = (self.at(i, k) + s * w[i]) / c;
                w[i] = c * w[i] - s * lik;
                self.l[i * d + k] = lik;
            }
        }
        self.updates += 1;
    }

    /// Turns the factor of `A` into the factor of `A − x xᵀ`. Fails (leaving
    /// the factor unusable) when the result is not positive definite.
    pub fn rank_one_downdate(&mut self, x: &[f64]) -> bool {
        let d = self.dim;
        let mut w = x.to_vec();
        for k in 0..d {
            let lkk = self.at(k, k);
            let r2 = lkk * lkk - w[k] * w[k];
            if !(r2 > 0.0) {
                return false;
            }
            let r = r2.sqrt();
            let c = r / lkk;
            let s = w[k] / lkk;
            self.l[k * d + k] = r;
            for i in k + 1..d {
                let lik = (self.at(i, k) - s * w[i]) / c;
                w[i] = c * w[i] - s * lik;
                self.l[i * d + k] = lik;
            }
        }
        self.updates += 1;
        true
    }
}

/// Gram matrix `X[R,S]ᵀ X[R,S]` (dense, `|S| × |S|`).
pub fn gram(x: &Matrix, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let k = cols.len();
    let mut g = vec![0.0; k * k];
    let mut buf = vec![0.0; k];
    for &i in rows {
        let row = x.row(i);
        for (b, &c) in buf.iter_mut().zip(cols) {
            *b = row[c];
        }
        for a in 0..k {
            let va = buf[a];
            if va == 0.0 {
                continue;
            }
            let ga = &mut g[a * k..a * k + a + 1];
            for (gb, &vb) in ga.iter_mut().zip(&buf[..=a]) {
                *gb += va * vb;
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[b * k + a] = g[a * k + b];
        }
    }
    g
}

/// `X[R,S]ᵀ y[R]`.
pub fn xty(x: &Matrix, y: &[f64], rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; cols.len()];
    for &i in rows {
        let row = x.row(i);
        let yi = y[i];
        for (o, &c) in out.iter_mut().zip(cols) {
            *o += row[c] * yi;
        }
    }
    out
}

/// Relative pivot threshold below which a column counts as linearly dependent
/// on the columns already accepted.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares fit restricted to rows `R` and columns `S`.
#[derive(Debug, Clone)]
pub struct LsFit {
    /// Coefficients aligned with the requested columns; dependent columns get 0.
    pub coef: Vec<f64>,
    /// Which requested columns were linearly independent (and kept).
    pub kept: Vec<bool>,
    /// Residual sum of squares over the rows of the fit.
    pub rss: f64,
    /// Factor of the Gram matrix on the kept columns.
    pub chol: Option<Cholesky>,
}

impl LsFit {
    pub fn full_rank(&self) -> bool {
        self.kept.iter().all(|&k| k)
    }

    pub fn rank(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

/// Greedy rank-revealing Cholesky: accepts columns in order, dropping any
/// column whose Schur complement pivot falls below `RANK_TOL` relative to its
/// own squared norm. Returns the factor of the accepted block and the mask.
fn sequential_cholesky(g: &[f64], k: usize, penalty: &[f64]) -> (Vec<bool>, Vec<usize>, Option<Cholesky>) {
    let mut kept = vec![false; k];
    let mut idx: Vec<usize> = Vec::with_capacity(k);
    // Rows of L for accepted columns, each of growing length.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let gjj = g[j * k + j] + penalty[j];
        if !(gjj > 0.0) {
            continue;
        }
        let m = idx.len();
        let mut l = vec![0.0; m + 1];
        for (a, &ia) in idx.iter().enumerate() {
            let mut s = g[ia * k + j];
            for b in 0..a {
                s -= rows[a][b] * l[b];
            }
            l[a] = s / rows[a][a];
        }
        let d = gjj - dot(&l[..m], &l[..m]);
        if d > RANK_TOL * gjj {
            l[m] = d.sqrt();
            rows.push(l);
            idx.push(j);
            kept[j] = true;
        }
    }
    let m = idx.len();
    if m == 0 {
        return (kept, idx, None);
    }
    let mut dense = vec![0.0; m * m];
    for (a, row) in rows.iter().enumerate() {
        dense[a * m..a * m + row.len()].copy_from_slice(row);
    }
    (
        kept,
        idx,
        Some(Cholesky {
            dim: m,
            l: dense,
            updates: 0,
        }),
    )
}

/// Ordinary least squares of `y[R]` on `X[R,S]`, tolerant of rank deficiency.
pub fn least_squares(x: &Matrix, y: &[f64], rows: &[usize], cols: &[usize]) -> LsFit {
    penalized_least_squares(x, y, rows, cols, &vec![0.0; cols.len()])
}

/// Least squares with an additive diagonal penalty `diag(penalty)` on the
/// Gram matrix (a ridge term on selected coefficients). The reported `rss`
/// is the plain residual sum of squares, without the penalty.
pub fn penalized_least_squares(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    cols: &[usize],
    penalty: &[f64],
) -> LsFit {
    let k = cols.len();
    let g = gram(x, rows, cols);
    let b = xty(x, y, rows, cols);
    let (kept, idx, chol) = sequential_cholesky(&g, k, penalty);
    let mut coef = vec![0.0; k];
    if let Some(ch) = &chol {
        let rhs: Vec<f64> = idx.iter().map(|&j| b[j]).collect();
        let sol = ch.solve(&rhs);
        for (&j, v) in idx.iter().zip(sol) {
            coef[j] = v;
        }
    }
    let rss = residual_ss(x, y, rows, cols, &coef);
    LsFit {
        coef,
        kept,
        rss,
        chol,
    }
}

/// `Σ_{i∈R} (y_i − x_{i,S}ᵀ b)²`.
pub fn residual_ss(x: &Matrix, y: &[f64], rows: &[usize], cols: &[usize], coef: &[f64]) -> f64 {
    rows.iter()
        .map(|&i| {
            let r = y[i] - row_dot(x.row(i), cols, coef);
            r * r
        })
        .sum()
}

/// `Σ_k row[cols[k]] · coef[k]`.
#[inline]
pub fn row_dot(row: &[f64], cols: &[usize], coef: &[f64]) -> f64 {
    cols.iter().zip(coef).map(|(&c, &b)| row[c] * b).sum()
}

/// Gathers `row[cols]` into `buf`.
#[inline]
pub fn gather(row: &[f64], cols: &[usize], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(cols.iter().map(|&c| row[c]));
}
