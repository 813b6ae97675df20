//! Minimal dense linear algebra: row-major matrices, Cholesky factorization,
//! and triangular solves. Kept in-crate so the jitter ladder and pivot
//! diagnostics match the numeric contracts exactly.

use serde::{Deserialize, Serialize};

/// Dense row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Split into disjoint row slices for positional parallel fills.
    pub fn row_chunks_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.data.chunks_mut(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute asymmetry |A_ij - A_ji| relative to the largest
    /// absolute entry; 0 for an exactly symmetric matrix.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Outcome of an attempted Cholesky factorization.
pub enum CholeskyOutcome {
    /// Lower-triangular factor L with A = L L^T.
    Factor(Matrix),
    /// Factorization broke down at the first non-positive pivot.
    Indefinite { pivot: f64 },
}

/// Plain lower Cholesky of a symmetric matrix given by its lower triangle.
/// `diag_shift` is added to every diagonal entry before factorizing.
pub fn cholesky(a: &Matrix, diag_shift: f64) -> CholeskyOutcome {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            // Row-major layout keeps both operand slices contiguous.
            let (li, lj) = if i == j {
                let r = l.row(i);
                (&r[..j], &r[..j])
            } else {
                let (head, tail) = l.as_slice_split(i);
                (&tail[..j], &head[j * n..j * n + j])
            };
            let s = dot(li, lj);
            let aij = a.get(i, j) + if i == j { diag_shift } else { 0.0 };
            if i == j {
                let pivot = aij - s;
                if pivot <= 0.0 || !pivot.is_finite() {
                    return CholeskyOutcome::Indefinite { pivot };
                }
                l.set(i, j, pivot.sqrt());
            } else {
                l.set(i, j, (aij - s) / l.get(j, j));
            }
        }
    }
    CholeskyOutcome::Factor(l)
}

/// Most negative pivot of the LDL^T factorization of `a + diag_shift * I`.
///
/// Unlike [`cholesky`], LDL^T can march past negative pivots, so this scans
/// the whole spectrum of pivots for diagnostics. Returns `None` when an exact
/// zero pivot stalls the recursion.
pub fn ldl_min_pivot(a: &Matrix, diag_shift: f64) -> Option<f64> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Matrix::identity(n);
    let mut d = vec![0.0f64; n];
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut s = a.get(j, j) + diag_shift;
        for k in 0..j {
            s -= l.get(j, k) * l.get(j, k) * d[k];
        }
        d[j] = s;
        min_pivot = min_pivot.min(s);
        if s == 0.0 || !s.is_finite() {
            return if min_pivot.is_finite() { Some(min_pivot) } else { None };
        }
        for i in (j + 1)..n {
            let mut v = a.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k) * d[k];
            }
            l.set(i, j, v / s);
        }
    }
    Some(min_pivot)
}

impl Matrix {
    /// Borrow row `i`'s prefix together with everything before it, so the
    /// factorization loop can read row j while writing row i.
    #[inline]
    fn as_slice_split(&mut self, i: usize) -> (&[f64], &[f64]) {
        let n = self.cols;
        let (head, tail) = self.data.split_at(i * n);
        (head, &tail[..n])
    }
}

/// Solve L x = b for lower-triangular L, in place.
pub fn solve_lower(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &b[..i]);
        b[i] = (b[i] - s) / l.get(i, i);
    }
}

/// Solve L^T x = b for lower-triangular L, in place.
pub fn solve_lower_transpose(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * b[k];
        }
        b[i] = s / l.get(i, i);
    }
}

/// Solve (L L^T) x = b given the lower factor L.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solve_lower(l, &mut x);
    solve_lower_transpose(l, &mut x);
    x
}
