//! Dense row-major matrices over [`Real`] with the handful of factorizations
//! the Gaussian filters need (Cholesky, triangular solves, log-determinants).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![S::one(); n])
    }

    pub fn from_diag(diag: &[S]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: S) -> Self {
        Self::from_diag(&vec![s; n])
    }

    /// Build from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix buffer",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Result<Self> {
        let owned: Vec<Vec<S>> = rows.iter().map(|r| r.iter().map(|&v| S::of(v)).collect()).collect();
        Self::from_rows(&owned)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn diag(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension");
        (0..self.rows).map(|i| crate::scalar::dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows, "tr_mul_vec dimension");
        let mut out = vec![S::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == S::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = S::of(0.5);
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        self.is_square() && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Strict Cholesky factorization of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Cholesky<S>> {
        Cholesky::new(self, false)
    }

    /// Cholesky factor of a positive semidefinite matrix; non-positive pivots
    /// produce zero columns, so `L Lᵀ` reproduces the matrix on its range.
    pub fn cholesky_psd(&self) -> Result<Cholesky<S>> {
        Cholesky::new(self, true)
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.cols + c]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<S> {
    lower: Matrix<S>,
    /// Some pivot was dropped as numerically zero (PSD mode only).
    rank_deficient: bool,
}

impl<S: Real> Cholesky<S> {
    fn new(a: &Matrix<S>, psd: bool) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                what: "cholesky input",
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let scale = (0..n).fold(S::zero(), |m, i| m.max(a[(i, i)].abs()));
        let tol = scale * S::epsilon() * S::of(n.max(1) as f64) * S::of(16.0);
        let mut l = Matrix::zeros(n, n);
        let mut deficient = false;
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                let slack = scale.max(S::one()) * S::of(1e-9);
                if psd && d.is_finite() && d >= -slack {
                    deficient = true;
                    continue;
                }
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self {
            lower: l,
            rank_deficient: deficient,
        })
    }

    pub fn lower(&self) -> &Matrix<S> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn is_full_rank(&self) -> bool {
        !self.rank_deficient
    }

    /// `L z`, used to colour standard normal draws.
    pub fn mul_lower(&self, z: &[S]) -> Vec<S> {
        let n = self.dim();
        assert_eq!(z.len(), n);
        (0..n)
            .map(|i| {
                let row = self.lower.row(i);
                (0..=i).fold(S::zero(), |acc, k| acc + row[k] * z[k])
            })
            .collect()
    }

    /// Solve `L v = b`.
    pub fn solve_lower(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut v = b.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let mut s = v[i];
            for k in 0..i {
                s = s - row[k] * v[k];
            }
            v[i] = s / row[i];
        }
        v
    }

    /// Solve `Lᵀ v = b`.
    pub fn solve_upper(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut v = b.to_vec();
        for i in (0..n).rev() {
            let mut s = v[i];
            for (k, vk) in v.iter().enumerate().skip(i + 1) {
                s = s - self.lower[(k, i)] * *vk;
            }
            v[i] = s / self.lower[(i, i)];
        }
        v
    }

    /// Solve `A v = b`. Requires full rank.
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<S>) -> Matrix<S> {
        let bt = b.transpose();
        let mut out = Matrix::zeros(b.cols(), b.rows());
        for c in 0..b.cols() {
            let col = self.solve(bt.row(c));
            out.data[c * b.rows()..(c + 1) * b.rows()].copy_from_slice(&col);
        }
        out.transpose()
    }

    pub fn inverse(&self) -> Matrix<S> {
        self.solve_matrix(&Matrix::identity(self.dim()))
    }

    pub fn log_det(&self) -> S {
        (0..self.dim()).fold(S::zero(), |acc, i| acc + self.lower[(i, i)].ln())
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form_inv(&self, b: &[S]) -> S {
        crate::scalar::norm_sq(&self.solve_lower(b))
    }
}

/// Log-density of `N(mean, A)` at `x`, where `chol` factors `A`.
pub fn mvn_log_pdf<S: Real>(x: &[S], mean: &[S], chol: &Cholesky<S>) -> S {
    let diff: Vec<S> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let n = S::of(x.len() as f64);
    -S::of(0.5) * (n * (S::TAU()).ln() + S::of(2.0) * chol.log_det() + chol.quad_form_inv(&diff))
}
