//! Dense symmetric linear algebra for the small matrices used throughout the crate.
//!
//! Everything here is written for dimensions up to a few dozen: a packed
//! symmetric type, cyclic Jacobi for the standard eigenproblem, Cholesky, and
//! the symmetric-definite generalized problem `K z = w M z` via Cholesky
//! reduction.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Errors raised by the linear algebra routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("Jacobi iteration did not converge after {rotations} rotations (off-diagonal norm {off_diagonal:e})")]
    NotConverged { rotations: usize, off_diagonal: f64 },
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero pivot at index {index}")]
    ZeroPivot { index: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix must have at least one row")]
    Empty,
}

/// A general dense row-major matrix.
#[derive(Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute entrywise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Real symmetric matrix stored as its packed lower triangle, so that
/// `get(i, j) == get(j, i)` holds bit-for-bit.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        SymMatrix {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from a closure evaluated on the lower triangle only.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from full rows, rejecting input that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LinalgError::Empty);
        }
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(j) = (0..i).find(|&j| row[j] != rows[j][i]) {
                return Err(LinalgError::NotSymmetric { row: i, col: j });
            }
        }
        Ok(Self::from_lower_fn(dim, |i, j| rows[i][j]))
    }

    /// Takes the lower triangle of a square dense matrix.
    pub fn from_lower(m: &Matrix) -> Self {
        assert_eq!(m.rows(), m.cols());
        Self::from_lower_fn(m.rows(), |i, j| m[(i, j)])
    }

    /// Averages a square dense matrix with its transpose.
    pub fn symmetrize(m: &Matrix) -> Self {
        assert_eq!(m.rows(), m.cols());
        Self::from_lower_fn(m.rows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.packed[packed_index(i, j)] = value;
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.to_matrix().to_rows()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.packed.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.packed
            .iter()
            .zip(&other.packed)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, v.len());
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `uᵀ S v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(self.mul_vec(v)).map(|(a, b)| a * b).sum()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Eigenvalues in ascending order with eigenvectors stored as matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, s: usize) -> Vec<f64> {
        self.eigenvectors.column(s)
    }

    /// `V diag(h(d)) Vᵀ`.
    pub fn reconstruct_with(&self, h: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&d| h(d)).collect();
        SymMatrix::from_lower_fn(n, |i, j| (0..n).map(|s| v[(i, s)] * weights[s] * v[(j, s)]).sum())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|d| d)
    }

    /// Sorts ascending (stable, so ties keep their incoming order) and flips
    /// each column so its largest-magnitude component is positive.
    fn canonicalize(eigenvalues: Vec<f64>, vectors: Matrix) -> Spectrum {
        let n = eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let mut sorted_vals = Vec::with_capacity(n);
        let mut sorted_vecs = Matrix::zeros(vectors.rows(), n);
        for (dst, &src) in order.iter().enumerate() {
            sorted_vals.push(eigenvalues[src]);
            let mut pivot = 0;
            for i in 0..vectors.rows() {
                if vectors[(i, src)].abs() > vectors[(pivot, src)].abs() {
                    pivot = i;
                }
            }
            let sign = if vectors[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..vectors.rows() {
                sorted_vecs[(i, dst)] = sign * vectors[(i, src)];
            }
        }
        Spectrum {
            eigenvalues: sorted_vals,
            eigenvectors: sorted_vecs,
        }
    }
}

/// Convergence target for Jacobi: off-diagonal Frobenius norm relative to the full norm.
pub const JACOBI_RELATIVE_TOLERANCE: f64 = 1e-14;

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].powi(2);
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi with a threshold strategy.
///
/// The rotation budget is `30·dim²`. Output is sorted ascending and sign-fixed,
/// so identical input gives bit-identical output.
pub fn eigh_symmetric(a: &SymMatrix) -> Result<Spectrum, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.dim();
    let mut w = a.to_matrix();
    let mut v = Matrix::identity(n);
    let target = JACOBI_RELATIVE_TOLERANCE * a.frobenius_norm();
    let budget = 30 * n * n;
    let mut rotations = 0usize;
    let mut sweep = 0usize;

    loop {
        let off = off_diagonal_norm(&w);
        if off <= target {
            break;
        }
        sweep += 1;
        // Early sweeps skip small pivots; later sweeps rotate everything nonzero.
        let threshold = if sweep < 4 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 || apq.abs() <= threshold {
                    continue;
                }
                if rotations >= budget {
                    return Err(LinalgError::NotConverged {
                        rotations,
                        off_diagonal: off_diagonal_norm(&w),
                    });
                }
                rotations += 1;
                rotated = true;
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                w[(p, p)] = app - t * apq;
                w[(q, q)] = aqq + t * apq;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated && threshold == 0.0 {
            // Nothing left to rotate but the norm test still fails: rounding floor.
            break;
        }
    }

    let eigenvalues = (0..n).map(|i| w[(i, i)]).collect();
    Ok(Spectrum::canonicalize(eigenvalues, v))
}

/// Cholesky factor `L` with `L Lᵀ = a` and a strictly positive diagonal.
pub fn cholesky(a: &SymMatrix) -> Result<Matrix, LinalgError> {
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
fn back_substitute_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Symmetric-definite generalized eigenproblem `kappa z = w mu z`.
///
/// Reduces with `mu = L Lᵀ` to the standard problem for `L⁻¹ kappa L⁻ᵀ`, then maps
/// eigenvectors back with `z = L⁻ᵀ y`. Returned columns satisfy `zᵀ mu z = 1`.
pub fn solve_generalized_eig(kappa: &SymMatrix, mu: &SymMatrix) -> Result<Spectrum, LinalgError> {
    if kappa.dim() != mu.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: kappa.dim(),
            right: mu.dim(),
        });
    }
    let n = mu.dim();
    let l = cholesky(mu)?;

    // X = L⁻¹ K, then C = L⁻¹ Xᵀ = L⁻¹ K L⁻ᵀ (K symmetric).
    let k = kappa.to_matrix();
    let mut x = Matrix::zeros(n, n);
    for j in 0..n {
        let col = forward_substitute(&l, &k.column(j));
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    let xt = x.transpose();
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let col = forward_substitute(&l, &xt.column(j));
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    let reduced = eigh_symmetric(&SymMatrix::symmetrize(&c))?;

    let mut z = Matrix::zeros(n, n);
    for s in 0..n {
        let col = back_substitute_transposed(&l, &reduced.vector(s));
        for i in 0..n {
            z[(i, s)] = col[i];
        }
    }
    Ok(Spectrum::canonicalize(reduced.eigenvalues, z))
}

/// Product of the eigenvalues.
pub fn determinant(a: &SymMatrix) -> Result<f64, LinalgError> {
    Ok(eigh_symmetric(a)?.eigenvalues.iter().product())
}

/// Eliminates row/column `index`: returns `a22 − a21 a11⁻¹ a12`.
pub fn schur_complement(a: &SymMatrix, index: usize) -> Result<SymMatrix, LinalgError> {
    let n = a.dim();
    if index >= n {
        return Err(LinalgError::DimensionMismatch { left: n, right: index });
    }
    if n == 1 {
        return Err(LinalgError::Empty);
    }
    let pivot = a.get(index, index);
    if pivot == 0.0 {
        return Err(LinalgError::ZeroPivot { index });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != index).collect();
    Ok(SymMatrix::from_lower_fn(n - 1, |i, j| {
        let (ii, jj) = (keep[i], keep[j]);
        a.get(ii, jj) - a.get(ii, index) * a.get(index, jj) / pivot
    }))
}
