//! Dense complex matrices with an `N`-blocks-of-size-`M` partition.
//!
//! Block layout conventions used throughout the crate:
//!
//! * [`bvec`] stacks blocks column-of-blocks by column-of-blocks; inside a
//!   column of blocks the blocks are taken top to bottom, and each `M x M`
//!   block is vectorized column-major. For block `(k, l)` and in-block entry
//!   `(r, c)` the output index is `((l * N + k) * M + c) * M + r`.
//! * [`block_kron`] places `A_ij ⊗ B_kl` at block-of-blocks position
//!   `((i, k), (j, l))`, so that `bvec(A Σ B) = block_kron(Bᵀ, A) · bvec(Σ)`.
//!
//! With `N = 1` both reduce to the ordinary `vec` and Kronecker product.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Partition of an `(N·M) x (N·M)` matrix into `N x N` blocks of size `M x M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockSpec {
    num_blocks: usize,
    block_size: usize,
}

impl BlockSpec {
    pub fn new(num_blocks: usize, block_size: usize) -> Result<Self> {
        if num_blocks == 0 || block_size == 0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "block spec needs N >= 1 and M >= 1, got N={num_blocks}, M={block_size}"
            )));
        }
        Ok(Self {
            num_blocks,
            block_size,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Side length `N·M` of a conforming matrix.
    pub fn dim(&self) -> usize {
        self.num_blocks * self.block_size
    }

    fn check(&self, x: &ComplexMatrix) -> Result<()> {
        let d = self.dim();
        if x.rows != d || x.cols != d {
            return Err(Error::DimensionMismatch {
                expected: (d, d),
                found: x.shape(),
            });
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a real-valued matrix from row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(
            rows,
            cols,
            data.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from entries.
    pub fn column(entries: Vec<Complex64>) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries,
        }
    }

    /// Diagonal matrix from real entries.
    pub fn diag_real(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in entries.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        m
    }

    /// Block-diagonal matrix with the given square blocks.
    pub fn block_diag(blocks: &[ComplexMatrix]) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            if !b.is_square() {
                return Err(Error::NotSquare {
                    rows: b.rows,
                    cols: b.cols,
                });
            }
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows;
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum (the induced infinity norm).
    pub fn max_row_sum_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Checks `X = X*` entrywise within `tol` (absolute).
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    /// Matrix product, with dimension checking.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x` for a vector `x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: (self.cols, 1),
                found: (x.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `selfᵀ · x` for a vector `x` (plain transpose, no conjugation).
    pub fn transpose_mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: (self.rows, 1),
                found: (x.len(), 1),
            });
        }
        let mut out = vec![ZERO; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == ZERO {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// Copy of block `(i, j)` under `spec`.
    pub fn block(&self, spec: BlockSpec, i: usize, j: usize) -> ComplexMatrix {
        let m = spec.block_size;
        ComplexMatrix::from_fn(m, m, |r, c| self[(i * m + r, j * m + c)])
    }

    pub fn set_block(&mut self, spec: BlockSpec, i: usize, j: usize, blk: &ComplexMatrix) {
        let m = spec.block_size;
        for r in 0..m {
            for c in 0..m {
                self[(i * m + r, j * m + c)] = blk[(r, c)];
            }
        }
    }

    fn check_same_shape(&self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "matrix shapes differ");
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Panics on inner-dimension mismatch; use [`ComplexMatrix::matmul`] for a checked product.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("inner dimensions must agree")
    }
}

/// Standard Kronecker product.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Block Kronecker product of two `spec`-conforming matrices.
///
/// The result is `(N·M)² x (N·M)²` with block-of-blocks `((i,k),(j,l))`
/// equal to `A_ij ⊗ B_kl`.
pub fn block_kron(a: &ComplexMatrix, b: &ComplexMatrix, spec: BlockSpec) -> Result<ComplexMatrix> {
    spec.check(a)?;
    spec.check(b)?;
    let n = spec.num_blocks;
    let m = spec.block_size;
    let m2 = m * m;
    let dim = n * n * m2;
    let mut out = ComplexMatrix::zeros(dim, dim);
    for i in 0..n {
        for k in 0..n {
            for a_r in 0..m {
                for b_r in 0..m {
                    let row = (i * n + k) * m2 + a_r * m + b_r;
                    let orow = &mut out.data[row * dim..(row + 1) * dim];
                    for j in 0..n {
                        for a_c in 0..m {
                            let av = a[(i * m + a_r, j * m + a_c)];
                            if av == ZERO {
                                continue;
                            }
                            for l in 0..n {
                                let base = (j * n + l) * m2 + a_c * m;
                                let brow = &b.data[(k * m + b_r) * b.cols + l * m..];
                                for (d, &bv) in brow[..m].iter().enumerate() {
                                    orow[base + d] = av * bv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn bvec_index(n: usize, m: usize, row: usize, col: usize) -> usize {
    let (k, r) = (row / m, row % m);
    let (l, c) = (col / m, col % m);
    ((l * n + k) * m + c) * m + r
}

/// Block vectorization of a `spec`-conforming matrix into an `(N·M)²` vector.
pub fn bvec(x: &ComplexMatrix, spec: BlockSpec) -> Result<Vec<Complex64>> {
    spec.check(x)?;
    let (n, m) = (spec.num_blocks, spec.block_size);
    let mut out = vec![ZERO; x.data.len()];
    for row in 0..x.rows {
        for col in 0..x.cols {
            out[bvec_index(n, m, row, col)] = x[(row, col)];
        }
    }
    Ok(out)
}

/// Inverse of [`bvec`].
pub fn unbvec(v: &[Complex64], spec: BlockSpec) -> Result<ComplexMatrix> {
    let d = spec.dim();
    if v.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: (d * d, 1),
            found: (v.len(), 1),
        });
    }
    let (n, m) = (spec.num_blocks, spec.block_size);
    Ok(ComplexMatrix::from_fn(d, d, |row, col| v[bvec_index(n, m, row, col)]))
}

/// Lower-triangular `L` with `L L* = X` for Hermitian positive semidefinite `X`.
///
/// Columns with a vanishing pivot are left at zero, so singular covariances
/// (including the zero matrix) are accepted.
pub fn cholesky_psd(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::NotSquare {
            rows: x.rows,
            cols: x.cols,
        });
    }
    let n = x.rows;
    let tol = 1e-12 * x.max_abs();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = x[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -tol {
            return Err(Error::InvalidParameter(alloc::format!(
                "matrix is not positive semidefinite (pivot {d} at {j})"
            )));
        }
        if d <= tol {
            continue;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = x[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(x: &ComplexMatrix) -> Result<f64> {
    Ok(crate::eigen::eigenvalues(x)?
        .into_iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

/// Pivots smaller than this fraction of the largest entry are treated as zero.
const SINGULAR_RTOL: f64 = 1e-10;

impl Lu {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let scale = a.max_abs();
        if n > 0 && scale == 0.0 {
            return Err(Error::Singular);
        }
        let tol = SINGULAR_RTOL * scale;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= tol {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            let (upper, lower) = lu.split_at_mut((k + 1) * n);
            let prow = &upper[k * n + k + 1..k * n + n];
            for i in 0..n - k - 1 {
                let row = &mut lower[i * n..(i + 1) * n];
                let f = row[k] / pivot;
                row[k] = f;
                if f == ZERO {
                    continue;
                }
                for (x, &u) in row[k + 1..].iter_mut().zip(prow) {
                    *x -= f * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solves `A x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (n, 1),
                found: (b.len(), 1),
            });
        }
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Solves `A X = B`.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if b.rows != a.rows {
        return Err(Error::DimensionMismatch {
            expected: (a.rows, b.cols),
            found: b.shape(),
        });
    }
    let lu = Lu::new(a)?;
    let mut out = ComplexMatrix::zeros(b.rows, b.cols);
    for j in 0..b.cols {
        let col: Vec<Complex64> = (0..b.rows).map(|i| b[(i, j)]).collect();
        for (i, v) in lu.solve_vec(&col)?.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}
