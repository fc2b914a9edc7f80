//! Dense real matrices and complex matrices stored as a real/imaginary pair.
//!
//! A complex m×m matrix `U + iV` is kept as two real planes. Its real embedding is the
//! 2m×2m matrix `[[U, -V], [V, U]]`; every operation here that touches complex
//! matrices works on the planes directly and only builds the embedding on request.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition estimate above which a matrix is reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in matrix data".into(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(1.0, self, other, 0.0, &mut out);
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// Product `selfᵀ x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, xr) in x.iter().enumerate() {
            axpy(*xr, self.row(r), &mut out);
        }
        out
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    #[cfg(test)]
    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm(alpha: f64, a: &RealMatrix, b: &RealMatrix, beta: f64, c: &mut RealMatrix) {
    assert_eq!(a.cols, b.rows);
    assert_eq!((c.rows, c.cols), (a.rows, b.cols));
    gemm_slices(
        a.rows, a.cols, b.cols, alpha, &a.data, false, &b.data, false, beta, &mut c.data,
    );
}

/// Row-major GEMM on raw slices: `c (m×n) = alpha * op(a) (m×k) * op(b) (k×n) + beta * c`,
/// where `op` optionally transposes a stored operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_slices(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // op(a) stored as m×k row-major (rs=k, cs=1) or as k×m row-major transposed (rs=1, cs=m).
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice lengths are checked above and the strides address exactly the
    // m×k, k×n and m×n element sets of those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Inverse of a dense real square matrix by LU with partial pivoting.
pub fn dense_inverse(a: &RealMatrix) -> Result<RealMatrix> {
    if !a.is_square() {
        return Err(Error::shape("inverse of a non-square matrix"));
    }
    let n = a.rows;
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax == 0.0 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        if p != k {
            for c in 0..n {
                lu.swap(k * n + c, p * n + c);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        let (top, bottom) = lu.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n + k + 1..k * n + n];
        for i in 0..n - k - 1 {
            let row = &mut bottom[i * n..(i + 1) * n];
            let l = row[k] / pivot;
            row[k] = l;
            if l != 0.0 {
                axpy(-l, pivot_row, &mut row[k + 1..]);
            }
        }
    }
    // Solve L U X = P I row-wise.
    let mut x = vec![0.0; n * n];
    for (i, &p) in perm.iter().enumerate() {
        x[i * n + p] = 1.0;
    }
    for k in 0..n {
        let (top, bottom) = x.split_at_mut((k + 1) * n);
        let xk = &top[k * n..];
        for i in k + 1..n {
            let l = lu[i * n + k];
            if l != 0.0 {
                axpy(-l, xk, &mut bottom[(i - k - 1) * n..(i - k) * n]);
            }
        }
    }
    for k in (0..n).rev() {
        let d = lu[k * n + k];
        for v in &mut x[k * n..(k + 1) * n] {
            *v /= d;
        }
        let (top, bottom) = x.split_at_mut(k * n);
        let xk = &bottom[..n];
        for i in 0..k {
            let u = lu[i * n + k];
            if u != 0.0 {
                axpy(-u, xk, &mut top[i * n..(i + 1) * n]);
            }
        }
    }
    let inv = RealMatrix {
        rows: n,
        cols: n,
        data: x,
    };
    let condition = a.norm1() * inv.norm1();
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

/// Newton-Schulz refinement `M + M (I - B M)` on dense matrices.
pub fn newton_schulz_step(m: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if !m.is_square() || !b.is_square() || m.rows != b.rows {
        return Err(Error::shape("Newton-Schulz needs two conformable square matrices"));
    }
    let n = m.rows;
    // r = I - B M
    let mut r = RealMatrix::identity(n);
    gemm(-1.0, b, m, 1.0, &mut r);
    let mut out = m.clone();
    gemm(1.0, m, &r, 1.0, &mut out);
    Ok(out)
}

/// Symmetric eigenvalues, ascending.
pub fn symmetric_eigenvalues(a: &RealMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::shape("eigenvalues of a non-square matrix"));
    }
    let eig = nalgebra::SymmetricEigen::try_new(a.to_nalgebra(), 1e-14, 10_000)
        .ok_or(Error::NoConverge { iterations: 10_000 })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest and largest singular values.
pub fn spectral_bounds(a: &RealMatrix) -> Result<(f64, f64)> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::shape("spectral bounds of an empty matrix"));
    }
    let svd = a
        .to_nalgebra()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or(Error::NoConverge { iterations: 10_000 })?;
    let s = &svd.singular_values;
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(0.0, f64::max);
    Ok((min, max))
}

/// A complex m×m matrix `U + iV`, held as its real and imaginary planes.
///
/// Covariances and their inverses are Hermitian (U symmetric, V antisymmetric), in
/// which case [`BlockHermitian::embed`] is symmetric. The type does not force that;
/// [`BlockHermitian::is_hermitian`] checks it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHermitian {
    pub u: RealMatrix,
    pub v: RealMatrix,
}

impl BlockHermitian {
    pub fn new(u: RealMatrix, v: RealMatrix) -> Result<Self> {
        if !u.is_square() || (u.rows, u.cols) != (v.rows, v.cols) {
            return Err(Error::shape("U and V must be square and the same size"));
        }
        Ok(Self { u, v })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            u: RealMatrix::identity(m),
            v: RealMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.rows
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.u[(r, c)], self.v[(r, c)])
    }

    /// True when U is symmetric and V antisymmetric within `rel_tol` of the largest entry.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.u.max_abs().max(self.v.max_abs()).max(f64::MIN_POSITIVE);
        let m = self.dim();
        (0..m).all(|r| {
            (0..m).all(|c| {
                (self.u[(r, c)] - self.u[(c, r)]).abs() <= rel_tol * scale
                    && (self.v[(r, c)] + self.v[(c, r)]).abs() <= rel_tol * scale
            })
        })
    }

    /// The real 2m×2m matrix `[[U, -V], [V, U]]`.
    pub fn embed(&self) -> RealMatrix {
        let m = self.dim();
        RealMatrix::from_fn(2 * m, 2 * m, |r, c| {
            let (br, bc) = (r / m, c / m);
            let (i, j) = (r % m, c % m);
            match (br, bc) {
                (0, 0) | (1, 1) => self.u[(i, j)],
                (0, 1) => -self.v[(i, j)],
                _ => self.v[(i, j)],
            }
        })
    }

    /// Reads back a matrix with the `[[U, -V], [V, U]]` layout from its left block column.
    pub fn from_embedded(e: &RealMatrix) -> Result<Self> {
        if !e.is_square() || !e.rows.is_multiple_of(2) {
            return Err(Error::shape("embedded matrix must be square with even size"));
        }
        let m = e.rows / 2;
        Ok(Self {
            u: RealMatrix::from_fn(m, m, |r, c| e[(r, c)]),
            v: RealMatrix::from_fn(m, m, |r, c| e[(m + r, c)]),
        })
    }

    /// Complex product `self * other` with four real multiplies.
    pub fn mul(&self, other: &Self) -> Self {
        let m = self.dim();
        assert_eq!(m, other.dim());
        let mut u = RealMatrix::zeros(m, m);
        let mut v = RealMatrix::zeros(m, m);
        gemm(1.0, &self.u, &other.u, 0.0, &mut u);
        gemm(-1.0, &self.v, &other.v, 1.0, &mut u);
        gemm(1.0, &self.u, &other.v, 0.0, &mut v);
        gemm(1.0, &self.v, &other.u, 1.0, &mut v);
        Self { u, v }
    }

    /// `I - self`.
    pub fn identity_minus(&self) -> Self {
        let mut out = Self {
            u: self.u.scaled(-1.0),
            v: self.v.scaled(-1.0),
        };
        for i in 0..self.dim() {
            out.u[(i, i)] += 1.0;
        }
        out
    }

    /// Frobenius norm of the embedding (√2 times the complex Frobenius norm).
    pub fn embedded_frobenius(&self) -> f64 {
        let s = self
            .u
            .as_slice()
            .iter()
            .chain(self.v.as_slice())
            .map(|x| x * x)
            .sum::<f64>();
        (2.0 * s).sqrt()
    }

    /// Complex 1-norm (max column sum of moduli).
    pub fn norm1(&self) -> f64 {
        let m = self.dim();
        let mut sums = vec![0.0; m];
        for r in 0..m {
            for (c, s) in sums.iter_mut().enumerate() {
                *s += self.get(r, c).norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Complex matrix-vector product on split planes.
    pub fn apply(&self, re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.dim();
        let mut out_re = vec![0.0; m];
        let mut out_im = vec![0.0; m];
        for r in 0..m {
            let (ur, vr) = (self.u.row(r), self.v.row(r));
            out_re[r] = dot(ur, re) - dot(vr, im);
            out_im[r] = dot(ur, im) + dot(vr, re);
        }
        (out_re, out_im)
    }

    /// Embedded residual `‖I - self · other‖_F`.
    pub fn residual(&self, other: &Self) -> f64 {
        self.mul(other).identity_minus().embedded_frobenius()
    }
}

/// Exact inverse of `U + iV` via complex LU; the embedding of the result is the inverse
/// of the embedding of `h`.
pub fn exact_inverse_block(h: &BlockHermitian) -> Result<BlockHermitian> {
    ComplexLu::factor(h)?.inverse(h.norm1())
}

/// One Newton-Schulz step `M + M (I - B M)` with both operands in block form.
pub fn newton_schulz_step_block(m: &BlockHermitian, b: &BlockHermitian) -> BlockHermitian {
    ns_step_with_residual(m, b).0
}

/// Newton-Schulz step that also returns the pre-step residual `I - B M`.
pub(crate) fn ns_step_with_residual(
    m: &BlockHermitian,
    b: &BlockHermitian,
) -> (BlockHermitian, BlockHermitian) {
    let r = b.mul(m).identity_minus();
    let mut out = m.clone();
    let n = m.dim();
    // out += M R, four real products accumulated in place.
    gemm(1.0, &m.u, &r.u, 1.0, &mut out.u);
    gemm(-1.0, &m.v, &r.v, 1.0, &mut out.u);
    gemm(1.0, &m.u, &r.v, 1.0, &mut out.v);
    gemm(1.0, &m.v, &r.u, 1.0, &mut out.v);
    debug_assert_eq!(out.dim(), n);
    (out, r)
}

/// LU factorization with partial pivoting of a complex square matrix.
#[derive(Debug, Clone)]
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    swaps: usize,
}

impl ComplexLu {
    pub fn factor(h: &BlockHermitian) -> Result<Self> {
        let n = h.dim();
        let mut lu: Vec<Complex64> = h
            .u
            .as_slice()
            .iter()
            .zip(h.v.as_slice())
            .map(|(re, im)| Complex64::new(*re, *im))
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].norm_sqr()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot_inv = lu[k * n + k].inv();
            let (top, bottom) = lu.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n + k + 1..k * n + n];
            for i in 0..n - k - 1 {
                let row = &mut bottom[i * n..(i + 1) * n];
                let l = row[k] * pivot_inv;
                row[k] = l;
                caxpy(-l, pivot_row, &mut row[k + 1..]);
            }
        }
        Ok(Self {
            n,
            lu,
            perm,
            swaps,
        })
    }

    /// `log |det|` of the complex matrix. The embedding has twice this log-determinant.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i].norm().ln()).sum()
    }

    /// The determinant (for small matrices and tests; overflows for large ones).
    pub fn det(&self) -> Complex64 {
        let sign = if self.swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        (0..self.n)
            .map(|i| self.lu[i * self.n + i])
            .fold(Complex64::new(sign, 0.0), |acc, d| acc * d)
    }

    /// Solves `(U + iV) x = b` for one right-hand side.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&x[..i]).map(|(l, xv)| l * xv).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&x[i + 1..]).map(|(u, xv)| u * xv).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }

    /// Full inverse. `norm1` is the 1-norm of the factored matrix, used for the
    /// condition estimate.
    pub fn inverse(&self, norm1: f64) -> Result<BlockHermitian> {
        let n = self.n;
        let zero = Complex64::new(0.0, 0.0);
        let mut x = vec![zero; n * n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[i * n + p] = Complex64::new(1.0, 0.0);
        }
        for k in 0..n {
            let (top, bottom) = x.split_at_mut((k + 1) * n);
            let xk = &top[k * n..];
            for i in k + 1..n {
                let l = self.lu[i * n + k];
                if l != zero {
                    caxpy(-l, xk, &mut bottom[(i - k - 1) * n..(i - k) * n]);
                }
            }
        }
        for k in (0..n).rev() {
            let d = self.lu[k * n + k].inv();
            for v in &mut x[k * n..(k + 1) * n] {
                *v *= d;
            }
            let (top, bottom) = x.split_at_mut(k * n);
            let xk = &bottom[..n];
            for i in 0..k {
                let u = self.lu[i * n + k];
                if u != zero {
                    caxpy(-u, xk, &mut top[i * n..(i + 1) * n]);
                }
            }
        }
        let inv = BlockHermitian {
            u: RealMatrix {
                rows: n,
                cols: n,
                data: x.iter().map(|z| z.re).collect(),
            },
            v: RealMatrix {
                rows: n,
                cols: n,
                data: x.iter().map(|z| z.im).collect(),
            },
        };
        let condition = norm1 * inv.norm1();
        if !condition.is_finite() || condition > SINGULAR_CONDITION {
            return Err(Error::Singular { condition });
        }
        Ok(inv)
    }
}

fn caxpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cholesky factor of a symmetric positive definite real matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &RealMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape("Cholesky of a non-square matrix"));
        }
        let n = a.rows;
        let mut l = vec![0.0; n * n];
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..=i {
                let s = a[(i, j)] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if s <= scale * 1e-14 || !s.is_finite() {
                        return Err(Error::Singular {
                            condition: if s > 0.0 { scale / s } else { f64::INFINITY },
                        });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            x[i] = (x[i] - dot(&self.l[i * n..i * n + i], &x[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> RealMatrix {
        let n = self.n;
        let mut inv = RealMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv.symmetrized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, RngSpec};

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = RngSpec::new(seed, 0).rng();
        RealMatrix::new(rows, cols, normal_vec(&mut rng, rows * cols)).unwrap()
    }

    fn random_hermitian(m: usize, seed: u64, shift: f64) -> BlockHermitian {
        let a = random(m, m, seed);
        let b = random(m, m, seed + 1);
        let mut u = a.add(&a.transpose()).scaled(0.5);
        for i in 0..m {
            u[(i, i)] += shift;
        }
        let v = b.sub(&b.transpose()).scaled(0.5);
        BlockHermitian::new(u, v).unwrap()
    }

    fn scalar(u: f64, v: f64) -> BlockHermitian {
        BlockHermitian::new(
            RealMatrix::new(1, 1, vec![u]).unwrap(),
            RealMatrix::new(1, 1, vec![v]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn embed_scalar_cases() {
        assert_eq!(scalar(1.0, 0.0).embed().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(scalar(1.0, 2.0).embed().as_slice(), &[1.0, -2.0, 2.0, 1.0]);
    }

    #[test]
    fn embed_matches_elementwise_construction() {
        let h = random_hermitian(3, 5, 0.0);
        let e = h.embed();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(e[(i, j)], h.u[(i, j)]);
                assert_eq!(e[(i, j + 3)], -h.v[(i, j)]);
                assert_eq!(e[(i + 3, j)], h.v[(i, j)]);
                assert_eq!(e[(i + 3, j + 3)], h.u[(i, j)]);
            }
        }
        assert!(h.is_hermitian(1e-10));
        assert_eq!(BlockHermitian::from_embedded(&e).unwrap(), h);
    }

    #[test]
    fn inverse_scalar_cases() {
        let inv = exact_inverse_block(&scalar(1.0, 0.0)).unwrap();
        assert_eq!((inv.u[(0, 0)], inv.v[(0, 0)]), (1.0, 0.0));
        let inv = exact_inverse_block(&scalar(1.0, 2.0)).unwrap();
        assert!((inv.u[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((inv.v[(0, 0)] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn inverse_residual_random() {
        let h = random_hermitian(8, 11, 6.0);
        let inv = exact_inverse_block(&h).unwrap();
        assert!(h.residual(&inv) < 1e-10);
        assert!(inv.residual(&h) < 1e-10);
    }

    #[test]
    fn singular_is_reported() {
        let h = BlockHermitian::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(exact_inverse_block(&h), Err(Error::Singular { .. })));
        let mut u = RealMatrix::identity(2);
        u[(1, 1)] = 1e-16;
        let h = BlockHermitian::new(u, RealMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(exact_inverse_block(&h), Err(Error::Singular { .. })));
    }

    #[test]
    fn dense_inverse_matches_nalgebra() {
        let a = random(7, 7, 3);
        let inv = dense_inverse(&a).unwrap();
        let oracle = a.to_nalgebra().try_inverse().unwrap();
        let diff = inv.sub(&RealMatrix::from_nalgebra(&oracle));
        assert!(diff.max_abs() < 1e-10 * oracle.amax().max(1.0));
    }

    #[test]
    fn newton_schulz_scalar_and_fixed_point() {
        let b = RealMatrix::new(1, 1, vec![2.0]).unwrap();
        let m = RealMatrix::new(1, 1, vec![0.4]).unwrap();
        let next = newton_schulz_step(&m, &b).unwrap();
        assert!((next[(0, 0)] - 0.48).abs() < 1e-15);

        let h = random_hermitian(5, 17, 5.0);
        let inv = exact_inverse_block(&h).unwrap();
        let again = newton_schulz_step_block(&inv, &h);
        assert!(again.u.sub(&inv.u).max_abs() < 1e-12);
        assert!(again.v.sub(&inv.v).max_abs() < 1e-12);
    }

    #[test]
    fn block_step_matches_dense_step() {
        let h = random_hermitian(6, 23, 4.0);
        let mut m = exact_inverse_block(&h).unwrap();
        m.u[(0, 1)] += 0.01;
        m.v[(2, 3)] -= 0.01;
        let block = newton_schulz_step_block(&m, &h).embed();
        let dense = newton_schulz_step(&m.embed(), &h.embed()).unwrap();
        assert!(block.sub(&dense).max_abs() < 1e-12);
    }

    #[test]
    fn spectral_bounds_simple() {
        let (lo, hi) = spectral_bounds(&RealMatrix::identity(4)).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let (lo, hi) = spectral_bounds(&RealMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_log_det_and_solve() {
        let a = random(6, 6, 9);
        let mut spd = a.matmul(&a.transpose()).unwrap();
        for i in 0..6 {
            spd[(i, i)] += 1.0;
        }
        let ch = Cholesky::factor(&spd).unwrap();
        let det = spd.to_nalgebra().determinant();
        assert!((ch.log_det() - det.ln()).abs() < 1e-10);
        let x = ch.solve(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = spd.matvec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]) {
            assert!((b - e).abs() < 1e-10);
        }
    }

    #[test]
    fn complex_log_det_matches_embedding() {
        let h = random_hermitian(4, 31, 3.0);
        let lu = ComplexLu::factor(&h).unwrap();
        let dense = h.embed().to_nalgebra().determinant();
        assert!((2.0 * lu.log_abs_det() - dense.abs().ln()).abs() < 1e-10);
        assert!((lu.det().norm_sqr() - dense).abs() < 1e-8 * dense.abs());
    }
}
