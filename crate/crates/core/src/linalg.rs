//! Dense complex linear algebra used throughout the crate.
//!
//! Small `N x N` work (factorizations, inverses) is done on [`CMatrix`]
//! directly. Batched work over thousands of samples goes through real-valued
//! GEMM on the stacked representation: a complex matrix `A` acts on
//! `[Re x; Im x]` as `[[Re A, -Im A], [Im A, Re A]]`.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative loadings tried, in order, by the Cholesky ladder (scaled by `trace / n`).
pub const LOADING_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        CMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add_diagonal(&self, d: f64) -> CMatrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += d;
        }
        m
    }

    /// Largest `|a_ij - conj(a_ji)|` relative to the largest entry.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..=i {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }

    /// Real `2n x 2m` image `[[Re A, -Im A], [Im A, Re A]]`, row-major.
    pub fn realify(&self) -> Vec<f64> {
        let (n, m) = (self.rows, self.cols);
        let w = 2 * m;
        let mut out = vec![0.0; 4 * n * m];
        for r in 0..n {
            for c in 0..m {
                let z = self[(r, c)];
                out[r * w + c] = z.re;
                out[r * w + m + c] = -z.im;
                out[(n + r) * w + c] = z.im;
                out[(n + r) * w + m + c] = z.re;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular factor `L` with `L L^H = C + loading * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub l: CMatrix,
    pub loading: f64,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `ln det(L L^H)`; `-inf` for a singular factor.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.l[(i, i)].re.ln()).sum()
    }

    pub fn is_definite(&self) -> bool {
        (0..self.dim()).all(|i| self.l[(i, i)].re > 0.0)
    }

    /// `L^{-1}`, lower triangular. Requires a definite factor.
    pub fn lower_inverse(&self) -> CMatrix {
        let n = self.dim();
        let l = &self.l;
        let mut inv = CMatrix::zeros(n, n);
        for col in 0..n {
            inv[(col, col)] = Complex64::new(1.0 / l[(col, col)].re, 0.0);
            for i in col + 1..n {
                let mut s = ZERO;
                for k in col..i {
                    s += l[(i, k)] * inv[(k, col)];
                }
                inv[(i, col)] = -s / l[(i, i)].re;
            }
        }
        inv
    }

    /// Solves `(L L^H) X = B` for a matrix right-hand side.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.dim();
        assert_eq!(b.rows(), n);
        let l = &self.l;
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)].re;
            }
        }
        x
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.l.matmul(&self.l.adjoint())
    }
}

fn check_hermitian(c: &CMatrix, name: &str) -> Result<()> {
    if !c.is_square() {
        return Err(Error::InvalidArgument(format!("matrix `{name}` is not square")));
    }
    if !c.is_finite() {
        return Err(Error::Numeric(format!("matrix `{name}` has non-finite entries")));
    }
    let asym = c.hermitian_asymmetry();
    if asym > 1e-10 {
        return Err(Error::InvalidArgument(format!("matrix `{name}` is not Hermitian (relative asymmetry {asym:e})")));
    }
    Ok(())
}

/// One factorization attempt with a fixed loading. Pivots at or below the
/// round-off threshold are zeroed when `semidefinite` is set, rejected otherwise.
fn try_cholesky(c: &CMatrix, loading: f64, semidefinite: bool) -> Option<CMatrix> {
    let n = c.rows();
    let scale = (0..n).map(|i| c[(i, i)].re).fold(0.0, f64::max) + loading;
    let tol = 64.0 * n as f64 * f64::EPSILON * scale;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = c[(j, j)].re + loading;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = Complex64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        } else if semidefinite && d >= -tol {
            let off_tol = (tol * scale).sqrt().max(tol);
            for i in j + 1..n {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                if s.norm() > off_tol {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

fn ladder(c: &CMatrix, name: &str, semidefinite: bool) -> Result<Cholesky> {
    check_hermitian(c, name)?;
    let n = c.rows();
    let unit = c.trace().re.max(0.0) / n.max(1) as f64;
    let mut last = 0.0;
    for rel in LOADING_LADDER {
        let loading = rel * unit;
        last = loading;
        if let Some(l) = try_cholesky(c, loading, semidefinite) {
            return Ok(Cholesky { l, loading });
        }
    }
    Err(Error::NotPositiveSemidefinite { name: name.to_string(), loading: last })
}

/// Cholesky factor of a Hermitian PSD matrix for sampling. Zero pivots are
/// allowed, so singular covariances factor without loading; the smallest
/// loading of [`LOADING_LADDER`] that succeeds is applied.
pub fn cholesky_psd(c: &CMatrix, name: &str) -> Result<Cholesky> {
    ladder(c, name, true)
}

/// As [`cholesky_psd`] but demands a strictly positive diagonal, which
/// density evaluation and linear solves need.
pub fn cholesky_pd(c: &CMatrix, name: &str) -> Result<Cholesky> {
    ladder(c, name, false)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
/// Eigenvectors are the columns of the returned matrix.
pub fn hermitian_eigen(c: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = c.rows();
    check_hermitian(c, "eigen input")?;
    let m = DMatrix::from_fn(n, n, |r, col| {
        if r == col {
            Complex64::new(c[(r, r)].re, 0.0)
        } else if r > col {
            c[(r, col)]
        } else {
            c[(col, r)].conj()
        }
    });
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok((values, vectors))
}

/// Eigen-decomposition of a real symmetric `n x n` row-major matrix.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns of a
/// row-major matrix.
pub fn symmetric_eigen(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = DMatrix::from_fn(n, n, |r, c| 0.5 * (a[r * n + c] + a[c * n + r]));
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    let mut vecs = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            vecs[r * n + c] = eig.eigenvectors[(r, c)];
        }
    }
    Ok((eig.eigenvalues.iter().copied().collect(), vecs))
}

/// `out = alpha * A * B^T + beta * out` with `A: m x k`, `B: n x k`, `out: m x n`,
/// all row-major.
pub fn gemm_nt(alpha: f64, a: &[f64], b: &[f64], beta: f64, out: &mut [f64], m: usize, k: usize, n: usize) {
    let av = ArrayView2::from_shape((m, k), a).expect("A shape");
    let bv = ArrayView2::from_shape((n, k), b).expect("B shape");
    let mut ov = ArrayViewMut2::from_shape((m, n), out).expect("out shape");
    general_mat_mul(alpha, &av, &bv.t(), beta, &mut ov);
}

/// `out = alpha * A * B + beta * out` with `A: m x k`, `B: k x n`.
pub fn gemm_nn(alpha: f64, a: &[f64], b: &[f64], beta: f64, out: &mut [f64], m: usize, k: usize, n: usize) {
    let av = ArrayView2::from_shape((m, k), a).expect("A shape");
    let bv = ArrayView2::from_shape((k, n), b).expect("B shape");
    let mut ov = ArrayViewMut2::from_shape((m, n), out).expect("out shape");
    general_mat_mul(alpha, &av, &bv, beta, &mut ov);
}

/// `out = alpha * A^T * B + beta * out` with `A: k x m`, `B: k x n`.
pub fn gemm_tn(alpha: f64, a: &[f64], b: &[f64], beta: f64, out: &mut [f64], m: usize, k: usize, n: usize) {
    let av = ArrayView2::from_shape((k, m), a).expect("A shape");
    let bv = ArrayView2::from_shape((k, n), b).expect("B shape");
    let mut ov = ArrayViewMut2::from_shape((m, n), out).expect("out shape");
    general_mat_mul(alpha, &av.t(), &bv, beta, &mut ov);
}

/// Rebuilds a Hermitian matrix from the `2n x 2n` Gram matrix `G = X^T X`
/// of stacked rows `[Re d, Im d]`: returns `sum d d^H`.
pub fn complex_gram_from_real(n: usize, g: &[f64]) -> CMatrix {
    let w = 2 * n;
    CMatrix::from_fn(n, n, |a, b| {
        let rr = g[a * w + b];
        let ii = g[(n + a) * w + n + b];
        let ir = g[(n + a) * w + b];
        let ri = g[a * w + n + b];
        Complex64::new(rr + ii, ir - ri)
    })
}
