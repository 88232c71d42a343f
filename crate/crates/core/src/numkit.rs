//! Complex linear-algebra kernel.
//!
//! Thin newtypes over `nalgebra` dense storage carry every channel matrix,
//! precoder and receive filter in the simulator. Only the handful of
//! operations the interference-management schemes need are exposed: thin SVD,
//! Moore-Penrose pseudo-inverse, Hermitian projectors, inner products and
//! norms.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative cutoff below which singular values are dropped by [`pinv`].
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

const SVD_MAX_ITERATIONS: usize = 10_000;

/// Complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec(DVector<C64>);

/// Dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat(DMatrix<C64>);

impl CVec {
    pub fn from_vec(entries: Vec<C64>) -> Self {
        CVec(DVector::from_vec(entries))
    }

    pub fn from_real(entries: &[f64]) -> Self {
        CVec(DVector::from_iterator(
            entries.len(),
            entries.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn zeros(len: usize) -> Self {
        CVec(DVector::zeros(len))
    }

    /// The `k`-th standard basis vector of dimension `len`.
    pub fn basis(len: usize, k: usize) -> Self {
        let mut v = DVector::zeros(len);
        v[k] = C64::new(1.0, 0.0);
        CVec(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> C64 {
        self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &C64> {
        self.0.iter()
    }

    pub fn to_vec(&self) -> Vec<C64> {
        self.0.iter().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, s: C64) -> CVec {
        CVec(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> CVec {
        CVec(self.0.map(|z| z * s))
    }

    /// Unit vector in the direction of `self`.
    pub fn normalized(&self) -> Result<CVec> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::domain("cannot normalize a zero or non-finite vector"));
        }
        Ok(self.scale_real(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for &CVec {
    type Output = CVec;
    fn add(self, rhs: &CVec) -> CVec {
        CVec(&self.0 + &rhs.0)
    }
}

impl Sub for &CVec {
    type Output = CVec;
    fn sub(self, rhs: &CVec) -> CVec {
        CVec(&self.0 - &rhs.0)
    }
}

impl Neg for &CVec {
    type Output = CVec;
    fn neg(self) -> CVec {
        CVec(-&self.0)
    }
}

impl CMat {
    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != entries.len() {
            return Err(Error::domain(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(CMat(DMatrix::from_row_slice(rows, cols, entries)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        CMat(DMatrix::from_fn(rows, cols, f))
    }

    /// Real diagonal matrix with `diag` on the main diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_columns(columns: &[CVec]) -> Result<Self> {
        let rows = columns.first().map(CVec::len).unwrap_or(0);
        if rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::domain("columns must be nonempty and of equal length"));
        }
        let cols: Vec<_> = columns.iter().map(|c| c.0.clone()).collect();
        Ok(CMat(DMatrix::from_columns(&cols)))
    }

    pub fn identity(n: usize) -> Self {
        CMat(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat(DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec(self.0.column(j).into_owned())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat(self.0.adjoint())
    }

    pub fn mul_vec(&self, x: &CVec) -> Result<CVec> {
        if self.cols() != x.len() {
            return Err(Error::domain(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows(),
                self.cols(),
                x.len()
            )));
        }
        Ok(CVec(&self.0 * &x.0))
    }

    pub fn matmul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols() != rhs.rows() {
            return Err(Error::domain(format!(
                "shape mismatch {}x{} * {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(CMat(&self.0 * &rhs.0))
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        CMat(self.0.map(|z| z * s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        CMat(&self.0 + &rhs.0)
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        CMat(&self.0 - &rhs.0)
    }
}

impl Mul for &CMat {
    type Output = CMat;
    /// Panics on shape mismatch; use [`CMat::matmul`] for a checked product.
    fn mul(self, rhs: &CMat) -> CMat {
        CMat(&self.0 * &rhs.0)
    }
}

/// Thin singular value decomposition `A = U diag(sigma) Vᴴ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `rows x k`.
    pub u: CMat,
    /// Singular values, descending, `k = min(rows, cols)` of them.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `cols x k`.
    pub v: CMat,
}

impl SvdResult {
    pub fn u_col(&self, k: usize) -> CVec {
        self.u.column(k)
    }

    pub fn v_col(&self, k: usize) -> CVec {
        self.v.column(k)
    }

    /// Multiplies the factors back together.
    pub fn reconstruct(&self) -> CMat {
        let s = CMat::from_diagonal(&self.sigma);
        &(&self.u * &s) * &self.v.adjoint()
    }
}

pub fn svd(a: &CMat) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::domain("svd input contains non-finite entries"));
    }
    let k = a.rows().min(a.cols());
    let dec = SVD::try_new(a.0.clone(), true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "svd of {}x{} matrix did not converge in {SVD_MAX_ITERATIONS} iterations",
                a.rows(),
                a.cols()
            ))
        })?;
    let (Some(u), Some(v_t)) = (dec.u, dec.v_t) else {
        return Err(Error::Numerical("svd factors were not computed".into()));
    };
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let sigma: Vec<f64> = order.iter().map(|&i| s[i].max(0.0)).collect();
    let u_cols: Vec<_> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    let v_cols: Vec<_> = order
        .iter()
        .map(|&i| v_t.row(i).adjoint().into_owned())
        .collect();
    let out = SvdResult {
        u: CMat(DMatrix::from_columns(&u_cols)),
        sigma,
        v: CMat(DMatrix::from_columns(&v_cols)),
    };
    if !out.u.is_finite() || !out.v.is_finite() || out.sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("svd produced non-finite factors".into()));
    }
    Ok(out)
}

/// Moore-Penrose pseudo-inverse; singular values below
/// [`PINV_RELATIVE_CUTOFF`] times the largest are treated as zero.
pub fn pinv(a: &CMat) -> Result<CMat> {
    let dec = svd(a)?;
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let (m, n) = (a.rows(), a.cols());
    let mut out = DMatrix::<C64>::zeros(n, m);
    if smax == 0.0 {
        return Ok(CMat(out));
    }
    let cutoff = PINV_RELATIVE_CUTOFF * smax;
    for (k, &s) in dec.sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let v = dec.v.0.column(k);
        let u = dec.u.0.column(k);
        out += (v * u.adjoint()) * C64::new(1.0 / s, 0.0);
    }
    Ok(CMat(out))
}

/// Hermitian rank-1 projector `d dᴴ / (dᴴ d)` onto the span of `d`.
pub fn projector(d: &CVec) -> Result<CMat> {
    let n2 = d.norm_sqr();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::domain("projector direction must be a nonzero finite vector"));
    }
    Ok(CMat(&d.0 * d.0.adjoint() * C64::new(1.0 / n2, 0.0)))
}

/// Orthogonal projector onto the span of `vectors`.
///
/// Vectors that are zero or lie (to `1e-12` relative) in the span of the
/// earlier ones are skipped, so the result has the rank of the span.
pub fn span_projector(dim: usize, vectors: &[CVec]) -> Result<CMat> {
    let mut basis: Vec<DVector<C64>> = Vec::new();
    for v in vectors {
        if v.len() != dim {
            return Err(Error::domain("span vectors must match the ambient dimension"));
        }
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.0.clone();
        // Two Gram-Schmidt passes keep the basis orthonormal to rounding.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w -= q * c;
            }
        }
        let r = w.norm();
        if r > 1e-12 * scale {
            basis.push(w / C64::new(r, 0.0));
        }
    }
    let mut p = DMatrix::<C64>::zeros(dim, dim);
    for q in &basis {
        p += q * q.adjoint();
    }
    Ok(CMat(p))
}

/// Inner product `⟨a, b⟩ = aᴴ b`, conjugate-linear in `a`.
pub fn inner(a: &CVec, b: &CVec) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "inner product of vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.0.dotc(&b.0))
}

pub fn norm(a: &CVec) -> f64 {
    a.norm()
}
