//! Small dense real-matrix algebra and Gaussian-conditioning primitives.
//!
//! Everything in this crate works on covariance-sized matrices (dimension
//! at most 8), so the kernels are plain row-major loops: Cholesky for
//! factorization, log-determinants and inverses, a Schur-complement
//! conditional covariance, and a private Jacobi sweep for the symmetric
//! eigenvalue checks and clamps.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance for the symmetry check on [`SymPSD`] construction.
const SYM_TOL: f64 = 1e-12;
/// A matrix is accepted as PSD when every eigenvalue is at least
/// `-PSD_EIG_TOL * |trace|`.
const PSD_EIG_TOL: f64 = 1e-10;
/// Cholesky pivots must exceed `PIVOT_TOL * trace` for a matrix to count
/// as strictly positive definite.
const PIVOT_TOL: f64 = 1e-14;

/// Dense real matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Validation("matrix must be non-empty".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Validation("ragged matrix rows".into()));
            }
            data.extend_from_slice(r);
        }
        let m = Mat {
            rows: rows.len(),
            cols,
            data,
        };
        if !m.is_finite() {
            return Err(Error::Validation("matrix entries must be finite".into()));
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, rhs: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.to_rows()
    }
}

/// Symmetric positive-semidefinite matrix. Construction validates symmetry
/// (relative tolerance 1e-12) and that no eigenvalue falls below
/// `-1e-10 * |trace|`; the stored entries are exactly symmetrized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymPSD {
    mat: Mat,
}

impl SymPSD {
    pub fn new(m: Mat) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Validation(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::Validation("matrix entries must be finite".into()));
        }
        let scale = m.max_abs().max(1.0);
        for i in 0..m.rows() {
            for j in (i + 1)..m.cols() {
                if (m.get(i, j) - m.get(j, i)).abs() > SYM_TOL * scale {
                    return Err(Error::Validation(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = symmetrize(&m);
        let (eigs, _) = sym_eigen(&sym);
        let floor = -PSD_EIG_TOL * sym.trace().abs().max(1e-300);
        if eigs.iter().any(|&l| l < floor) {
            return Err(Error::Validation(format!(
                "matrix not positive semidefinite (min eigenvalue {:e})",
                eigs.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(SymPSD { mat: sym })
    }

    pub fn identity(n: usize) -> Self {
        SymPSD {
            mat: Mat::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymPSD {
            mat: Mat::zeros(n, n),
        }
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        if entries.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Validation("diagonal entries must be >= 0".into()));
        }
        Ok(SymPSD {
            mat: Mat::diag(entries),
        })
    }

    /// Scaled copy; `s` must be nonnegative to preserve PSD-ness.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if s < 0.0 || !s.is_finite() {
            return Err(Error::Validation("scale factor must be >= 0".into()));
        }
        Ok(SymPSD {
            mat: self.mat.scale(s),
        })
    }

    /// Internal constructor for matrices that are symmetric PSD by
    /// construction (sums and congruences of PSD matrices). Symmetrizes
    /// to wash out floating-point asymmetry but skips the eigenvalue check.
    pub(crate) fn from_symmetric_unchecked(m: Mat) -> Self {
        SymPSD {
            mat: symmetrize(&m),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn add(&self, rhs: &SymPSD) -> SymPSD {
        SymPSD {
            mat: self.mat.add(&rhs.mat),
        }
    }

    /// `self + c * I`.
    pub fn add_scaled_identity(&self, c: f64) -> SymPSD {
        let mut m = self.mat.clone();
        for i in 0..m.rows() {
            let v = m.get(i, i) + c;
            m.set(i, i, v);
        }
        SymPSD { mat: m }
    }

    /// Congruence transform `a * self * a^T`, PSD for any `a`.
    pub fn congruence(&self, a: &Mat) -> SymPSD {
        let m = a.matmul(&self.mat).matmul(&a.transpose());
        SymPSD::from_symmetric_unchecked(m)
    }

    /// Smallest eigenvalue (Jacobi).
    pub fn min_eigenvalue(&self) -> f64 {
        let (eigs, _) = sym_eigen(&self.mat);
        eigs.into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigen(&self.mat).0
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymPSD {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymPSD::new(Mat::from_rows(&rows)?)
    }
}

impl From<SymPSD> for Vec<Vec<f64>> {
    fn from(m: SymPSD) -> Self {
        m.mat.to_rows()
    }
}

fn symmetrize(m: &Mat) -> Mat {
    Mat::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
}

/// Lower-triangular Cholesky factor `L` with `L * L^T = a`.
///
/// Fails with [`Error::NotPositiveDefinite`] when any pivot drops to
/// `1e-14 * trace` or below, which is this crate's working definition of
/// "not strictly positive definite".
pub fn cholesky(a: &SymPSD) -> Result<Mat> {
    let n = a.dim();
    let tol = PIVOT_TOL * a.trace().abs().max(1e-300);
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= tol {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {s:e} at index {i} (tolerance {tol:e})"
                    )));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Natural-log determinant of a strictly positive definite matrix,
/// `2 * sum(ln diag(chol))`.
pub fn logdet(a: &SymPSD) -> Result<f64> {
    let l = cholesky(a)?;
    Ok((0..a.dim()).map(|i| 2.0 * l.get(i, i).ln()).sum())
}

/// Inverse of a strictly positive definite matrix via its Cholesky factor.
pub fn inverse(a: &SymPSD) -> Result<SymPSD> {
    let inv = solve_spd(a, &Mat::identity(a.dim()))?;
    Ok(SymPSD::from_symmetric_unchecked(inv))
}

/// Solve `a * X = b` for strictly positive definite `a`.
pub fn solve_spd(a: &SymPSD, b: &Mat) -> Result<Mat> {
    assert_eq!(a.dim(), b.rows(), "dimension mismatch in solve");
    let l = cholesky(a)?;
    let n = a.dim();
    let mut x = b.clone();
    // forward: L y = b
    for col in 0..x.cols() {
        for i in 0..n {
            let mut s = x.get(i, col);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, col);
            for k in (i + 1)..n {
                s -= l.get(k, i) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Conditional covariance `sigma_aa - sigma_ab * sigma_bb^-1 * sigma_ab^T`
/// of jointly Gaussian vectors, clamped to the PSD cone by flooring
/// eigenvalues at zero.
pub fn schur_cond_cov(sigma_aa: &SymPSD, sigma_ab: &Mat, sigma_bb: &SymPSD) -> Result<SymPSD> {
    assert_eq!(sigma_ab.rows(), sigma_aa.dim(), "sigma_ab row count");
    assert_eq!(sigma_ab.cols(), sigma_bb.dim(), "sigma_ab column count");
    let solved = solve_spd(sigma_bb, &sigma_ab.transpose())?; // sigma_bb^-1 * sigma_ab^T
    let cond = sigma_aa.mat().sub(&sigma_ab.matmul(&solved));
    Ok(clamp_psd(&symmetrize(&cond)))
}

/// Floor the eigenvalues of a symmetric matrix at zero.
pub(crate) fn clamp_psd(m: &Mat) -> SymPSD {
    let (eigs, vecs) = sym_eigen(m);
    if eigs.iter().all(|&l| l >= 0.0) {
        return SymPSD { mat: m.clone() };
    }
    let mut out = Mat::zeros(m.rows(), m.cols());
    for (k, &l) in eigs.iter().enumerate() {
        let lv = l.max(0.0);
        if lv == 0.0 {
            continue;
        }
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = out.get(i, j) + lv * vecs.get(i, k) * vecs.get(j, k);
                out.set(i, j, v);
            }
        }
    }
    SymPSD {
        mat: symmetrize(&out),
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and a matrix whose columns are the eigenvectors.
/// Internal helper for PSD validation and clamping; dimensions here never
/// exceed 8 so the quadratic sweep cost is irrelevant.
pub(crate) fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.rows();
    let mut a = symmetrize(m);
    let mut v = Mat::identity(n);
    if n == 1 {
        return (vec![a.get(0, 0)], v);
    }
    let scale = a.max_abs().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}
