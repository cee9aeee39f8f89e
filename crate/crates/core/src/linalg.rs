//! Dense kernels for the tiny symmetric matrices that live in every grid cell.
//!
//! Matrices are at most [`MAX_DIM`]×[`MAX_DIM`] and stored inline, so every
//! value here is `Copy` and nothing allocates. Spectral decompositions are
//! delegated to `nalgebra`'s fixed-size symmetric eigensolver.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{KbError, Result};

/// Largest supported matrix size.
pub const MAX_DIM: usize = 4;

/// Largest number of independent entries of a symmetric matrix.
pub const MAX_SYM: usize = MAX_DIM * (MAX_DIM + 1) / 2;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Number of independent entries of an `n`×`n` symmetric matrix.
pub const fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Small dense square matrix, row-major, stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl std::fmt::Debug for Mat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)]).collect())
            .collect();
        write!(f, "Mat{rows:?}")
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&n),
            "matrix size {n} outside 1..={MAX_DIM}"
        );
        Mat {
            n,
            a: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from row slices; every row must have the same length as the number of rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(KbError::Input(format!(
                "matrix size {n} outside 1..={MAX_DIM}"
            )));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(KbError::Input("matrix rows must be square".into()));
        }
        Ok(Mat::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        debug_assert_eq!(u.len(), v.len());
        Mat::from_fn(u.len(), |i, j| u[i] * v[j])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    /// `(A + Aᵀ)/2`.
    pub fn sym_part(&self) -> Self {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `A : B`.
    pub fn frob_dot(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self[(i, j)] * other[(i, j)];
            }
        }
        s
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                m = m.max(self[(i, j)].abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).all(|j| self[(i, j)].is_finite()))
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = (0..n).map(|j| self[(i, j)] * v[j]).sum();
        }
    }

    /// `self · diag(d) · selfᵀ`, the reconstruction from an eigenframe.
    pub fn conjugate_diag(&self, d: &[f64]) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self[(i, k)] * d[k] * self[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `Q · self · Qᵀ`.
    pub fn congruence(&self, q: &Mat) -> Mat {
        *q * *self * q.transpose()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * MAX_DIM + j]
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(mut self, rhs: Mat) -> Mat {
        self += rhs;
        self
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for (x, y) in self.a.iter_mut().zip(rhs.a.iter()) {
            *x += *y;
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(mut self, rhs: Mat) -> Mat {
        self -= rhs;
        self
    }
}

impl SubAssign for Mat {
    fn sub_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for (x, y) in self.a.iter_mut().zip(rhs.a.iter()) {
            *x -= *y;
        }
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(mut self) -> Mat {
        for x in self.a.iter_mut() {
            *x = -*x;
        }
        self
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    fn mul(mut self, rhs: f64) -> Mat {
        for x in self.a.iter_mut() {
            *x *= rhs;
        }
        self
    }
}

impl Mul<Mat> for f64 {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        rhs * self
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// A symmetric matrix. Construction symmetrizes exactly after checking that
/// the input is symmetric up to roundoff.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_finite() {
            return Err(KbError::Input("non-finite matrix entry".into()));
        }
        let n = m.n();
        let scale = 1.0 + m.max_abs();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(KbError::Input(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(SymMatrix(m.sym_part()))
    }

    /// Symmetrize without checking.
    pub fn from_mat_sym(m: &Mat) -> Self {
        SymMatrix(m.sym_part())
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Mat::identity(n))
    }

    pub fn diag(values: &[f64]) -> Self {
        SymMatrix(Mat::diag(values))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        SymMatrix::new(Mat::from_rows(rows)?)
    }

    /// Build from the upper triangle, row-major (the measure-file layout).
    pub fn from_upper(n: usize, upper: &[f64]) -> Self {
        debug_assert_eq!(upper.len(), sym_len(n));
        let mut m = Mat::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        SymMatrix(m)
    }

    pub fn write_upper(&self, out: &mut [f64]) {
        let n = self.n();
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                out[k] = self.0[(i, j)];
                k += 1;
            }
        }
    }

    /// Coordinates in the Frobenius-orthonormal basis: diagonal entries as is,
    /// off-diagonal pairs scaled by √2, upper triangle row-major.
    pub fn write_coords(&self, out: &mut [f64]) {
        let n = self.n();
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                out[k] = if i == j {
                    self.0[(i, i)]
                } else {
                    std::f64::consts::SQRT_2 * self.0[(i, j)]
                };
                k += 1;
            }
        }
    }

    pub fn from_coords(n: usize, c: &[f64]) -> Self {
        let mut m = Mat::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    m[(i, i)] = c[k];
                } else {
                    let v = c[k] * std::f64::consts::FRAC_1_SQRT_2;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
                k += 1;
            }
        }
        SymMatrix(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n()
    }

    #[inline]
    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frob_norm(&self) -> f64 {
        self.0.frob_norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(self.0 * s)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(self.0 + other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(self.0 - other.0)
    }

    /// `Q A Qᵀ`, symmetric again.
    pub fn congruence(&self, q: &Mat) -> Self {
        SymMatrix::from_mat_sym(&self.0.congruence(q))
    }

    pub fn eigen(&self) -> SymEigen {
        sym_eigen_unchecked(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let e = self.eigen();
        e.values[self.n() - 1]
    }

    /// Eigenvalue-clamped projection onto the PSD cone.
    pub fn psd_projection(&self) -> PsdMatrix {
        let e = self.eigen();
        let clamped: Vec<f64> = e.values().iter().map(|v| v.max(0.0)).collect();
        PsdMatrix(SymMatrix(e.vectors.conjugate_diag(&clamped)))
    }
}

/// A symmetric positive-semidefinite matrix.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct PsdMatrix(SymMatrix);

impl PsdMatrix {
    /// Accepts eigenvalues down to `-1e-10 · max(1, λ_max)`.
    pub fn new(s: SymMatrix) -> Result<Self> {
        let e = s.eigen();
        let lmax = e.values[0];
        let lmin = e.values[s.n() - 1];
        if lmin < -PSD_TOL * lmax.max(1.0) {
            return Err(KbError::singular(
                format!("matrix is not positive semidefinite (λ_min = {lmin:e})"),
                lmin,
            ));
        }
        Ok(PsdMatrix(s))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        PsdMatrix::new(SymMatrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        PsdMatrix(SymMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        PsdMatrix(SymMatrix::zeros(n))
    }

    /// Caller guarantees the PSD invariant.
    pub(crate) fn assume(s: SymMatrix) -> Self {
        PsdMatrix(s)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        PsdMatrix::new(SymMatrix::diag(values))
    }

    #[inline]
    pub fn sym(&self) -> &SymMatrix {
        &self.0
    }

    #[inline]
    pub fn mat(&self) -> &Mat {
        self.0.mat()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> PsdMatrix {
        debug_assert!(s >= 0.0);
        PsdMatrix(self.0.scale(s))
    }
}

impl From<PsdMatrix> for SymMatrix {
    fn from(p: PsdMatrix) -> SymMatrix {
        p.0
    }
}

/// Spectral decomposition `A = V diag(λ) Vᵀ` with eigenvalues in descending order.
#[derive(Clone, Copy, Debug)]
pub struct SymEigen {
    n: usize,
    values: [f64; MAX_DIM],
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: Mat,
}

impl SymEigen {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.n]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped: Vec<f64> = self.values().iter().map(|&v| f(v)).collect();
        SymMatrix(self.vectors.conjugate_diag(&mapped))
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|v| v)
    }
}

macro_rules! fixed_eigen {
    ($a:expr, $n:literal) => {{
        let m = nalgebra::SMatrix::<f64, $n, $n>::from_fn(|i, j| $a[(i, j)]);
        let e = m.symmetric_eigen();
        let mut vals = [0.0; MAX_DIM];
        let mut vecs = Mat::zeros($n);
        for c in 0..$n {
            vals[c] = e.eigenvalues[c];
            for r in 0..$n {
                vecs[(r, c)] = e.eigenvectors[(r, c)];
            }
        }
        (vals, vecs)
    }};
}

fn sym_eigen_unchecked(a: &SymMatrix) -> SymEigen {
    let m = a.mat();
    let n = m.n();
    let (vals, vecs) = match n {
        1 => {
            let mut vals = [0.0; MAX_DIM];
            vals[0] = m[(0, 0)];
            (vals, Mat::identity(1))
        }
        2 => fixed_eigen!(m, 2),
        3 => fixed_eigen!(m, 3),
        4 => fixed_eigen!(m, 4),
        _ => unreachable!("Mat enforces 1..=MAX_DIM"),
    };
    let mut order: [usize; MAX_DIM] = [0, 1, 2, 3];
    order[..n].sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    let mut values = [0.0; MAX_DIM];
    let mut vectors = Mat::zeros(n);
    for (dst, &src) in order[..n].iter().enumerate() {
        values[dst] = vals[src];
        for r in 0..n {
            vectors[(r, dst)] = vecs[(r, src)];
        }
    }
    SymEigen { n, values, vectors }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    if !a.mat().is_finite() {
        return Err(KbError::Input("non-finite matrix entry".into()));
    }
    Ok(sym_eigen_unchecked(a))
}

/// Scalar functions applied through the spectral calculus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralFn {
    Sqrt,
    Log,
    Exp,
    Inv,
}

/// `V diag(f(λ)) Vᵀ` for the supported tags.
///
/// `Sqrt` clamps eigenvalues in `[-1e-10·λ_max, 0)` to zero and rejects
/// anything more negative; `Log` and `Inv` need a positive-definite input.
pub fn psd_apply_fn(p: &SymMatrix, f: SpectralFn) -> Result<SymMatrix> {
    let e = sym_eigen(p)?;
    let lmax = e.values[0];
    let lmin = e.values[e.n - 1];
    match f {
        SpectralFn::Sqrt => {
            if lmin < -PSD_TOL * lmax.max(0.0) && lmin < 0.0 {
                return Err(KbError::singular(
                    format!("sqrt of an indefinite matrix (λ_min = {lmin:e})"),
                    lmin,
                ));
            }
            Ok(e.map(|v| v.max(0.0).sqrt()))
        }
        SpectralFn::Log | SpectralFn::Inv => {
            if lmin <= 0.0 {
                return Err(KbError::singular(
                    format!("{f:?} of a singular matrix (λ_min = {lmin:e})"),
                    lmin,
                ));
            }
            Ok(match f {
                SpectralFn::Log => e.map(f64::ln),
                _ => e.map(|v| 1.0 / v),
            })
        }
        SpectralFn::Exp => Ok(e.map(f64::exp)),
    }
}

/// Solves `P U + U P = 2 Ξ` for symmetric `U`, with `P` positive definite.
pub fn lyapunov_solve(p: &SymMatrix, xi: &SymMatrix) -> Result<SymMatrix> {
    if p.n() != xi.n() {
        return Err(KbError::Input("lyapunov: size mismatch".into()));
    }
    let e = sym_eigen(p)?;
    let n = e.n;
    let lmin = e.values[n - 1];
    if lmin <= 0.0 {
        return Err(KbError::singular(
            format!("lyapunov: P is singular (λ_min = {lmin:e})"),
            lmin,
        ));
    }
    let v = e.vectors;
    let mut w = v.transpose() * *xi.mat() * v;
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] *= 2.0 / (e.values[i] + e.values[j]);
        }
    }
    Ok(SymMatrix::from_mat_sym(&(v * w * v.transpose())))
}

/// Solves `X P0 X = P1` for PSD `X`, via
/// `X = P0^{-1/2} (P0^{1/2} P1 P0^{1/2})^{1/2} P0^{-1/2}`.
pub fn riccati_solve(p0: &SymMatrix, p1: &SymMatrix) -> Result<PsdMatrix> {
    if p0.n() != p1.n() {
        return Err(KbError::Input("riccati: size mismatch".into()));
    }
    let e = sym_eigen(p0)?;
    let lmin = e.values[e.n - 1];
    if lmin <= 0.0 {
        return Err(KbError::singular(
            format!("riccati: P0 is singular (λ_min = {lmin:e})"),
            lmin,
        ));
    }
    let half = e.map(f64::sqrt);
    let inv_half = e.map(|v| 1.0 / v.sqrt());
    let inner = p1.congruence(half.mat());
    let root = psd_apply_fn(&inner, SpectralFn::Sqrt)?;
    Ok(PsdMatrix(root.congruence(inv_half.mat())))
}

/// Inverse of a symmetric positive-definite matrix; `None` if it is not
/// positive definite. Closed form (Sylvester criterion) up to size 3.
pub(crate) fn spd_inverse(m: &Mat) -> Option<Mat> {
    match m.n() {
        1 => (m[(0, 0)] > 0.0).then(|| Mat::diag(&[1.0 / m[(0, 0)]])),
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let det = a * d - b * b;
            if a <= 0.0 || det <= 0.0 {
                return None;
            }
            Mat::from_rows(&[&[d / det, -b / det], &[-b / det, a / det]]).ok()
        }
        3 => {
            let x = |i: usize, j: usize| m[(i, j)];
            let c00 = x(1, 1) * x(2, 2) - x(1, 2) * x(2, 1);
            let c01 = x(1, 2) * x(2, 0) - x(1, 0) * x(2, 2);
            let c02 = x(1, 0) * x(2, 1) - x(1, 1) * x(2, 0);
            let det = x(0, 0) * c00 + x(0, 1) * c01 + x(0, 2) * c02;
            let minor = x(0, 0) * x(1, 1) - x(0, 1) * x(1, 0);
            if x(0, 0) <= 0.0 || minor <= 0.0 || det <= 0.0 {
                return None;
            }
            let c11 = x(0, 0) * x(2, 2) - x(0, 2) * x(2, 0);
            let c12 = x(0, 1) * x(2, 0) - x(0, 0) * x(2, 1);
            let c22 = minor;
            let inv =
                Mat::from_rows(&[&[c00, c01, c02], &[c01, c11, c12], &[c02, c12, c22]]).ok()?;
            Some(inv * (1.0 / det))
        }
        _ => {
            let e = sym_eigen(&SymMatrix::from_mat_sym(m)).ok()?;
            if e.values[e.n - 1] <= 0.0 {
                return None;
            }
            Some(*e.map(|v| 1.0 / v).mat())
        }
    }
}

/// Solve the small SPD system `h x = g` in place (`h` is `m`×`m`, row-major).
/// Returns `false` when `h` is not numerically positive definite.
pub(crate) fn solve_spd_small(h: &[f64], g: &mut [f64], m: usize) -> bool {
    macro_rules! chol {
        ($m:literal) => {{
            let hm = nalgebra::SMatrix::<f64, $m, $m>::from_fn(|i, j| h[i * $m + j]);
            match hm.cholesky() {
                Some(c) => {
                    let rhs = nalgebra::SVector::<f64, $m>::from_fn(|i, _| g[i]);
                    let x = c.solve(&rhs);
                    for i in 0..$m {
                        g[i] = x[i];
                    }
                    true
                }
                None => false,
            }
        }};
    }
    match m {
        1 => {
            if h[0] > 0.0 {
                g[0] /= h[0];
                true
            } else {
                false
            }
        }
        2 => chol!(2),
        3 => chol!(3),
        4 => chol!(4),
        5 => chol!(5),
        6 => chol!(6),
        7 => chol!(7),
        8 => chol!(8),
        9 => chol!(9),
        10 => chol!(10),
        _ => unreachable!("system size bounded by MAX_SYM"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (*a - *b).max_abs() <= tol
    }

    #[test]
    fn eigen_of_identity_and_diagonal() {
        let e = sym_eigen(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.values(), &[1.0, 1.0]);
        let e = sym_eigen(&SymMatrix::diag(&[1.0, 3.0])).unwrap();
        assert!((e.values()[0] - 3.0).abs() < 1e-15);
        assert!((e.values()[1] - 1.0).abs() < 1e-15);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_of_two_by_two() {
        let a = SymMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values()[0] - 3.0).abs() < 1e-14);
        assert!((e.values()[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] * e.vectors[(1, 0)] - s * s).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] * e.vectors[(1, 1)] + s * s).abs() < 1e-14);
        assert!(close(e.reconstruct().mat(), a.mat(), 1e-14));
    }

    #[test]
    fn non_finite_is_input_error() {
        let m = Mat::diag(&[f64::NAN, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(KbError::Input(_))));
    }

    #[test]
    fn spectral_functions_on_simple_inputs() {
        let s = psd_apply_fn(&SymMatrix::diag(&[4.0, 9.0]), SpectralFn::Sqrt).unwrap();
        assert!(close(s.mat(), &Mat::diag(&[2.0, 3.0]), 1e-15));
        let l = psd_apply_fn(&SymMatrix::identity(3), SpectralFn::Log).unwrap();
        assert!(l.mat().max_abs() < 1e-15);
        let err = psd_apply_fn(&SymMatrix::diag(&[1.0, 0.0]), SpectralFn::Log).unwrap_err();
        assert!(matches!(
            err,
            KbError::Domain {
                lambda_min: Some(_),
                ..
            }
        ));
        assert!(psd_apply_fn(&SymMatrix::diag(&[1.0, 0.0]), SpectralFn::Inv).is_err());
        // roundoff-negative eigenvalue is clamped
        let s = psd_apply_fn(&SymMatrix::diag(&[1.0, -1e-13]), SpectralFn::Sqrt).unwrap();
        assert_eq!(s.mat()[(1, 1)], 0.0);
        assert!(psd_apply_fn(&SymMatrix::diag(&[1.0, -1e-3]), SpectralFn::Sqrt).is_err());
    }

    #[test]
    fn lyapunov_identity_and_diagonal() {
        let xi = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0, -3.0]]).unwrap();
        let u = lyapunov_solve(&SymMatrix::identity(2), &xi).unwrap();
        assert!(close(u.mat(), xi.mat(), 1e-15));
        let p = SymMatrix::diag(&[1.0, 3.0]);
        let u = lyapunov_solve(&p, &xi).unwrap();
        assert!((u.mat()[(0, 1)] - 2.0 * 2.0 / 4.0).abs() < 1e-14);
        assert!((u.mat()[(1, 1)] + 3.0 / 3.0).abs() < 1e-14);
        assert!(lyapunov_solve(&SymMatrix::diag(&[1.0, 0.0]), &xi).is_err());
    }

    #[test]
    fn riccati_fixed_point_and_diagonal() {
        let p = SymMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap();
        let x = riccati_solve(&p, &p).unwrap();
        assert!(close(x.mat(), &Mat::identity(2), 1e-13));
        let x =
            riccati_solve(&SymMatrix::diag(&[1.0, 4.0]), &SymMatrix::diag(&[4.0, 1.0])).unwrap();
        assert!(close(x.mat(), &Mat::diag(&[2.0, 0.5]), 1e-14));
        assert!(riccati_solve(&SymMatrix::diag(&[0.0, 1.0]), &p).is_err());
    }

    #[test]
    fn coords_are_frobenius_isometric() {
        let a =
            SymMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]).unwrap();
        let mut c = [0.0; 6];
        a.write_coords(&mut c);
        let n2: f64 = c.iter().map(|x| x * x).sum();
        assert!((n2 - a.frob_norm().powi(2)).abs() < 1e-12);
        assert_eq!(
            SymMatrix::from_coords(3, &c).mat().max_abs(),
            a.mat().max_abs()
        );
    }

    #[test]
    fn psd_constructor_rejects_indefinite() {
        assert!(PsdMatrix::diag(&[1.0, -0.5]).is_err());
        assert!(PsdMatrix::diag(&[1.0, -1e-12]).is_ok());
    }
}
