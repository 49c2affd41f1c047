//! Rank-revealing linear algebra and subspace arithmetic.
//!
//! Every rank decision in the crate goes through [`Tolerances::rank_threshold`]:
//! a singular value counts if it exceeds `rank_rtol * max(rows, cols) * sigma_max`.
//! Subspaces are carried as orthonormal bases, so sums, intersections and
//! containment reduce to rank computations on concatenated bases.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type CMatrix = DMatrix<Complex64>;

/// Numerical settings shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative singular-value threshold, scaled by `max(rows, cols)` at use.
    pub rank_rtol: f64,
    /// Half-width of the band around the unit circle treated as undecidable.
    pub boundary_delta: f64,
    /// Absolute residual bound for subspace containment and membership checks.
    pub containment_atol: f64,
    /// Seed for the randomized pencil routines.
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-10,
            boundary_delta: 1e-8,
            containment_atol: 1e-8,
            seed: 0x5eed_1f0,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Tolerance(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        positive("rank_rtol", self.rank_rtol)?;
        positive("boundary_delta", self.boundary_delta)?;
        positive("containment_atol", self.containment_atol)?;
        if self.rank_rtol >= 1.0 {
            return Err(Error::Tolerance(format!(
                "rank_rtol must be < 1, got {}",
                self.rank_rtol
            )));
        }
        Ok(())
    }

    /// Absolute cut-off below which a singular value is treated as zero.
    pub fn rank_threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        self.rank_rtol * rows.max(cols).max(1) as f64 * sigma_max
    }
}

pub fn check_finite(what: &str, a: &Matrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    what: what.to_string(),
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

/// Scalars the decompositions work over: `f64` and `Complex64`.
pub trait Field:
    ComplexField<RealField = f64> + faer::traits::ComplexField<Real = f64> + Copy
{
}

impl Field for f64 {}
impl Field for Complex64 {}

/// Full singular value decomposition `a = u diag(s) v^H`, with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd<T: Field> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

impl<T: Field> Svd<T> {
    pub fn smax(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above the threshold for `max(smax, scale)`.
    pub fn rank(&self, scale: f64, tol: &Tolerances) -> usize {
        let smax = self.smax().max(scale);
        if smax == 0.0 {
            return 0;
        }
        let thr = tol.rank_threshold(self.u.nrows(), self.v.nrows(), smax);
        self.s.iter().filter(|&&x| x > thr).count()
    }
}

/// SVD through faer; nalgebra's bidiagonal SVD can return inaccurate factors
/// for nearly rank-deficient matrices.
pub fn svd<T: Field>(a: &DMatrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Svd {
            u: DMatrix::identity(m, m),
            s: Vec::new(),
            v: DMatrix::identity(n, n),
        };
    }
    let fa = faer::Mat::<T>::from_fn(m, n, |i, j| a[(i, j)]);
    let dec = fa.svd().expect("SVD did not converge");
    let (u, v, d) = (dec.U(), dec.V(), dec.S().column_vector());
    Svd {
        u: DMatrix::from_fn(m, m, |i, j| u[(i, j)]),
        s: (0..m.min(n)).map(|k| ComplexField::modulus(d[k])).collect(),
        v: DMatrix::from_fn(n, n, |i, j| v[(i, j)]),
    }
}

/// Eigenvalues of a square real matrix, `None` if the iteration fails.
pub fn eigenvalues(a: &Matrix) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let fa = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    fa.eigenvalues().ok()
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values<T: Field>(a: &DMatrix<T>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let fa = faer::Mat::<T>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    fa.singular_values().expect("SVD did not converge")
}

/// Rank of a real or complex matrix under the crate's thresholding rule.
pub fn rank_of<T: Field>(a: &DMatrix<T>, tol: &Tolerances) -> usize {
    rank_of_scaled(a, 0.0, tol)
}

/// [`rank_of`] with singular values judged against `max(sigma_max, scale)`.
pub fn rank_of_scaled<T: Field>(a: &DMatrix<T>, scale: f64, tol: &Tolerances) -> usize {
    let sv = singular_values(a);
    let Some(&smax) = sv.first() else { return 0 };
    let smax = smax.max(scale);
    if smax == 0.0 {
        return 0;
    }
    let thr = tol.rank_threshold(a.nrows(), a.ncols(), smax);
    sv.iter().filter(|&&s| s > thr).count()
}

/// Checked rank: rejects non-finite input.
pub fn numerical_rank(a: &Matrix, tol: &Tolerances) -> Result<usize> {
    check_finite("matrix", a)?;
    Ok(rank_of(a, tol))
}

/// Orthonormal basis (as columns) of the column space.
pub fn image_of<T: Field>(a: &DMatrix<T>, tol: &Tolerances) -> DMatrix<T> {
    image_of_scaled(a, 0.0, tol)
}

/// [`image_of`] with singular values judged against `max(sigma_max, scale)`.
///
/// Used when `a` is a product such as `M * basis`, whose entries may all be
/// rounding noise relative to `|M|`.
pub fn image_of_scaled<T: Field>(a: &DMatrix<T>, scale: f64, tol: &Tolerances) -> DMatrix<T> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(m, 0);
    }
    let d = svd(a);
    let r = d.rank(scale, tol);
    d.u.columns(0, r).into_owned()
}

/// Orthonormal basis (as columns) of the null space.
pub fn kernel_of<T: Field>(a: &DMatrix<T>, tol: &Tolerances) -> DMatrix<T> {
    kernel_of_scaled(a, 0.0, tol)
}

/// [`kernel_of`] with singular values judged against `max(sigma_max, scale)`.
pub fn kernel_of_scaled<T: Field>(a: &DMatrix<T>, scale: f64, tol: &Tolerances) -> DMatrix<T> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m == 0 {
        return DMatrix::identity(n, n);
    }
    let d = svd(a);
    let r = d.rank(scale, tol);
    d.v.columns(r, n - r).into_owned()
}

/// Largest singular value, `0` for empty matrices.
pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Rows form an orthonormal basis of `(im v)^⊥`, so `ker K = im v`.
///
/// Each row is sign-normalized so that its largest-magnitude entry is positive.
pub fn annihilator_of_image(v: &Matrix, tol: &Tolerances) -> Matrix {
    let comp = kernel_of(&v.transpose(), tol);
    let mut k = comp.transpose();
    for mut row in k.row_iter_mut() {
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            row.neg_mut();
        }
    }
    k
}

pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column mismatch");
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// `[[a, b], [c, d]]` with conformable blocks.
pub fn block2x2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
    vstack(&[&hstack(&[a, b]), &hstack(&[c, d])])
}

/// Moore-Penrose pseudo-inverse with the crate's rank threshold.
pub fn pinv(a: &Matrix, tol: &Tolerances) -> Matrix {
    pinv_scaled(a, 0.0, tol)
}

/// [`pinv`] with singular values judged against `max(sigma_max, scale)`, so a
/// product inherits the rank decision made for its factors.
pub fn pinv_scaled(a: &Matrix, scale: f64, tol: &Tolerances) -> Matrix {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Matrix::zeros(n, m);
    }
    let d = svd(a);
    let r = d.rank(scale, tol);
    let mut vs = d.v.columns(0, r).into_owned();
    for (k, mut c) in vs.column_iter_mut().enumerate() {
        c /= d.s[k];
    }
    vs * d.u.columns(0, r).transpose()
}

/// A linear subspace of `R^ambient`, stored as an orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Matrix,
    tol: Tolerances,
}

impl Subspace {
    pub fn zero(ambient: usize, tol: &Tolerances) -> Self {
        Self {
            basis: Matrix::zeros(ambient, 0),
            tol: *tol,
        }
    }

    pub fn full(ambient: usize, tol: &Tolerances) -> Self {
        Self {
            basis: Matrix::identity(ambient, ambient),
            tol: *tol,
        }
    }

    /// Column space of `a`.
    pub fn image(a: &Matrix, tol: &Tolerances) -> Self {
        Self {
            basis: image_of(a, tol),
            tol: *tol,
        }
    }

    pub fn kernel(a: &Matrix, tol: &Tolerances) -> Self {
        Self {
            basis: kernel_of(a, tol),
            tol: *tol,
        }
    }

    /// `{x | a x ∈ target}`.
    pub fn preimage(a: &Matrix, target: &Subspace) -> Self {
        assert_eq!(a.nrows(), target.ambient(), "preimage: ambient mismatch");
        let k = annihilator_of_image(&target.basis, &target.tol);
        if k.nrows() == 0 {
            return Self::full(a.ncols(), &target.tol);
        }
        Self {
            basis: kernel_of_scaled(&(k * a), spectral_norm(a), &target.tol),
            tol: target.tol,
        }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn tol(&self) -> &Tolerances {
        &self.tol
    }

    /// Image of this subspace under `a`.
    pub fn map(&self, a: &Matrix) -> Self {
        assert_eq!(a.ncols(), self.ambient(), "map: dimension mismatch");
        Self {
            basis: image_of_scaled(&(a * &self.basis), spectral_norm(a), &self.tol),
            tol: self.tol,
        }
    }

    /// Rows whose kernel is this subspace.
    pub fn annihilator(&self) -> Matrix {
        annihilator_of_image(&self.basis, &self.tol)
    }

    pub fn sum(&self, other: &Subspace) -> Self {
        assert_eq!(self.ambient(), other.ambient(), "sum: ambient mismatch");
        Self::image(&hstack(&[&self.basis, &other.basis]), &self.tol)
    }

    pub fn intersect(&self, other: &Subspace) -> Self {
        assert_eq!(
            self.ambient(),
            other.ambient(),
            "intersect: ambient mismatch"
        );
        let k = vstack(&[&self.annihilator(), &other.annihilator()]);
        if k.nrows() == 0 {
            return Self::full(self.ambient(), &self.tol);
        }
        Self::kernel(&k, &self.tol)
    }

    /// `inner ⊆ self`, decided by `rank [self inner] == dim self`.
    pub fn contains(&self, inner: &Subspace) -> bool {
        assert_eq!(
            self.ambient(),
            inner.ambient(),
            "contains: ambient mismatch"
        );
        if inner.is_zero() {
            return true;
        }
        rank_of(&hstack(&[&self.basis, &inner.basis]), &self.tol) == self.dim()
    }

    /// Largest column norm of `inner` after projecting out `self`.
    pub fn containment_residual(&self, inner: &Subspace) -> f64 {
        self.residual_of(&inner.basis)
    }

    /// Largest column norm of `vectors` after projecting out `self`.
    pub fn residual_of(&self, vectors: &Matrix) -> f64 {
        let proj = &self.basis * (self.basis.transpose() * vectors);
        (vectors - proj)
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Unit vector of `inner` farthest from `self`, or `None` when `inner ⊆ self`.
    pub fn escaping_vector(&self, inner: &Subspace) -> Option<DVector<f64>> {
        if self.contains(inner) {
            return None;
        }
        let off = &inner.basis - &self.basis * (self.basis.transpose() * &inner.basis);
        let v = svd(&off).v.column(0).into_owned();
        let x = &inner.basis * v;
        let norm = x.norm();
        Some(x / norm)
    }

    pub fn same_as(&self, other: &Subspace) -> bool {
        self.dim() == other.dim() && self.contains(other) && other.contains(self)
    }

    /// Coordinate product `self × other` in `R^(a+b)`.
    pub fn product(&self, other: &Subspace) -> Self {
        let (a, b) = (self.ambient(), other.ambient());
        let mut basis = Matrix::zeros(a + b, self.dim() + other.dim());
        basis
            .view_mut((0, 0), (a, self.dim()))
            .copy_from(&self.basis);
        basis
            .view_mut((a, self.dim()), (b, other.dim()))
            .copy_from(&other.basis);
        Self {
            basis,
            tol: self.tol,
        }
    }
}

fn same_ambient(a: &Subspace, b: &Subspace, op: &str) -> Result<()> {
    if a.ambient() != b.ambient() {
        return Err(Error::Dimension(format!(
            "{op}: ambient dimensions {} and {} differ",
            a.ambient(),
            b.ambient()
        )));
    }
    Ok(())
}

pub fn image_basis(a: &Matrix, tol: &Tolerances) -> Result<Subspace> {
    check_finite("matrix", a)?;
    Ok(Subspace::image(a, tol))
}

pub fn kernel_basis(a: &Matrix, tol: &Tolerances) -> Result<Subspace> {
    check_finite("matrix", a)?;
    Ok(Subspace::kernel(a, tol))
}

pub fn inverse_image(a: &Matrix, s: &Subspace) -> Result<Subspace> {
    check_finite("matrix", a)?;
    if a.nrows() != s.ambient() {
        return Err(Error::Dimension(format!(
            "inverse_image: matrix has {} rows but subspace lives in R^{}",
            a.nrows(),
            s.ambient()
        )));
    }
    Ok(Subspace::preimage(a, s))
}

pub fn subspace_sum(s1: &Subspace, s2: &Subspace) -> Result<Subspace> {
    same_ambient(s1, s2, "sum")?;
    Ok(s1.sum(s2))
}

pub fn subspace_intersect(s1: &Subspace, s2: &Subspace) -> Result<Subspace> {
    same_ambient(s1, s2, "intersect")?;
    Ok(s1.intersect(s2))
}

pub fn subspace_contains(outer: &Subspace, inner: &Subspace) -> Result<bool> {
    same_ambient(outer, inner, "contains")?;
    Ok(outer.contains(inner))
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// `rows x cols` matrix with orthonormal columns (`cols <= rows`), Haar-like.
pub fn random_orthonormal<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    assert!(cols <= rows, "random_orthonormal: cols > rows");
    if cols == 0 {
        return Matrix::zeros(rows, 0);
    }
    gaussian(rng, rows, cols).qr().q()
}

/// Evaluate a real matrix in complex arithmetic.
pub fn complexify(a: &Matrix) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}
