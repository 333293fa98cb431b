//! Thin dense linear-algebra layer over `faer`, operating on `ndarray`
//! matrices of `Complex64`.

use faer::complex_native::c64;
use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{GhdoError, Result};

pub type CMatrix = Array2<Complex64>;

#[inline]
fn to_c64(z: Complex64) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
fn from_c64(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

pub(crate) fn to_faer(a: &CMatrix) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| to_c64(a[[i, j]]))
}

fn from_faer(m: faer::MatRef<'_, c64>) -> CMatrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| from_c64(m.read(i, j)))
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// `max |A − A†|`.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// `(A + A†)/2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)) * Complex64::new(0.5, 0.0)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diag().iter().sum()
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
/// Only the lower triangle is read.
pub fn eigh(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(GhdoError::Input("eigh needs a square matrix".into()));
    }
    let m = to_faer(a);
    let evd = m.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector();
    let mut pairs: Vec<(f64, usize)> = (0..a.nrows()).map(|k| (s.read(k).re, k)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let u = from_faer(evd.u());
    let mut vecs = Array2::zeros((a.nrows(), a.ncols()));
    for (dst, &(_, src)) in pairs.iter().enumerate() {
        vecs.column_mut(dst).assign(&u.column(src));
    }
    Ok((pairs.into_iter().map(|p| p.0).collect(), vecs))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMatrix) -> Result<Vec<f64>> {
    let m = to_faer(a);
    let mut vals: Vec<f64> = m
        .selfadjoint_eigenvalues(faer::Side::Lower)
        .into_iter()
        .collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigenvalues of a general complex matrix.
pub fn eigvals(a: &CMatrix) -> Vec<Complex64> {
    to_faer(a)
        .eigenvalues::<c64>()
        .into_iter()
        .map(from_c64)
        .collect()
}

/// Solves `A x = b` by LU with partial pivoting.
pub(crate) fn lu_solve(a: Mat<c64>, b: &[Complex64]) -> Vec<Complex64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| to_c64(b[i]));
    let lu = a.partial_piv_lu();
    let x = faer::prelude::SpSolver::solve(&lu, &rhs);
    (0..b.len()).map(|i| from_c64(x.read(i, 0))).collect()
}

/// Dense solve of a square complex system.
pub fn solve(a: &CMatrix, b: &[Complex64]) -> Vec<Complex64> {
    lu_solve(to_faer(a), b)
}

/// `Σ BᵀB` over real row-major blocks sharing a column count, computing the
/// lower triangle once and mirroring it.
pub fn real_gram(blocks: &[&Array2<f64>]) -> Array2<f64> {
    use faer::linalg::matmul::triangular::{matmul, BlockStructure};
    let d = blocks.first().map_or(0, |b| b.ncols());
    let mut acc = Mat::<f64>::zeros(d, d);
    for (k, b) in blocks.iter().enumerate() {
        assert_eq!(b.ncols(), d, "gram blocks must share a column count");
        let owned;
        let slice = match b.as_slice() {
            Some(s) => s,
            None => {
                owned = b.as_standard_layout().to_owned();
                owned.as_slice().expect("standard layout")
            }
        };
        let m = faer::mat::from_row_major_slice(slice, b.nrows(), d);
        matmul(
            acc.as_mut(),
            BlockStructure::TriangularLower,
            m.transpose(),
            BlockStructure::Rectangular,
            m,
            BlockStructure::Rectangular,
            (k > 0).then_some(1.0),
            1.0,
            faer::Parallelism::Rayon(0),
        );
    }
    Array2::from_shape_fn((d, d), |(i, j)| if i >= j { acc.read(i, j) } else { acc.read(j, i) })
}
