//! Dense exact reference for small systems.
//!
//! Everything here works on explicit `2^N × 2^N` density matrices and the
//! `4^N × 4^N` Liouvillian. Vectorization is row-major: `vec(ρ)[i·D + j] = ρ_ij`,
//! so `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.

use faer::complex_native::c64;
use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cache::AmplitudeCache;
use crate::error::{GhdoError, Result};
use crate::ghdo::{element_from_tables, GhdoModel};
use crate::lindblad::{LindbladModel, LocalOperator};
use crate::linalg::{self, CMatrix};
use crate::model::AmplitudeModel;
use crate::spins::SpinConfig;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const MAX_LIOUVILLIAN_SITES: usize = 6;
pub const MAX_RECONSTRUCTION_SITES: usize = 8;

/// Dense density matrix; see [`DenseDensityMatrix::check`] for the invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDensityMatrix {
    sites: usize,
    matrix: CMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityDiagnostics {
    pub hermiticity_error: f64,
    pub trace: Complex64,
    pub min_eigenvalue: f64,
}

impl DensityDiagnostics {
    pub fn is_physical(&self, tol: f64) -> bool {
        self.hermiticity_error <= tol
            && (self.trace - Complex64::new(1.0, 0.0)).norm() <= tol
            && self.min_eigenvalue >= -tol
    }
}

impl DenseDensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim || !dim.is_power_of_two() {
            return Err(GhdoError::Input(format!(
                "density matrix must be 2^N x 2^N, got {:?}",
                matrix.dim()
            )));
        }
        Ok(DenseDensityMatrix {
            sites: dim.trailing_zeros() as usize,
            matrix,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_inner(self) -> CMatrix {
        self.matrix
    }

    pub fn check(&self) -> Result<DensityDiagnostics> {
        Ok(DensityDiagnostics {
            hermiticity_error: linalg::hermiticity_error(&self.matrix),
            trace: linalg::trace(&self.matrix),
            min_eigenvalue: linalg::eigvalsh(&linalg::hermitize(&self.matrix))?[0],
        })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&linalg::hermitize(&self.matrix))
    }
}

/// Embeds a local operator into the full `2^N`-dimensional space.
pub fn embed_operator(op: &LocalOperator, sites: usize) -> CMatrix {
    let dim = 1usize << sites;
    let mut m = CMatrix::zeros((dim, dim));
    for sigma in SpinConfig::all(sites) {
        op.for_each_connected(sigma, |s2, amp| m[[sigma.index(), s2.index()]] += amp);
    }
    m
}

pub fn dense_hamiltonian(lind: &LindbladModel) -> CMatrix {
    let dim = 1usize << lind.sites();
    let mut h = CMatrix::zeros((dim, dim));
    for term in lind.hamiltonian() {
        h += &embed_operator(term, lind.sites());
    }
    h
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, Complex64)> {
    m.indexed_iter()
        .filter(|(_, z)| **z != ZERO)
        .map(|((i, j), z)| (i, j, *z))
        .collect()
}

/// Visits every nonzero term `(row, col, value)` of the Liouvillian; entries
/// may repeat and must be summed.
fn for_each_liouvillian_entry<F: FnMut(usize, usize, Complex64)>(lind: &LindbladModel, mut f: F) {
    let n = lind.sites();
    let dim = 1usize << n;
    let i_unit = Complex64::new(0.0, 1.0);
    let h = nonzeros(&dense_hamiltonian(lind));
    for &(i, k, v) in &h {
        for j in 0..dim {
            // −i H ρ
            f(i * dim + j, k * dim + j, -i_unit * v);
            // +i ρ H : (I ⊗ Hᵀ)[(j,i),(j,k)] = H[k,i]
            f(j * dim + k, j * dim + i, i_unit * v);
        }
    }
    for (l, ldl) in lind.jumps().iter().zip(lind.jump_rates()) {
        let l = nonzeros(&embed_operator(l, n));
        let ldl = nonzeros(&embed_operator(ldl, n));
        for &(i, k, a) in &l {
            for &(j, m, b) in &l {
                f(i * dim + j, k * dim + m, a * b.conj());
            }
        }
        for &(i, k, v) in &ldl {
            for j in 0..dim {
                f(i * dim + j, k * dim + j, -0.5 * v);
                f(j * dim + k, j * dim + i, -0.5 * v);
            }
        }
    }
}

fn check_liouvillian_capacity(lind: &LindbladModel) -> Result<()> {
    if lind.sites() > MAX_LIOUVILLIAN_SITES {
        return Err(GhdoError::Capacity {
            what: "dense Liouvillian",
            sites: lind.sites(),
            limit: MAX_LIOUVILLIAN_SITES,
        });
    }
    Ok(())
}

/// The `4^N × 4^N` superoperator acting on row-major `vec(ρ)`.
pub fn dense_liouvillian(lind: &LindbladModel) -> Result<CMatrix> {
    check_liouvillian_capacity(lind)?;
    let d2 = 1usize << (2 * lind.sites());
    let mut m = CMatrix::zeros((d2, d2));
    for_each_liouvillian_entry(lind, |r, c, v| m[[r, c]] += v);
    Ok(m)
}

/// `𝓛ρ` evaluated directly from dense operators.
pub fn apply_liouvillian(lind: &LindbladModel, rho: &CMatrix) -> CMatrix {
    let n = lind.sites();
    let i_unit = Complex64::new(0.0, 1.0);
    let h = dense_hamiltonian(lind);
    let mut out = (h.dot(rho) - rho.dot(&h)) * (-i_unit);
    for (l, ldl) in lind.jumps().iter().zip(lind.jump_rates()) {
        let l = embed_operator(l, n);
        let ldl = embed_operator(ldl, n);
        out = out + l.dot(rho).dot(&linalg::dagger(&l))
            - (ldl.dot(rho) + rho.dot(&ldl)) * Complex64::new(0.5, 0.0);
    }
    out
}

/// Unique steady state of the Lindblad model.
///
/// The null vector is found by replacing the first row of `𝓛` with the trace
/// functional (a left null vector of every Lindbladian) and solving with LU.
/// For `N ≤ 4` the spectrum is also checked for a degenerate null space.
pub fn steady_state_dense(lind: &LindbladModel) -> Result<DenseDensityMatrix> {
    check_liouvillian_capacity(lind)?;
    let n = lind.sites();
    let dim = 1usize << n;
    let d2 = dim * dim;

    if n <= 4 {
        let l = dense_liouvillian(lind)?;
        let scale = l.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let zeros = linalg::eigvals(&l)
            .iter()
            .filter(|z| z.norm() < 1e-9 * scale)
            .count();
        if zeros > 1 {
            return Err(GhdoError::NonUniqueSteadyState(zeros));
        }
    }

    let mut a = Mat::<c64>::zeros(d2, d2);
    for_each_liouvillian_entry(lind, |r, c, v| {
        if r != 0 {
            let old = a.read(r, c);
            a.write(r, c, c64::new(old.re + v.re, old.im + v.im));
        }
    });
    for i in 0..dim {
        a.write(0, i * dim + i, c64::new(1.0, 0.0));
    }
    let mut rhs = vec![ZERO; d2];
    rhs[0] = Complex64::new(1.0, 0.0);
    let x = linalg::lu_solve(a, &rhs);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(GhdoError::NonUniqueSteadyState(2));
    }

    let raw = Array2::from_shape_fn((dim, dim), |(i, j)| x[i * dim + j]);
    let rho = clip_to_physical(&linalg::hermitize(&raw))?;
    let residual = frobenius(&apply_liouvillian(lind, &rho));
    if residual > 1e-8 {
        return Err(GhdoError::Numerical(format!(
            "steady-state residual {residual:e} exceeds 1e-8"
        )));
    }
    DenseDensityMatrix::new(rho)
}

fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Clips negative eigenvalues of a Hermitian matrix and renormalizes the trace.
pub fn clip_to_physical(rho: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = linalg::eigh(rho)?;
    let mut out = if vals[0] < 0.0 {
        let clipped: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v.max(0.0), 0.0)).collect();
        let d = Array2::from_diag(&ndarray::Array1::from(clipped));
        vecs.dot(&d).dot(&linalg::dagger(&vecs))
    } else {
        rho.clone()
    };
    let tr = linalg::trace(&out).re;
    if tr <= 0.0 {
        return Err(GhdoError::Numerical("density matrix has zero trace".into()));
    }
    out.mapv_inplace(|z| z / tr);
    Ok(linalg::hermitize(&out))
}

fn check_reconstruction_capacity(sites: usize) -> Result<()> {
    if sites > MAX_RECONSTRUCTION_SITES {
        return Err(GhdoError::Capacity {
            what: "dense reconstruction",
            sites,
            limit: MAX_RECONSTRUCTION_SITES,
        });
    }
    Ok(())
}

/// Every element `⟨σ|ρ|η⟩` of an AGHDO by enumeration.
pub fn dense_from_model<M: AmplitudeModel + ?Sized>(model: &M) -> Result<DenseDensityMatrix> {
    let n = model.sites();
    check_reconstruction_capacity(n)?;
    let cache = AmplitudeCache::enumerated(model);
    let dim = 1usize << n;
    let m = Array2::from_shape_fn((dim, dim), |(i, j)| {
        let s = SpinConfig::from_index(n, i as u64);
        let e = SpinConfig::from_index(n, j as u64);
        element_from_tables(&cache.table(s), &cache.table(e), s, e)
    });
    DenseDensityMatrix::new(m)
}

/// Every element of a general GHDO by enumeration.
pub fn dense_from_ghdo(model: &GhdoModel) -> Result<DenseDensityMatrix> {
    let n = model.sites();
    check_reconstruction_capacity(n)?;
    let dim = 1usize << n;
    let m = Array2::from_shape_fn((dim, dim), |(i, j)| {
        model.element(
            SpinConfig::from_index(n, i as u64),
            SpinConfig::from_index(n, j as u64),
        )
    });
    DenseDensityMatrix::new(m)
}

/// Number of eigenvalues of a Hermitian PSD matrix above `tol`.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> Result<usize> {
    Ok(linalg::eigvalsh(&linalg::hermitize(m))?
        .iter()
        .filter(|&&v| v.abs() > tol)
        .count())
}

/// Minimum eigenvalue of `A ⊙ B` for Hermitian `A`, `B`.
pub fn hadamard_product_check(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim() != b.dim() || a.nrows() != a.ncols() {
        return Err(GhdoError::Input("matrices must be square and equal-sized".into()));
    }
    for m in [a, b] {
        if linalg::hermiticity_error(m) > 1e-10 {
            return Err(GhdoError::Input("input matrix is not Hermitian".into()));
        }
    }
    let h = a * b;
    Ok(linalg::eigvalsh(&linalg::hermitize(&h))?[0])
}

#[derive(Clone, Debug)]
pub struct SeriesResult {
    pub matrix: CMatrix,
    pub min_eigenvalue: f64,
}

/// `B_ij = Σ_{l ≤ k} a_l A_ij^l` for nonnegative coefficients. Errors if the
/// entries of `A` fall outside the convergence radius or if the result is
/// not PSD to `−1e-9`.
pub fn positive_series_apply(
    coefficients: &[f64],
    truncation: usize,
    a: &CMatrix,
    radius: f64,
) -> Result<SeriesResult> {
    if let Some(c) = coefficients.iter().find(|c| !(**c >= 0.0)) {
        return Err(GhdoError::Input(format!(
            "series coefficients must be nonnegative, found {c}"
        )));
    }
    let max_entry = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_entry >= radius {
        return Err(GhdoError::Input(format!(
            "max |A_ij| = {max_entry} is outside the convergence radius {radius}"
        )));
    }
    let terms = coefficients.len().min(truncation + 1);
    let b = a.mapv(|z| {
        // Horner evaluation of Σ a_l z^l
        let mut acc = ZERO;
        for &c in coefficients[..terms].iter().rev() {
            acc = acc * z + c;
        }
        acc
    });
    let min_eigenvalue = linalg::eigvalsh(&linalg::hermitize(&b))?[0];
    if min_eigenvalue < -1e-9 {
        return Err(GhdoError::Numerical(format!(
            "series result is not PSD (min eigenvalue {min_eigenvalue:e})"
        )));
    }
    Ok(SeriesResult {
        matrix: b,
        min_eigenvalue,
    })
}

/// Taylor coefficients of `exp` up to order `k`.
pub fn exp_coefficients(k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut c = 1.0;
    for l in 0..=k {
        if l > 0 {
            c /= l as f64;
        }
        out.push(c);
    }
    out
}

/// `Tr(ρ A)` with `A` embedded at its support.
pub fn dense_observable(rho: &CMatrix, op: &LocalOperator) -> Complex64 {
    let sites = rho.nrows().trailing_zeros() as usize;
    let mut acc = ZERO;
    for sigma in SpinConfig::all(sites) {
        op.for_each_connected(sigma, |s2, amp| acc += amp * rho[[s2.index(), sigma.index()]]);
    }
    acc
}

/// `Tr(ρ†ρ) = Σ |ρ_ij|²`.
pub fn dense_purity(rho: &CMatrix) -> f64 {
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// `S₂ = −log₂ Tr(ρ†ρ)`.
pub fn dense_renyi2(rho: &CMatrix) -> f64 {
    -dense_purity(rho).log2()
}

/// Site-averaged magnetizations `(⟨σˣ⟩, ⟨σʸ⟩, ⟨σᶻ⟩)`.
pub fn dense_magnetizations(rho: &CMatrix) -> [f64; 3] {
    let n = rho.nrows().trailing_zeros() as usize;
    let mut out = [0.0; 3];
    for i in 0..n {
        out[0] += dense_observable(rho, &LocalOperator::sigma_x(i)).re;
        out[1] += dense_observable(rho, &LocalOperator::sigma_y(i)).re;
        out[2] += dense_observable(rho, &LocalOperator::sigma_z(i)).re;
    }
    out.map(|v| v / n as f64)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `A A†` for an `n × rank` complex Gaussian `A`.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CMatrix {
    let a = Array2::from_shape_fn((n, rank), |_| complex_gaussian(rng));
    a.dot(&linalg::dagger(&a))
}

/// Random full-rank density matrix `A A† / Tr(A A†)`.
pub fn random_density_matrix<R: Rng + ?Sized>(sites: usize, rng: &mut R) -> CMatrix {
    let dim = 1usize << sites;
    let g = random_psd(dim, dim, rng);
    let tr = linalg::trace(&g).re;
    g.mapv(|z| z / tr)
}
