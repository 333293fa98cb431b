//! Conjugate gradients for Hermitian positive-definite systems given only a
//! matrix-vector product.

use num_complex::Complex64;

use crate::linalg::CMatrix;

pub trait CgScalar: Copy + Send + Sync + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> {
    fn zero() -> Self;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
    fn mul(self, other: Self) -> Self;
    fn norm_sqr(self) -> f64;
    fn re(self) -> f64;
}

impl CgScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn re(self) -> f64 {
        self
    }
}

impl CgScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn mul(self, other: Self) -> Self {
        self * other
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// `‖A x − b‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
}

fn norm<T: CgScalar>(v: &[T]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Re ⟨u, v⟩`; for a Hermitian operator the quadratic forms CG needs are
/// real, so the imaginary part is discarded.
fn dot_re<T: CgScalar>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.conj().mul(*b).re()).sum()
}

/// Solves `A x = b` starting from zero. Stops when the relative residual
/// drops to `tol` or after `max_iters` iterations, returning the last
/// iterate either way.
pub fn conjugate_gradient<T, F>(apply: F, b: &[T], tol: f64, max_iters: usize) -> CgSolution<T>
where
    T: CgScalar,
    F: Fn(&[T]) -> Vec<T>,
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return CgSolution {
            x: vec![T::zero(); n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot_re(&r, &r);
    let mut iterations = 0;
    while iterations < max_iters && rr.sqrt() > tol * b_norm {
        let ap = apply(&p);
        let pap = dot_re(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] = x[i] + p[i].scale(step);
            r[i] = r[i] - ap[i].scale(step);
        }
        let rr_next = dot_re(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + p[i].scale(beta);
        }
        rr = rr_next;
        iterations += 1;
    }
    // report the true residual rather than the recursively updated one
    let ax = apply(&x);
    let res: Vec<T> = ax.iter().zip(b).map(|(a, c)| *a - *c).collect();
    let residual = norm(&res) / b_norm;
    CgSolution {
        x,
        iterations,
        residual,
        converged: residual <= tol,
    }
}

/// `(S + λI) x = F` for a dense Hermitian `S`.
pub fn solve_regularized(
    s: &CMatrix,
    f: &[Complex64],
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> CgSolution<Complex64> {
    conjugate_gradient(
        |v: &[Complex64]| {
            let mut out: Vec<Complex64> = v.iter().map(|z| z * lambda).collect();
            for (i, row) in s.rows().into_iter().enumerate() {
                out[i] += row.iter().zip(v).map(|(a, b)| a * b).sum::<Complex64>();
            }
            out
        },
        f,
        tol,
        max_iters,
    )
}
