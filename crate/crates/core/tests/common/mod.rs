//! Test-side reference implementations. They share nothing with the library
//! beyond `Complex64` and `ndarray`: operators are built from Kronecker
//! products and the steady state is found by plain Gaussian elimination.

#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64;

pub type M = Array2<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> M {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

pub fn kron(a: &M, b: &M) -> M {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

// Single-site matrices in the basis (down, up).
pub fn pauli_x() -> M {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]
}

pub fn pauli_y() -> M {
    // ⟨down|σʸ|up⟩ = i with |up⟩ = (1, 0) in the textbook ordering
    ndarray::array![[c(0., 0.), c(0., 1.)], [c(0., -1.), c(0., 0.)]]
}

pub fn pauli_z() -> M {
    ndarray::array![[c(-1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]]
}

pub fn lowering() -> M {
    ndarray::array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]]
}

/// `op` acting on `site`, with site 0 the most significant tensor factor.
pub fn on_site(op: &M, site: usize, sites: usize) -> M {
    let left = identity(1 << site);
    let right = identity(1 << (sites - 1 - site));
    kron(&kron(&left, op), &right)
}

pub fn dagger(a: &M) -> M {
    a.t().mapv(|z| z.conj())
}

/// Hamiltonian and jump list of the transverse-field Ising chain.
pub fn tfim(sites: usize, v: f64, g: f64, gamma: f64, periodic: bool) -> (M, Vec<M>) {
    let dim = 1 << sites;
    let mut h = Array2::zeros((dim, dim));
    let bonds = if periodic && sites > 2 { sites } else { sites - 1 };
    let bonds = if periodic && sites == 2 { 2 } else { bonds };
    for b in 0..bonds {
        let (i, j) = (b % sites, (b + 1) % sites);
        h = h + on_site(&pauli_z(), i, sites).dot(&on_site(&pauli_z(), j, sites)) * c(v / 4.0, 0.0);
    }
    for i in 0..sites {
        h = h + on_site(&pauli_x(), i, sites) * c(g / 2.0, 0.0);
    }
    let jumps = (0..sites)
        .map(|i| on_site(&lowering(), i, sites) * c(gamma.sqrt(), 0.0))
        .collect();
    (h, jumps)
}

/// Liouvillian acting on row-major `vec(ρ)`, using `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
pub fn liouvillian(h: &M, jumps: &[M]) -> M {
    let n = h.nrows();
    let id = identity(n);
    let mut l = kron(h, &id);
    l.scaled_add(c(-1.0, 0.0), &kron(&id, &h.t().to_owned()));
    l.mapv_inplace(|z| z * c(0.0, -1.0));
    for j in jumps {
        let jdj = dagger(j).dot(j);
        l += &kron(j, &j.mapv(|z| z.conj()));
        l.scaled_add(c(-0.5, 0.0), &kron(&jdj, &id));
        l.scaled_add(c(-0.5, 0.0), &kron(&id, &jdj.t().to_owned()));
    }
    l
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: M, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[[i, k]].norm().partial_cmp(&a[[j, k]].norm()).unwrap())
            .unwrap();
        if p != k {
            for col in 0..n {
                a.swap([k, col], [p, col]);
            }
            b.swap(k, p);
        }
        let pivot = a[[k, k]];
        assert!(pivot.norm() > 1e-300, "singular system");
        let row_k: Vec<Complex64> = a.row(k).iter().skip(k).copied().collect();
        for i in k + 1..n {
            let f = a[[i, k]] / pivot;
            if f == c(0.0, 0.0) {
                continue;
            }
            let mut row = a.row_mut(i);
            let tail = row.as_slice_mut().unwrap();
            for (x, y) in tail[k..].iter_mut().zip(&row_k) {
                *x -= f * y;
            }
            b[i] = b[i] - f * b[k];
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[[k, j]] * x[j];
        }
        x[k] = s / a[[k, k]];
    }
    x
}

/// Steady state: the null vector of the Liouvillian with unit trace, found by
/// replacing the first equation with the trace condition.
pub fn steady_state(h: &M, jumps: &[M]) -> M {
    let n = h.nrows();
    let mut l = liouvillian(h, jumps);
    for col in 0..n * n {
        l[[0, col]] = c(0.0, 0.0);
    }
    for i in 0..n {
        l[[0, i * n + i]] = c(1.0, 0.0);
    }
    let mut rhs = vec![c(0.0, 0.0); n * n];
    rhs[0] = c(1.0, 0.0);
    let x = gauss_solve(l, rhs);
    let rho = Array2::from_shape_vec((n, n), x).unwrap();
    (&rho + &dagger(&rho)) * c(0.5, 0.0)
}

pub fn expectation(rho: &M, op: &M) -> f64 {
    rho.dot(op).diag().iter().sum::<Complex64>().re
}

/// Site-averaged ⟨σˣ⟩, ⟨σʸ⟩, ⟨σᶻ⟩.
pub fn magnetizations(rho: &M) -> [f64; 3] {
    let sites = rho.nrows().trailing_zeros() as usize;
    let mut out = [0.0; 3];
    for (k, p) in [pauli_x(), pauli_y(), pauli_z()].iter().enumerate() {
        out[k] = (0..sites).map(|i| expectation(rho, &on_site(p, i, sites))).sum::<f64>() / sites as f64;
    }
    out
}

pub fn renyi2(rho: &M) -> f64 {
    let purity: f64 = rho.iter().map(|z| z.norm_sqr()).sum();
    -purity.log2()
}

/// Hermitian eigenvalues by cyclic Jacobi rotations on the real symmetric
/// embedding `[[Re, −Im], [Im, Re]]`; each eigenvalue appears twice.
pub fn hermitian_eigenvalues(a: &M) -> Vec<f64> {
    let n = a.nrows();
    let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = a[[i, j]];
            m[[i, j]] = z.re;
            m[[i + n, j + n]] = z.re;
            m[[i, j + n]] = -z.im;
            m[[i + n, j]] = z.im;
        }
    }
    let d = 2 * n;
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..d {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = cs * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + cs * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = cs * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + cs * mqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..d).map(|i| m[[i, i]]).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

pub fn min_eigenvalue(a: &M) -> f64 {
    hermitian_eigenvalues(a)[0]
}
