//! Matrix elements of Gram-Hadamard density operators.
//!
//! A GHDO is the element-wise product of `K` Gram matrices of rank `R`:
//!
//! ```text
//! ⟨σ|ρ|η⟩ = ∏_{h=1..K} Σ_{a=1..R} ψ⁽ʰ⁾_{σ,a} conj(ψ⁽ʰ⁾_{η,a})
//! ```
//!
//! The autoregressive variant (AGHDO) takes `K = N`, lets factor `h` depend on
//! `σ_{≤h}` only and normalizes each site block, which makes the diagonal an
//! autoregressive probability distribution with `Tr ρ = 1`.
//!
//! Besides evaluation this module holds the exact constructors: classical
//! states (`R = 2`), arbitrary dense states (`R = 2^N`) and the maximally
//! mixed state as a plain GHDO.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GhdoError, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{log_rho_adjoints, AmplitudeModel, VariationalModel, UNDERFLOW_THRESHOLD};
use crate::spins::{AmplitudeTable, SpinConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `Σ_a ψσ[h,σ_h,a] conj(ψη[h,η_h,a])`.
#[inline]
pub fn site_overlap(
    psi_sigma: &AmplitudeTable,
    psi_eta: &AmplitudeTable,
    sigma: SpinConfig,
    eta: SpinConfig,
    h: usize,
) -> Complex64 {
    psi_sigma
        .block(h, sigma.bit(h))
        .iter()
        .zip(psi_eta.block(h, eta.bit(h)))
        .map(|(a, b)| a * b.conj())
        .sum()
}

/// `ρ(σ,η)` from normalized tables.
pub fn element_from_tables(
    psi_sigma: &AmplitudeTable,
    psi_eta: &AmplitudeTable,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Complex64 {
    (0..psi_sigma.sites())
        .map(|h| site_overlap(psi_sigma, psi_eta, sigma, eta, h))
        .product()
}

/// `log ρ(σ,η)` as a sum of per-site principal logarithms, so the imaginary
/// part is the unwrapped phase. Fails when `|ρ|` is below
/// [`UNDERFLOW_THRESHOLD`].
pub fn log_element_from_tables(
    psi_sigma: &AmplitudeTable,
    psi_eta: &AmplitudeTable,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<Complex64> {
    let mut acc = ZERO;
    for h in 0..psi_sigma.sites() {
        let u = site_overlap(psi_sigma, psi_eta, sigma, eta, h);
        if u == ZERO {
            return Err(GhdoError::DegenerateAmplitude);
        }
        acc += u.ln();
    }
    if acc.re < UNDERFLOW_THRESHOLD.ln() {
        return Err(GhdoError::DegenerateAmplitude);
    }
    Ok(acc)
}

pub fn aghdo_element<M: AmplitudeModel + ?Sized>(
    model: &M,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Complex64 {
    let ps = model.amplitudes(sigma);
    if sigma == eta {
        return element_from_tables(&ps, &ps, sigma, eta);
    }
    let pe = model.amplitudes(eta);
    element_from_tables(&ps, &pe, sigma, eta)
}

pub fn aghdo_log_element<M: AmplitudeModel + ?Sized>(
    model: &M,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<Complex64> {
    let ps = model.amplitudes(sigma);
    let pe = model.amplitudes(eta);
    log_element_from_tables(&ps, &pe, sigma, eta)
}

/// `(p(−1|σ_{<h}), p(+1|σ_{<h}))` read off a normalized table. The pair is
/// renormalized; an all-zero block yields the uniform pair.
pub fn conditionals_from_table(psi: &AmplitudeTable, h: usize) -> [f64; 2] {
    let down: f64 = psi.block(h, 0).iter().map(|z| z.norm_sqr()).sum();
    let up: f64 = psi.block(h, 1).iter().map(|z| z.norm_sqr()).sum();
    let total = down + up;
    if total > 0.0 {
        [down / total, up / total]
    } else {
        [0.5, 0.5]
    }
}

/// Conditional distribution of σ_h given the prefix `σ_{<h}` of `sigma`
/// (sites `≥ h` of `sigma` are ignored).
pub fn conditionals<M: AmplitudeModel + ?Sized>(
    model: &M,
    sigma: SpinConfig,
    h: usize,
) -> [f64; 2] {
    conditionals_from_table(&model.amplitudes(sigma), h)
}

/// `⟨σ|ρ|σ⟩ = ∏_h p(σ_h|σ_{<h})`.
pub fn diagonal<M: AmplitudeModel + ?Sized>(model: &M, sigma: SpinConfig) -> f64 {
    let psi = model.amplitudes(sigma);
    diagonal_from_table(&psi, sigma)
}

pub fn diagonal_from_table(psi: &AmplitudeTable, sigma: SpinConfig) -> f64 {
    (0..psi.sites())
        .map(|h| conditionals_from_table(psi, h)[sigma.bit(h)])
        .product()
}

/// One factor `ψ⁽ʰ⁾_{σ,a}` of a general GHDO.
pub trait GramFactor: Send + Sync {
    fn rank(&self) -> usize;

    fn values(&self, sigma: SpinConfig) -> Vec<Complex64>;
}

/// A factor given explicitly as a `2^N × R` table.
#[derive(Clone, Debug)]
pub struct TabulatedFactor {
    rank: usize,
    table: Vec<Complex64>,
}

impl TabulatedFactor {
    pub fn new(sites: usize, rank: usize, table: Vec<Complex64>) -> Result<Self> {
        if table.len() != (1usize << sites) * rank {
            return Err(GhdoError::Input(format!(
                "factor table has {} entries, expected 2^{sites} x {rank}",
                table.len()
            )));
        }
        Ok(TabulatedFactor { rank, table })
    }
}

impl GramFactor for TabulatedFactor {
    fn rank(&self) -> usize {
        self.rank
    }

    fn values(&self, sigma: SpinConfig) -> Vec<Complex64> {
        let o = sigma.index() * self.rank;
        self.table[o..o + self.rank].to_vec()
    }
}

/// `ψ_{σ,a} = scale · δ(a, σ_site)` with `a ∈ {0: −1, 1: +1}`.
#[derive(Clone, Copy, Debug)]
pub struct SiteIndicatorFactor {
    pub site: usize,
    pub scale: f64,
}

impl GramFactor for SiteIndicatorFactor {
    fn rank(&self) -> usize {
        2
    }

    fn values(&self, sigma: SpinConfig) -> Vec<Complex64> {
        let mut v = vec![ZERO; 2];
        v[sigma.bit(self.site)] = Complex64::new(self.scale, 0.0);
        v
    }
}

pub struct GhdoModel {
    sites: usize,
    factors: Vec<Box<dyn GramFactor>>,
}

impl GhdoModel {
    pub fn new(sites: usize, factors: Vec<Box<dyn GramFactor>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(GhdoError::Input("a GHDO needs at least one factor".into()));
        }
        Ok(GhdoModel { sites, factors })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Number of Hadamard factors `K`.
    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Largest factor rank.
    pub fn local_rank(&self) -> usize {
        self.factors.iter().map(|f| f.rank()).max().unwrap_or(0)
    }

    pub fn element(&self, sigma: SpinConfig, eta: SpinConfig) -> Complex64 {
        self.factors
            .iter()
            .map(|f| {
                let a = f.values(sigma);
                let b = f.values(eta);
                a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum::<Complex64>()
            })
            .product()
    }
}

/// `ghdo_element`: a matrix element of a general GHDO.
pub fn ghdo_element(model: &GhdoModel, sigma: SpinConfig, eta: SpinConfig) -> Complex64 {
    model.element(sigma, eta)
}

/// `I / 2^N` as a GHDO with `K = N`, `R = 2`.
pub fn maximally_mixed(sites: usize) -> GhdoModel {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let factors = (0..sites)
        .map(|site| Box::new(SiteIndicatorFactor { site, scale }) as Box<dyn GramFactor>)
        .collect();
    GhdoModel { sites, factors }
}

/// An AGHDO given by explicit conditional amplitude tables. Table `h` holds
/// `2^h` prefixes, each with `2·R` entries laid out as `(s, a)`. Entries are
/// treated as unnormalized `φ` and are also the variational parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedAghdo {
    sites: usize,
    rank: usize,
    tables: Vec<Vec<Complex64>>,
}

impl TabulatedAghdo {
    pub fn new(sites: usize, rank: usize, tables: Vec<Vec<Complex64>>) -> Result<Self> {
        if sites == 0 || sites > 20 {
            return Err(GhdoError::Input(format!(
                "tabulated models support 1..=20 sites, got {sites}"
            )));
        }
        if tables.len() != sites {
            return Err(GhdoError::Input("one table per site required".into()));
        }
        for (h, t) in tables.iter().enumerate() {
            if t.len() != (1usize << h) * 2 * rank {
                return Err(GhdoError::Input(format!(
                    "table for site {h} has {} entries, expected {}",
                    t.len(),
                    (1usize << h) * 2 * rank
                )));
            }
        }
        Ok(TabulatedAghdo {
            sites,
            rank,
            tables,
        })
    }

    /// Builds tables from a function `f(h, prefix, s, a)`.
    pub fn from_fn<F>(sites: usize, rank: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> Complex64,
    {
        let tables = (0..sites)
            .map(|h| {
                let mut t = Vec::with_capacity((1 << h) * 2 * rank);
                for prefix in 0..(1usize << h) {
                    for s in 0..2 {
                        for a in 0..rank {
                            t.push(f(h, prefix, s, a));
                        }
                    }
                }
                t
            })
            .collect();
        Self::new(sites, rank, tables)
    }

    pub fn tables(&self) -> &[Vec<Complex64>] {
        &self.tables
    }

    fn param_offset(&self, h: usize) -> usize {
        (0..h).map(|k| self.tables[k].len()).sum()
    }
}

impl AmplitudeModel for TabulatedAghdo {
    fn sites(&self) -> usize {
        self.sites
    }

    fn local_rank(&self) -> usize {
        self.rank
    }

    fn raw_amplitudes(&self, sigma: SpinConfig) -> AmplitudeTable {
        let r2 = 2 * self.rank;
        let mut values = Vec::with_capacity(self.sites * r2);
        for h in 0..self.sites {
            let p = sigma.prefix(h);
            values.extend_from_slice(&self.tables[h][p * r2..(p + 1) * r2]);
        }
        AmplitudeTable::from_values(self.sites, self.rank, values)
    }
}

impl VariationalModel for TabulatedAghdo {
    fn num_params(&self) -> usize {
        2 * self.tables.iter().map(Vec::len).sum::<usize>()
    }

    fn params(&self) -> Vec<f64> {
        self.tables
            .iter()
            .flatten()
            .flat_map(|z| [z.re, z.im])
            .collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(GhdoError::Input(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.chunks_exact(2);
        for t in &mut self.tables {
            for z in t.iter_mut() {
                let c = it.next().unwrap();
                *z = Complex64::new(c[0], c[1]);
            }
        }
        Ok(())
    }

    fn log_derivatives(
        &self,
        sigma: SpinConfig,
        eta: SpinConfig,
    ) -> Result<(Complex64, Vec<Complex64>)> {
        let ps = self.raw_amplitudes(sigma);
        let pe = self.raw_amplitudes(eta);
        let adj = log_rho_adjoints(&ps, &pe, sigma, eta)?;
        let mut grad = vec![ZERO; self.num_params()];
        let r2 = 2 * self.rank;
        for h in 0..self.sites {
            let base = self.param_offset(h);
            for (cfg, re, im) in [
                (sigma, &adj.sigma_re, &adj.sigma_im),
                (eta, &adj.eta_re, &adj.eta_im),
            ] {
                let p = cfg.prefix(h);
                for k in 0..r2 {
                    let param = base + p * r2 + k;
                    grad[2 * param] += re[h * r2 + k];
                    grad[2 * param + 1] += im[h * r2 + k];
                }
            }
        }
        Ok((adj.log_rho, grad))
    }
}

/// Marginal probabilities of every prefix: `marg[h][prefix]` for `h = 0..=N`.
fn prefix_marginals(p: &[f64], sites: usize) -> Vec<Vec<f64>> {
    let mut marg = vec![Vec::new(); sites + 1];
    marg[sites] = p.to_vec();
    for h in (0..sites).rev() {
        let next = &marg[h + 1];
        marg[h] = (0..(1usize << h))
            .map(|q| next[2 * q] + next[2 * q + 1])
            .collect();
    }
    marg
}

fn conditional(marg: &[Vec<f64>], h: usize, prefix: usize, s: usize) -> f64 {
    let denom = marg[h][prefix];
    if denom > 0.0 {
        (marg[h + 1][2 * prefix + s] / denom).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

fn sites_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(GhdoError::Input(format!(
            "table length {len} is not 2^N with N >= 1"
        )));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Exact `R = 2` AGHDO of the classical state `ρ = diag(p)`, using
/// `ψ_{σ≤h,a} = δ(a, σ_h) sqrt(p(σ_h|σ_{<h}))`. Prefixes of zero probability
/// get the uniform conditional.
pub fn from_classical(p: &[f64]) -> Result<TabulatedAghdo> {
    let sites = sites_for_len(p.len())?;
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0)) {
        return Err(GhdoError::Input(format!(
            "probabilities must be nonnegative, found {x}"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(GhdoError::Input(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    let marg = prefix_marginals(p, sites);
    TabulatedAghdo::from_fn(sites, 2, |h, prefix, s, a| {
        if a == s {
            Complex64::new(conditional(&marg, h, prefix, s).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// Exact `R = 2^N` AGHDO of an arbitrary density matrix.
///
/// The diagonal fixes the conditionals; the coherence matrix
/// `ρ_c(σ,η) = ρ(σ,η)/sqrt(p(σ)p(η))` is Gram-factorized through its
/// eigendecomposition and placed on the last site.
pub fn from_dense(rho: &CMatrix) -> Result<TabulatedAghdo> {
    let dim = rho.nrows();
    if rho.ncols() != dim {
        return Err(GhdoError::Input("density matrix must be square".into()));
    }
    let sites = sites_for_len(dim)?;
    if sites > 5 {
        return Err(GhdoError::Capacity {
            what: "from_dense",
            sites,
            limit: 5,
        });
    }
    if linalg::hermiticity_error(rho) > 1e-10 {
        return Err(GhdoError::Input("density matrix is not Hermitian".into()));
    }
    let tr = linalg::trace(rho);
    if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(GhdoError::Input(format!("trace is {tr}, expected 1")));
    }
    let min_eig = linalg::eigvalsh(rho)?[0];
    if min_eig < -1e-10 {
        return Err(GhdoError::Input(format!(
            "density matrix is not PSD (min eigenvalue {min_eig:e})"
        )));
    }

    let p: Vec<f64> = (0..dim).map(|i| rho[[i, i]].re.max(0.0)).collect();
    let coherence = CMatrix::from_shape_fn((dim, dim), |(i, j)| {
        let norm = (p[i] * p[j]).sqrt();
        if p[i] > 0.0 && p[j] > 0.0 {
            rho[[i, j]] / norm
        } else {
            ZERO
        }
    });
    let (vals, vecs) = linalg::eigh(&linalg::hermitize(&coherence))?;
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // Ψ(σ, a) = U[σ, a] sqrt(λ_a); rows with p(σ) = 0 get a unit vector so the
    // last-site normalization stays defined.
    let gram = |row: usize, a: usize| -> Complex64 {
        if p[row] > 0.0 {
            vecs[[row, a]] * roots[a]
        } else if a == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    };

    let marg = prefix_marginals(&p, sites);
    let rank = dim;
    TabulatedAghdo::from_fn(sites, rank, |h, prefix, s, a| {
        let cond = conditional(&marg, h, prefix, s).sqrt();
        if h + 1 < sites {
            if a == 0 {
                Complex64::new(cond, 0.0)
            } else {
                ZERO
            }
        } else {
            cond * gram(2 * prefix + s, a)
        }
    })
}
