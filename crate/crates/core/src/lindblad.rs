//! Local operators, Lindblad models and their local estimators.
//!
//! Operators live on at most two sites and are stored as dense local
//! matrices in the basis `|b_i b_j⟩` with `b = 0` for σ = −1 (spin down) and
//! `b = 1` for σ = +1. For a two-site support `[i, j]` the local index is
//! `2·b_i + b_j`.

use std::borrow::Cow;
use std::rc::Rc;

use ndarray::{array, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cache::AmplitudeCache;
use crate::error::{GhdoError, Result};
use crate::ghdo::site_overlap;
use crate::model::{AmplitudeModel, UNDERFLOW_THRESHOLD};
use crate::spins::{AmplitudeTable, SpinConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    support: Vec<usize>,
    matrix: Array2<Complex64>,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

impl LocalOperator {
    pub fn new(support: Vec<usize>, matrix: Array2<Complex64>) -> Result<Self> {
        if support.is_empty() || support.len() > 2 {
            return Err(GhdoError::Input(format!(
                "operators act on one or two sites, got support {support:?}"
            )));
        }
        if support.len() == 2 && support[0] == support[1] {
            return Err(GhdoError::Input(format!(
                "support sites must be distinct, got {support:?}"
            )));
        }
        let dim = 1 << support.len();
        if matrix.dim() != (dim, dim) {
            return Err(GhdoError::Input(format!(
                "operator on {} sites needs a {dim}x{dim} matrix, got {:?}",
                support.len(),
                matrix.dim()
            )));
        }
        Ok(LocalOperator { support, matrix })
    }

    pub fn sigma_x(site: usize) -> Self {
        LocalOperator {
            support: vec![site],
            matrix: array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        }
    }

    pub fn sigma_y(site: usize) -> Self {
        // ⟨↓|σʸ|↑⟩ = i, ⟨↑|σʸ|↓⟩ = −i
        LocalOperator {
            support: vec![site],
            matrix: array![[c(0., 0.), c(0., 1.)], [c(0., -1.), c(0., 0.)]],
        }
    }

    pub fn sigma_z(site: usize) -> Self {
        LocalOperator {
            support: vec![site],
            matrix: array![[c(-1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        }
    }

    /// Lowering operator `|↓⟩⟨↑|`.
    pub fn sigma_minus(site: usize) -> Self {
        LocalOperator {
            support: vec![site],
            matrix: array![[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]],
        }
    }

    pub fn identity(site: usize) -> Self {
        LocalOperator {
            support: vec![site],
            matrix: Array2::eye(2),
        }
    }

    /// `σᶻ_i σᶻ_j`.
    pub fn zz(i: usize, j: usize) -> Self {
        let m = Array2::from_diag(&ndarray::arr1(&[c(1., 0.), c(-1., 0.), c(-1., 0.), c(1., 0.)]));
        LocalOperator {
            support: vec![i, j],
            matrix: m,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.matrix.mapv_inplace(|z| z * factor);
        self
    }

    pub fn adjoint(&self) -> Self {
        LocalOperator {
            support: self.support.clone(),
            matrix: self.matrix.t().mapv(|z| z.conj()),
        }
    }

    /// `self · other`; both must share the same support.
    pub fn compose(&self, other: &LocalOperator) -> Result<Self> {
        if self.support != other.support {
            return Err(GhdoError::Input(
                "operator products need identical supports".into(),
            ));
        }
        Ok(LocalOperator {
            support: self.support.clone(),
            matrix: self.matrix.dot(&other.matrix),
        })
    }

    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for ((i, j), z) in m.indexed_iter() {
            worst = worst.max((z - m[[j, i]].conj()).norm());
        }
        worst
    }

    #[inline]
    fn local_index(&self, sigma: SpinConfig) -> usize {
        self.support.iter().fold(0, |acc, &s| 2 * acc + sigma.bit(s))
    }

    #[inline]
    fn with_local_index(&self, sigma: SpinConfig, k: usize) -> SpinConfig {
        let mut out = sigma;
        let len = self.support.len();
        for (p, &s) in self.support.iter().enumerate() {
            out.set_bit(s, (k >> (len - 1 - p)) & 1);
        }
        out
    }

    /// Calls `f(σ', ⟨σ|op|σ'⟩)` for every nonzero element of row `σ`.
    #[inline]
    pub fn for_each_connected<F: FnMut(SpinConfig, Complex64)>(&self, sigma: SpinConfig, mut f: F) {
        let j = self.local_index(sigma);
        for (k, &m) in self.matrix.row(j).iter().enumerate() {
            if m != ZERO {
                f(self.with_local_index(sigma, k), m);
            }
        }
    }

    /// All `(σ', ⟨σ|op|σ'⟩)` with nonzero amplitude.
    pub fn connected_elements(&self, sigma: SpinConfig) -> Vec<(SpinConfig, Complex64)> {
        let mut out = Vec::with_capacity(self.matrix.ncols());
        self.for_each_connected(sigma, |s, m| out.push((s, m)));
        out
    }

    fn check_sites(&self, sites: usize) -> Result<()> {
        if let Some(&s) = self.support.iter().find(|&&s| s >= sites) {
            return Err(GhdoError::Input(format!(
                "operator site {s} out of range for {sites} sites"
            )));
        }
        Ok(())
    }
}

/// Serializable form of a local operator: row-major matrix of `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub support: Vec<usize>,
    pub matrix: Vec<[f64; 2]>,
}

impl OperatorSpec {
    pub fn to_operator(&self) -> Result<LocalOperator> {
        let dim = 1usize << self.support.len().min(2);
        if self.matrix.len() != dim * dim {
            return Err(GhdoError::Input(format!(
                "operator on {:?} needs {} matrix entries, got {}",
                self.support,
                dim * dim,
                self.matrix.len()
            )));
        }
        let m = Array2::from_shape_fn((dim, dim), |(i, j)| {
            let [re, im] = self.matrix[i * dim + j];
            Complex64::new(re, im)
        });
        LocalOperator::new(self.support.clone(), m)
    }

    pub fn from_operator(op: &LocalOperator) -> Self {
        OperatorSpec {
            support: op.support.clone(),
            matrix: op.matrix.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladModel {
    sites: usize,
    hamiltonian: Vec<LocalOperator>,
    jumps: Vec<LocalOperator>,
    /// `L†L` for each jump operator.
    jump_rates: Vec<LocalOperator>,
}

impl LindbladModel {
    pub fn new(
        sites: usize,
        hamiltonian: Vec<LocalOperator>,
        jumps: Vec<LocalOperator>,
    ) -> Result<Self> {
        for op in hamiltonian.iter().chain(&jumps) {
            op.check_sites(sites)?;
        }
        for op in &hamiltonian {
            let err = op.hermiticity_error();
            if err > 1e-12 {
                return Err(GhdoError::Input(format!(
                    "Hamiltonian term on {:?} is not Hermitian (error {err:e})",
                    op.support
                )));
            }
        }
        let jump_rates = jumps
            .iter()
            .map(|l| l.adjoint().compose(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(LindbladModel {
            sites,
            hamiltonian,
            jumps,
            jump_rates,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn hamiltonian(&self) -> &[LocalOperator] {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[LocalOperator] {
        &self.jumps
    }

    pub fn jump_rates(&self) -> &[LocalOperator] {
        &self.jump_rates
    }
}

/// Dissipative transverse-field Ising chain:
/// `H = V/4 Σ_⟨ij⟩ σᶻ_i σᶻ_j + g/2 Σ_i σˣ_i`, jumps `√γ σ⁻_i`.
///
/// With `periodic` the bond `(N−1, 0)` is added once, also for `N = 2`.
pub fn build_tfim(sites: usize, v: f64, g: f64, gamma: f64, periodic: bool) -> Result<LindbladModel> {
    if sites == 0 {
        return Err(GhdoError::Input("the chain needs at least one site".into()));
    }
    if gamma < 0.0 {
        return Err(GhdoError::Input(format!("gamma must be >= 0, got {gamma}")));
    }
    let mut hamiltonian = Vec::new();
    if sites >= 2 {
        let mut bonds: Vec<(usize, usize)> = (0..sites - 1).map(|i| (i, i + 1)).collect();
        if periodic {
            bonds.push((sites - 1, 0));
        }
        for (i, j) in bonds {
            hamiltonian.push(LocalOperator::zz(i, j).scaled(c(v / 4.0, 0.0)));
        }
    }
    for i in 0..sites {
        hamiltonian.push(LocalOperator::sigma_x(i).scaled(c(g / 2.0, 0.0)));
    }
    let jumps = (0..sites)
        .map(|i| LocalOperator::sigma_minus(i).scaled(c(gamma.sqrt(), 0.0)))
        .collect();
    LindbladModel::new(sites, hamiltonian, jumps)
}

/// Per-site overlaps `u_h = Σ_a ψσ ψη*`, failing when `|ρ(σ,η)|` underflows.
fn overlaps(
    ps: &AmplitudeTable,
    pe: &AmplitudeTable,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<Vec<Complex64>> {
    let u: Vec<Complex64> = (0..ps.sites())
        .map(|h| site_overlap(ps, pe, sigma, eta, h))
        .collect();
    let log_mod: f64 = u.iter().map(|z| z.norm().ln()).sum();
    if u.iter().any(|z| *z == ZERO) || log_mod < UNDERFLOW_THRESHOLD.ln() {
        return Err(GhdoError::DegenerateAmplitude);
    }
    Ok(u)
}

enum TableRef<'c> {
    Borrowed(&'c AmplitudeTable),
    Shared(Rc<AmplitudeTable>),
}

impl std::ops::Deref for TableRef<'_> {
    type Target = AmplitudeTable;

    fn deref(&self) -> &AmplitudeTable {
        match self {
            TableRef::Borrowed(t) => t,
            TableRef::Shared(t) => t,
        }
    }
}

/// `ρ(σ',η')/ρ(σ,η)` as a product of per-site ratios.
struct RatioEvaluator<'c, 'a, M: AmplitudeModel + ?Sized> {
    cache: &'c AmplitudeCache<'a, M>,
    sigma: SpinConfig,
    eta: SpinConfig,
    psi_sigma: Rc<AmplitudeTable>,
    psi_eta: Rc<AmplitudeTable>,
    inv_u: Vec<Complex64>,
    memo: Vec<(SpinConfig, Rc<AmplitudeTable>)>,
}

impl<'c, 'a, M: AmplitudeModel + ?Sized> RatioEvaluator<'c, 'a, M> {
    fn new(cache: &'c AmplitudeCache<'a, M>, sigma: SpinConfig, eta: SpinConfig) -> Result<Self> {
        let psi_sigma = Rc::new(cache.table(sigma).into_owned());
        let psi_eta = if eta == sigma {
            psi_sigma.clone()
        } else {
            Rc::new(cache.table(eta).into_owned())
        };
        let u = overlaps(&psi_sigma, &psi_eta, sigma, eta)?;
        Ok(RatioEvaluator {
            cache,
            sigma,
            eta,
            psi_sigma,
            psi_eta,
            inv_u: u.iter().map(|z| 1.0 / z).collect(),
            memo: Vec::new(),
        })
    }

    fn fetch(&mut self, cfg: SpinConfig) -> TableRef<'c> {
        if cfg == self.sigma {
            return TableRef::Shared(self.psi_sigma.clone());
        }
        if cfg == self.eta {
            return TableRef::Shared(self.psi_eta.clone());
        }
        match self.cache.table(cfg) {
            Cow::Borrowed(t) => TableRef::Borrowed(t),
            Cow::Owned(_) => {
                if let Some((_, t)) = self.memo.iter().find(|(c, _)| *c == cfg) {
                    return TableRef::Shared(t.clone());
                }
                let t = Rc::new(self.cache.model().amplitudes(cfg));
                self.memo.push((cfg, t.clone()));
                TableRef::Shared(t)
            }
        }
    }

    fn ratio(&mut self, s2: SpinConfig, e2: SpinConfig) -> Complex64 {
        let n = self.inv_u.len();
        // Sites before the first change share identical factors.
        let first = |a: SpinConfig, b: SpinConfig| (0..n).find(|&h| a.get(h) != b.get(h)).unwrap_or(n);
        let start = first(s2, self.sigma).min(first(e2, self.eta));
        if start == n {
            return Complex64::new(1.0, 0.0);
        }
        let ps = self.fetch(s2);
        let pe = self.fetch(e2);
        let mut r = Complex64::new(1.0, 0.0);
        for h in start..n {
            r *= site_overlap(&ps, &pe, s2, e2, h) * self.inv_u[h];
            if r == ZERO {
                break;
            }
        }
        r
    }
}

/// `A_loc(σ) = Σ_{σ'} ⟨σ|A|σ'⟩ ρ(σ',σ)/ρ(σ,σ)`.
pub fn a_loc<M: AmplitudeModel + ?Sized>(
    model: &M,
    op: &LocalOperator,
    sigma: SpinConfig,
) -> Result<Complex64> {
    a_loc_cached(&AmplitudeCache::direct(model), op, sigma)
}

pub fn a_loc_cached<M: AmplitudeModel + ?Sized>(
    cache: &AmplitudeCache<'_, M>,
    op: &LocalOperator,
    sigma: SpinConfig,
) -> Result<Complex64> {
    let mut ev = RatioEvaluator::new(cache, sigma, sigma)?;
    let mut acc = ZERO;
    op.for_each_connected(sigma, |s2, m| {
        acc += m * ev.ratio(s2, sigma);
    });
    Ok(acc)
}

/// `L_loc(σ,η) = ⟨σ|𝓛ρ|η⟩ / ⟨σ|ρ|η⟩`.
pub fn l_loc<M: AmplitudeModel + ?Sized>(
    model: &M,
    lind: &LindbladModel,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<Complex64> {
    l_loc_cached(&AmplitudeCache::direct(model), lind, sigma, eta)
}

pub fn l_loc_cached<M: AmplitudeModel + ?Sized>(
    cache: &AmplitudeCache<'_, M>,
    lind: &LindbladModel,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<Complex64> {
    let mut ev = RatioEvaluator::new(cache, sigma, eta)?;
    let mut acc = ZERO;
    for h in &lind.hamiltonian {
        // −i H ρ
        h.for_each_connected(sigma, |s2, m| acc += -I * m * ev.ratio(s2, eta));
        // +i ρ H, with ⟨η'|H|η⟩ = conj⟨η|H|η'⟩
        h.for_each_connected(eta, |e2, m| acc += I * m.conj() * ev.ratio(sigma, e2));
    }
    for (l, ldl) in lind.jumps.iter().zip(&lind.jump_rates) {
        let rows_s = l.connected_elements(sigma);
        let rows_e = l.connected_elements(eta);
        for &(s2, a) in &rows_s {
            for &(e2, b) in &rows_e {
                acc += a * b.conj() * ev.ratio(s2, e2);
            }
        }
        ldl.for_each_connected(sigma, |s2, m| acc += -0.5 * m * ev.ratio(s2, eta));
        ldl.for_each_connected(eta, |e2, m| acc += -0.5 * m.conj() * ev.ratio(sigma, e2));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghdo::from_classical;

    #[test]
    fn tfim_term_counts() {
        let m = build_tfim(2, 2.0, 1.0, 1.0, true).unwrap();
        let zz = m.hamiltonian().iter().filter(|o| o.support().len() == 2).count();
        assert_eq!(zz, 2);
        assert_eq!(m.hamiltonian().len() - zz, 2);
        assert_eq!(m.jumps().len(), 2);
        let open = build_tfim(4, 2.0, 1.0, 1.0, false).unwrap();
        assert_eq!(open.hamiltonian().iter().filter(|o| o.support().len() == 2).count(), 3);
        let ring = build_tfim(16, 2.0, 1.0, 1.0, true).unwrap();
        assert_eq!(ring.hamiltonian().iter().filter(|o| o.support().len() == 2).count(), 16);
    }

    #[test]
    fn connected_elements_of_paulis() {
        let s = SpinConfig::from_spins(&[1, -1, 1]).unwrap();
        let z = LocalOperator::sigma_z(1).connected_elements(s);
        assert_eq!(z, vec![(s, c(-1., 0.))]);
        let x = LocalOperator::sigma_x(0).connected_elements(s);
        assert_eq!(x, vec![(s.flipped(0), c(1., 0.))]);
        // ⟨σ|σ⁻_i|σ'⟩ ≠ 0 needs σ_i = ↓ and σ'_i = ↑.
        let m = LocalOperator::sigma_minus(1).connected_elements(s);
        assert_eq!(m, vec![(s.flipped(1), c(1., 0.))]);
        assert!(LocalOperator::sigma_minus(2).connected_elements(s).is_empty());
    }

    #[test]
    fn sigma_minus_matches_dense_action() {
        // ⟨σ|σ⁻|σ'⟩ read from the 2x2 matrix acting on basis vectors.
        let op = LocalOperator::sigma_minus(0);
        for sigma in SpinConfig::all(1) {
            for (s2, amp) in op.connected_elements(sigma) {
                // σ⁻|σ'⟩ has component amp on |σ⟩
                let col = op.matrix().column(s2.bit(0)).to_owned();
                assert_eq!(col[sigma.bit(0)], amp);
            }
        }
        // ⟨↓|σ⁻|↑⟩ = 1
        let down = SpinConfig::from_spins(&[-1]).unwrap();
        assert_eq!(op.connected_elements(down), vec![(down.flipped(0), c(1., 0.))]);
    }

    #[test]
    fn two_site_local_index() {
        let op = LocalOperator::zz(2, 0);
        let s = SpinConfig::from_spins(&[1, 1, -1]).unwrap();
        assert_eq!(op.connected_elements(s), vec![(s, c(-1., 0.))]);
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let bad = LocalOperator::sigma_minus(0);
        assert!(LindbladModel::new(1, vec![bad], vec![]).is_err());
        assert!(LindbladModel::new(1, vec![LocalOperator::sigma_x(3)], vec![]).is_err());
    }

    #[test]
    fn a_loc_of_sigma_z_is_spin_value() {
        let m = from_classical(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        for s in SpinConfig::all(2) {
            for site in 0..2 {
                let v = a_loc(&m, &LocalOperator::sigma_z(site), s).unwrap();
                assert_eq!(v, c(f64::from(s.get(site)), 0.0));
            }
        }
    }

    #[test]
    fn dark_state_has_zero_l_loc() {
        let mut p = vec![0.0; 2];
        p[0] = 1.0;
        let m = from_classical(&p).unwrap();
        let lind = LindbladModel::new(1, vec![], vec![LocalOperator::sigma_minus(0)]).unwrap();
        let down = SpinConfig::down(1);
        assert_eq!(l_loc(&m, &lind, down, down).unwrap(), ZERO);
    }

    #[test]
    fn operator_spec_round_trip() {
        let op = LocalOperator::sigma_y(1);
        let back = OperatorSpec::from_operator(&op).to_operator().unwrap();
        assert_eq!(back, op);
    }
}
