//! Time-dependent variational evolution of an AGHDO under a Lindbladian.
//!
//! Each step projects `dρ/dt = 𝓛ρ` onto the tangent space of the model. With
//! `O_i = ∂ log ρ(σ,η)/∂w_i` and `L_loc(σ,η)` averaged over `|ρ(σ,η)|²`,
//!
//! `S_ij = E[O_i* O_j] − E[O_i*] E[O_j]`, `F_i = E[O_i* L_loc] − E[O_i*] E[L_loc]`.
//!
//! Parameters are real, so the update solves `(Re S + λI) ẇ = Re F` and
//! takes an explicit Euler step `w ← w + dt ẇ`.
//!
//! `Re S` is never formed. Writing `Õ_k = √q_k (O_k − Ō)` for normalized
//! weights `q_k`, `Re S = Re(Õ)ᵀ Re(Õ) + Im(Õ)ᵀ Im(Õ)`, so the solver only
//! needs products with the two real `n × d` blocks.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{AmplitudeCache, DEFAULT_ENUMERATION_LIMIT};
use crate::cg::{conjugate_gradient, CgSolution};
use crate::error::{GhdoError, Result};
use crate::ghdo::{diagonal_from_table, element_from_tables};
use crate::lindblad::{a_loc_cached, l_loc_cached, LindbladModel, LocalOperator};
use crate::linalg::{real_gram, CMatrix};
use crate::model::VariationalModel;
use crate::sampling::{estimate_magnetizations, purity_from_samples, sample_joint_alpha_cached, JointSample};
use crate::spins::SpinConfig;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlphaRule {
    Fixed { value: f64 },
    /// Starts at `initial`, then every `interval` steps snaps the purity
    /// estimate, clamped to `[0.2, 0.8]`, to the nearest of 0.2, 0.5, 0.8.
    Adaptive { initial: f64, interval: usize },
}

impl AlphaRule {
    pub fn initial(&self) -> f64 {
        match *self {
            AlphaRule::Fixed { value } => value,
            AlphaRule::Adaptive { initial, .. } => initial,
        }
    }
}

pub fn snap_alpha(purity: f64) -> f64 {
    let p = purity.clamp(0.2, 0.8);
    [0.2, 0.5, 0.8]
        .into_iter()
        .min_by(|a, b| (a - p).abs().total_cmp(&(b - p).abs()))
        .unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdvpConfig {
    pub dt: f64,
    pub regularization: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub samples_per_step: usize,
    pub alpha: AlphaRule,
    pub max_steps: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    /// Replace sampling by an exact sum over all `4^N` pairs.
    pub exact_summation: bool,
    /// Enumerate and cache every amplitude table when `2^N` is at most this.
    pub enumeration_limit: usize,
}

impl Default for TdvpConfig {
    fn default() -> Self {
        TdvpConfig {
            dt: 1e-3,
            regularization: 1e-3,
            cg_tol: 1e-6,
            cg_max_iters: 500,
            samples_per_step: 4096,
            alpha: AlphaRule::Fixed { value: 0.5 },
            max_steps: 10_000,
            convergence_window: 200,
            convergence_tol: 1e-3,
            exact_summation: false,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

impl TdvpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GhdoError::Config(msg));
        if !(self.dt >= 0.0) || !self.dt.is_finite() {
            return bad(format!("tdvp.dt must be a nonnegative number, got {}", self.dt));
        }
        if !(self.regularization >= 0.0) {
            return bad(format!("tdvp.regularization must be >= 0, got {}", self.regularization));
        }
        if !(self.cg_tol > 0.0) {
            return bad(format!("tdvp.cg_tol must be > 0, got {}", self.cg_tol));
        }
        if self.samples_per_step == 0 {
            return bad("tdvp.samples_per_step must be at least 1".into());
        }
        if self.convergence_window < 2 {
            return bad("tdvp.convergence_window must be at least 2".into());
        }
        let a = self.alpha.initial();
        if !(0.0..=1.0).contains(&a) {
            return bad(format!("tdvp.alpha must lie in [0, 1], got {a}"));
        }
        if let AlphaRule::Adaptive { interval: 0, .. } = self.alpha {
            return bad("tdvp.alpha interval must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub l_loc_sq: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
    pub purity: f64,
    pub renyi2: f64,
    pub alpha: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub cg_converged: bool,
    pub ess: f64,
}

/// Every pair `(σ,η)` weighted by the exact `|ρ(σ,η)|²`.
pub fn full_summation_batch<M: VariationalModel + ?Sized>(cache: &AmplitudeCache<'_, M>) -> Vec<JointSample> {
    let n = cache.model().sites();
    let configs: Vec<SpinConfig> = SpinConfig::all(n).collect();
    configs
        .par_iter()
        .flat_map_iter(|&s| {
            let ts = cache.table(s).into_owned();
            configs
                .iter()
                .map(|&e| {
                    let rho = element_from_tables(&ts, &cache.table(e), s, e);
                    JointSample {
                        sigma: s,
                        eta: e,
                        log_p_alpha: 0.0,
                        log_rho: rho.ln(),
                        weight: rho.norm_sqr(),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Centered, weight-scaled log-derivatives and local Liouvillian of a batch,
/// restricted to parameters whose derivative is not identically zero.
pub struct GeometricSystem {
    num_params: usize,
    live: Vec<usize>,
    o_re: Array2<f64>,
    o_im: Array2<f64>,
    l_re: Array1<f64>,
    l_im: Array1<f64>,
    /// `E[|L_loc|²]` under the batch weights.
    pub l_loc_sq: f64,
    pub ess: f64,
}

impl GeometricSystem {
    pub fn build<M: VariationalModel + ?Sized>(
        cache: &AmplitudeCache<'_, M>,
        lind: &LindbladModel,
        batch: &[JointSample],
    ) -> Result<Self> {
        let model = cache.model();
        let d = model.num_params();
        let total: f64 = batch.iter().map(|s| s.weight).sum();
        let sum_sq: f64 = batch.iter().map(|s| s.weight * s.weight).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(GhdoError::DegenerateBatch(format!("total weight {total}")));
        }

        // identical pairs share one evaluation
        let mut merged: BTreeMap<(SpinConfig, SpinConfig), f64> = BTreeMap::new();
        for s in batch.iter().filter(|s| s.weight > 0.0) {
            *merged.entry((s.sigma, s.eta)).or_insert(0.0) += s.weight;
        }
        let pairs: Vec<((SpinConfig, SpinConfig), f64)> = merged.into_iter().collect();
        let evaluated: Vec<Option<(f64, Vec<Complex64>, Complex64)>> = pairs
            .par_iter()
            .map(|&((s, e), w)| {
                let (_, o) = model.log_derivatives(s, e).ok()?;
                let l = l_loc_cached(cache, lind, s, e).ok()?;
                Some((w, o, l))
            })
            .collect();
        let rows: Vec<(f64, Vec<Complex64>, Complex64)> = evaluated.into_iter().flatten().collect();
        let kept: f64 = rows.iter().map(|r| r.0).sum();
        if rows.is_empty() || !(kept > 0.0) {
            return Err(GhdoError::DegenerateBatch("every sample was degenerate".into()));
        }

        let mut mean_o = vec![ZERO; d];
        let mut mean_l = ZERO;
        let mut l_loc_sq = 0.0;
        for (w, o, l) in &rows {
            let q = w / kept;
            for (m, x) in mean_o.iter_mut().zip(o) {
                *m += x * q;
            }
            mean_l += l * q;
            l_loc_sq += q * l.norm_sqr();
        }
        let live: Vec<usize> = (0..d)
            .filter(|&j| rows.iter().any(|r| r.1[j] != ZERO))
            .collect();
        let n = rows.len();
        let mut o_re = Array2::zeros((n, live.len()));
        let mut o_im = Array2::zeros((n, live.len()));
        let mut l_re = Array1::zeros(n);
        let mut l_im = Array1::zeros(n);
        for (k, (w, o, l)) in rows.iter().enumerate() {
            let sq = (w / kept).sqrt();
            for (c, &j) in live.iter().enumerate() {
                let z = (o[j] - mean_o[j]) * sq;
                o_re[[k, c]] = z.re;
                o_im[[k, c]] = z.im;
            }
            let z = (l - mean_l) * sq;
            l_re[k] = z.re;
            l_im[k] = z.im;
        }
        Ok(GeometricSystem {
            num_params: d,
            live,
            o_re,
            o_im,
            l_re,
            l_im,
            l_loc_sq,
            ess: total * total / sum_sq,
        })
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn live_params(&self) -> &[usize] {
        &self.live
    }

    /// Dense complex `S` (Hermitian) and `F` over all `d` parameters.
    pub fn to_dense(&self) -> (CMatrix, Vec<Complex64>) {
        let d = self.num_params;
        let o = Array2::from_shape_fn(self.o_re.dim(), |(k, c)| {
            Complex64::new(self.o_re[[k, c]], self.o_im[[k, c]])
        });
        let l = Array1::from_shape_fn(self.l_re.len(), |k| Complex64::new(self.l_re[k], self.l_im[k]));
        let oh = o.t().mapv(|z| z.conj());
        let s_live = oh.dot(&o);
        let f_live = oh.dot(&l);
        let mut s = CMatrix::zeros((d, d));
        let mut f = vec![ZERO; d];
        for (a, &i) in self.live.iter().enumerate() {
            f[i] = f_live[a];
            for (b, &j) in self.live.iter().enumerate() {
                s[[i, j]] = 0.5 * (s_live[[a, b]] + s_live[[b, a]].conj());
            }
        }
        (s, f)
    }

    /// `Re S · x` on the live parameters.
    fn apply_re_s(&self, x: &[f64]) -> Vec<f64> {
        let x = ndarray::ArrayView1::from(x);
        let zr = self.o_re.dot(&x);
        let zi = self.o_im.dot(&x);
        (self.o_re.t().dot(&zr) + self.o_im.t().dot(&zi)).to_vec()
    }

    fn re_f(&self) -> Vec<f64> {
        (self.o_re.t().dot(&self.l_re) + self.o_im.t().dot(&self.l_im)).to_vec()
    }

    /// Solves `(Re S + λI) ẇ = Re F` and scatters `ẇ` back to all `d`
    /// parameters.
    pub fn solve(&self, lambda: f64, tol: f64, max_iters: usize) -> CgSolution<f64> {
        let rhs = self.re_f();
        // with more rows than live parameters a one-off product is cheaper
        // than two passes over the rows per iteration
        let dense = (2 * self.o_re.nrows() >= self.live.len())
            .then(|| real_gram(&[&self.o_re, &self.o_im]));
        let sol = conjugate_gradient(
            |v: &[f64]| {
                let mut out = match &dense {
                    Some(g) => g.dot(&ndarray::ArrayView1::from(v)).to_vec(),
                    None => self.apply_re_s(v),
                };
                for (o, x) in out.iter_mut().zip(v) {
                    *o += lambda * x;
                }
                out
            },
            &rhs,
            tol,
            max_iters,
        );
        let mut full = vec![0.0; self.num_params];
        for (c, &j) in self.live.iter().enumerate() {
            full[j] = sol.x[c];
        }
        CgSolution { x: full, ..sol }
    }
}

/// Dense `S` and `F` estimated from a batch.
pub fn estimate_s_f<M: VariationalModel + ?Sized>(
    model: &M,
    lind: &LindbladModel,
    batch: &[JointSample],
) -> Result<(CMatrix, Vec<Complex64>)> {
    let cache = AmplitudeCache::auto(model, DEFAULT_ENUMERATION_LIMIT);
    Ok(GeometricSystem::build(&cache, lind, batch)?.to_dense())
}

/// Magnetizations and purity computed by enumeration of the full space.
pub fn exact_observables<M: VariationalModel + ?Sized>(cache: &AmplitudeCache<'_, M>) -> Result<([f64; 3], f64)> {
    let n = cache.model().sites();
    let mut mags = [0.0; 3];
    for s in SpinConfig::all(n) {
        let p = diagonal_from_table(&cache.table(s), s);
        if p == 0.0 {
            continue;
        }
        for i in 0..n {
            mags[0] += p * a_loc_cached(cache, &LocalOperator::sigma_x(i), s)?.re;
            mags[1] += p * a_loc_cached(cache, &LocalOperator::sigma_y(i), s)?.re;
            mags[2] += p * a_loc_cached(cache, &LocalOperator::sigma_z(i), s)?.re;
        }
    }
    let purity = full_summation_batch(cache).iter().map(|s| s.weight).sum();
    Ok((mags.map(|m| m / n as f64), purity))
}

/// Advances the model by one Euler step. On error the parameters are left
/// untouched.
pub fn step<M, R>(
    model: &mut M,
    lind: &LindbladModel,
    config: &TdvpConfig,
    alpha: f64,
    step_index: usize,
    rng: &mut R,
) -> Result<DiagnosticsRow>
where
    M: VariationalModel,
    R: Rng + ?Sized,
{
    if lind.sites() != model.sites() {
        return Err(GhdoError::Input(format!(
            "model has {} sites but the Lindbladian has {}",
            model.sites(),
            lind.sites()
        )));
    }
    let (update, row) = {
        let cache = AmplitudeCache::auto(&*model, config.enumeration_limit);
        let (batch, mags, purity) = if config.exact_summation {
            let (mags, purity) = exact_observables(&cache)?;
            (full_summation_batch(&cache), mags, purity)
        } else {
            let batch = sample_joint_alpha_cached(&cache, alpha, config.samples_per_step, rng)?;
            let sigmas: Vec<SpinConfig> = batch.iter().map(|s| s.sigma).collect();
            let m = estimate_magnetizations(&cache, &sigmas)?;
            let purity = purity_from_samples(&batch)?.purity;
            (batch, [m[0].mean.re, m[1].mean.re, m[2].mean.re], purity)
        };
        let system = GeometricSystem::build(&cache, lind, &batch)?;
        let sol = system.solve(config.regularization, config.cg_tol, config.cg_max_iters);
        if sol.x.iter().any(|v| !v.is_finite()) {
            return Err(GhdoError::Numerical("non-finite parameter update".into()));
        }
        let row = DiagnosticsRow {
            step: step_index,
            time: (step_index + 1) as f64 * config.dt,
            l_loc_sq: system.l_loc_sq,
            mx: mags[0],
            my: mags[1],
            mz: mags[2],
            purity,
            renyi2: -purity.log2(),
            alpha,
            cg_iterations: sol.iterations,
            cg_residual: sol.residual,
            cg_converged: sol.converged,
            ess: system.ess,
        };
        (sol.x, row)
    };
    let mut params = model.params();
    for (p, u) in params.iter_mut().zip(&update) {
        *p += config.dt * u;
    }
    model.set_params(&params)?;
    Ok(row)
}

#[derive(Clone, Debug)]
pub struct TdvpRun {
    pub diagnostics: Vec<DiagnosticsRow>,
    pub converged: bool,
    pub final_alpha: f64,
}

/// True when every tracked observable (`mx`, `mz`, purity) differs between
/// the two halves of the trailing window by at most `tol`, relative to its
/// magnitude floored at 0.1.
pub fn has_converged(rows: &[DiagnosticsRow], window: usize, tol: f64) -> bool {
    if rows.len() < window || window < 2 {
        return false;
    }
    let tail = &rows[rows.len() - window..];
    let (first, second) = tail.split_at(window / 2);
    let mean = |r: &[DiagnosticsRow], f: fn(&DiagnosticsRow) -> f64| r.iter().map(f).sum::<f64>() / r.len() as f64;
    let tracked: [fn(&DiagnosticsRow) -> f64; 3] = [|r| r.mx, |r| r.mz, |r| r.purity];
    tracked.iter().all(|&f| {
        let (a, b) = (mean(first, f), mean(second, f));
        (a - b).abs() <= tol * (0.5 * (a + b)).abs().max(0.1)
    })
}

/// Steps until convergence or `max_steps`, calling `observe` after every
/// step with the updated model.
pub fn run_with_observer<M, R, F>(
    model: &mut M,
    lind: &LindbladModel,
    config: &TdvpConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<TdvpRun>
where
    M: VariationalModel,
    R: Rng + ?Sized,
    F: FnMut(&M, &DiagnosticsRow) -> Result<()>,
{
    config.validate()?;
    let mut alpha = config.alpha.initial();
    let mut diagnostics = Vec::new();
    let mut converged = false;
    for k in 0..config.max_steps {
        if let AlphaRule::Adaptive { interval, .. } = config.alpha {
            if k > 0 && k % interval == 0 {
                alpha = snap_alpha(diagnostics.last().map_or(alpha, |r: &DiagnosticsRow| r.purity));
            }
        }
        let row = step(model, lind, config, alpha, k, rng)?;
        observe(model, &row)?;
        diagnostics.push(row);
        if has_converged(&diagnostics, config.convergence_window, config.convergence_tol) {
            converged = true;
            break;
        }
    }
    Ok(TdvpRun {
        diagnostics,
        converged,
        final_alpha: alpha,
    })
}

pub fn run_to_steady_state<M, R>(model: &mut M, lind: &LindbladModel, config: &TdvpConfig, rng: &mut R) -> Result<TdvpRun>
where
    M: VariationalModel,
    R: Rng + ?Sized,
{
    run_with_observer(model, lind, config, rng, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghdo::from_dense;
    use crate::lindblad::build_tfim;
    use crate::netcore::{AghdoNetwork, NetworkSpec};
    use crate::oracle::steady_state_dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn network(n: usize, r: usize, seed: u64) -> AghdoNetwork {
        AghdoNetwork::new(NetworkSpec {
            sites: n,
            local_rank: r,
            feature_densities: vec![2],
            init_width: 0.3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn repeated_pair_gives_zero_s() {
        let m = network(2, 2, 1);
        let lind = build_tfim(2, 2.0, 1.0, 1.0, true).unwrap();
        let s = SpinConfig::from_index(2, 1);
        let e = SpinConfig::from_index(2, 2);
        let sample = JointSample {
            sigma: s,
            eta: e,
            log_p_alpha: 0.0,
            log_rho: ZERO,
            weight: 0.3,
        };
        let (smat, f) = estimate_s_f(&m, &lind, &[sample; 5]).unwrap();
        assert!(smat.iter().all(|z| z.norm() < 1e-14));
        assert!(f.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn exact_steady_state_is_a_fixed_point() {
        let lind = build_tfim(2, 2.0, 2.0, 1.0, true).unwrap();
        let rho = steady_state_dense(&lind).unwrap();
        let model = from_dense(rho.matrix()).unwrap();
        let cache = AmplitudeCache::enumerated(&model);
        let batch = full_summation_batch(&cache);
        let (_, f) = GeometricSystem::build(&cache, &lind, &batch).unwrap().to_dense();
        let worst = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "max |F| = {worst}");
    }

    #[test]
    fn zero_time_step_keeps_parameters() {
        let mut m = network(2, 2, 3);
        let before = m.params();
        let lind = build_tfim(2, 2.0, 1.0, 1.0, true).unwrap();
        let config = TdvpConfig {
            dt: 0.0,
            samples_per_step: 256,
            ..Default::default()
        };
        step(&mut m, &lind, &config, 0.5, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(before, m.params());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let lind = build_tfim(3, 2.0, 1.0, 1.0, true).unwrap();
        let config = TdvpConfig {
            dt: 0.01,
            samples_per_step: 256,
            max_steps: 5,
            ..Default::default()
        };
        let run = || {
            let mut m = network(3, 2, 4);
            let r = run_to_steady_state(&mut m, &lind, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            (m.params(), r.diagnostics)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parameter_change_is_linear_in_dt() {
        let lind = build_tfim(2, 2.0, 1.0, 1.0, true).unwrap();
        let delta = |dt: f64| {
            let mut m = network(2, 2, 5);
            let before = m.params();
            let config = TdvpConfig {
                dt,
                exact_summation: true,
                ..Default::default()
            };
            step(&mut m, &lind, &config, 0.5, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            m.params().iter().zip(&before).map(|(a, b)| a - b).collect::<Vec<_>>()
        };
        let full = delta(1e-3);
        let half = delta(5e-4);
        for (a, b) in full.iter().zip(&half) {
            assert!((a - 2.0 * b).abs() <= 1e-9 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn adaptive_alpha_snaps() {
        assert_eq!(snap_alpha(0.05), 0.2);
        assert_eq!(snap_alpha(0.4), 0.5);
        assert_eq!(snap_alpha(0.99), 0.8);
    }

    #[test]
    fn convergence_requires_flat_window() {
        let row = |mz: f64| DiagnosticsRow {
            step: 0,
            time: 0.0,
            l_loc_sq: 0.0,
            mx: 0.0,
            my: 0.0,
            mz,
            purity: 0.5,
            renyi2: 1.0,
            alpha: 0.5,
            cg_iterations: 0,
            cg_residual: 0.0,
            cg_converged: true,
            ess: 1.0,
        };
        let flat: Vec<_> = (0..10).map(|_| row(-0.3)).collect();
        assert!(has_converged(&flat, 10, 1e-3));
        let drifting: Vec<_> = (0..10).map(|k| row(-0.3 - 0.01 * k as f64)).collect();
        assert!(!has_converged(&drifting, 10, 1e-3));
        assert!(!has_converged(&flat[..5], 10, 1e-3));
    }
}
