//! Direct autoregressive sampling and importance-weighted estimators.
//!
//! The diagonal `p(σ) = ρ(σ,σ)` is sampled site by site from its
//! conditionals. Pairs `(σ,η)` are drawn from the proposal
//!
//! `p_α(σ,η) = p(σ) ∏_h [α p(η_h|η_{<h}) + (1−α) δ(η_h, σ_h)]`,
//!
//! realised by flipping an independent coin with bias `α` at each site: on
//! heads `η_h` is drawn from its own conditional, on tails it copies `σ_h`.
//! Each pair carries the importance weight `w = |ρ(σ,η)|² / p_α(σ,η)`.
//!
//! Samples are produced in fixed-size chunks, each with its own ChaCha
//! stream derived from one master seed, so results do not depend on the
//! number of worker threads.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cache::AmplitudeCache;
use crate::error::{GhdoError, Result};
use crate::ghdo::{conditionals_from_table, log_element_from_tables};
use crate::lindblad::{a_loc_cached, LocalOperator};
use crate::model::AmplitudeModel;
use crate::spins::{AmplitudeTable, SpinConfig};

/// Conditional probabilities are floored to this before taking logs.
pub const CONDITIONAL_FLOOR: f64 = 1e-12;
pub const JACKKNIFE_BLOCKS: usize = 32;
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointSample {
    pub sigma: SpinConfig,
    pub eta: SpinConfig,
    pub log_p_alpha: f64,
    /// `log ρ(σ,η)`; the real part is `−∞` when the element vanishes.
    pub log_rho: Complex64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorResult {
    pub mean: Complex64,
    pub std_error: f64,
    pub n_samples: usize,
    pub effective_sample_size: f64,
    /// Samples dropped because their amplitude underflowed.
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PurityEstimate {
    pub purity: f64,
    pub purity_error: f64,
    pub renyi2: f64,
    pub renyi2_error: f64,
    pub n_samples: usize,
}

fn floored(p: [f64; 2]) -> [f64; 2] {
    let a = p[0].max(CONDITIONAL_FLOOR);
    let b = p[1].max(CONDITIONAL_FLOOR);
    [a / (a + b), b / (a + b)]
}

fn draw_bit<R: Rng + ?Sized>(p: [f64; 2], rng: &mut R) -> usize {
    usize::from(rng.gen::<f64>() >= p[0])
}

fn chunk_rngs(master: u64, n: usize) -> Vec<(ChaCha8Rng, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(c as u64);
            (rng, CHUNK.min(n - c * CHUNK))
        })
        .collect()
}

/// Walks the autoregressive chain for one configuration, returning the
/// sampled configuration and the table that was current at the last site.
/// Because site `h` only depends on `σ_{<h}`, that table is exact for the
/// full configuration.
fn sample_chain<M, R>(cache: &AmplitudeCache<'_, M>, rng: &mut R) -> (SpinConfig, AmplitudeTable, f64)
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    let n = cache.model().sites();
    let mut cfg = SpinConfig::down(n);
    let mut log_p = 0.0;
    let mut table = cache.table(cfg).into_owned();
    for h in 0..n {
        if h > 0 {
            table = cache.table(cfg).into_owned();
        }
        let p = floored(conditionals_from_table(&table, h));
        let b = draw_bit(p, rng);
        log_p += p[b].ln();
        cfg.set_bit(h, b);
    }
    (cfg, table, log_p)
}

pub fn sample_diagonal<M, R>(model: &M, n: usize, rng: &mut R) -> Vec<SpinConfig>
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    sample_diagonal_cached(&AmplitudeCache::direct(model), n, rng)
}

pub fn sample_diagonal_cached<M, R>(cache: &AmplitudeCache<'_, M>, n: usize, rng: &mut R) -> Vec<SpinConfig>
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    let master = rng.gen::<u64>();
    chunk_rngs(master, n)
        .into_par_iter()
        .flat_map_iter(|(mut rng, count)| {
            (0..count)
                .map(|_| sample_chain(cache, &mut rng).0)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GhdoError::Input(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn sample_pair<M, R>(cache: &AmplitudeCache<'_, M>, alpha: f64, rng: &mut R) -> JointSample
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    let n = cache.model().sites();
    let mut sigma = SpinConfig::down(n);
    let mut eta = SpinConfig::down(n);
    let mut sigma_table = cache.table(sigma).into_owned();
    let mut eta_table: Option<AmplitudeTable> = None;
    let mut log_p_alpha = 0.0;
    for h in 0..n {
        if h > 0 {
            sigma_table = cache.table(sigma).into_owned();
        }
        let ps = floored(conditionals_from_table(&sigma_table, h));
        let bs = draw_bit(ps, rng);
        sigma.set_bit(h, bs);

        // η shares σ's table while the prefixes agree.
        let prefixes_agree = eta.prefix(h) == sigma.prefix(h);
        let pe = if prefixes_agree {
            eta_table = None;
            ps
        } else {
            let t = eta_table.insert(cache.table(eta).into_owned());
            floored(conditionals_from_table(t, h))
        };
        let be = if rng.gen::<f64>() < alpha {
            draw_bit(pe, rng)
        } else {
            bs
        };
        eta.set_bit(h, be);
        let copy = if be == bs { 1.0 - alpha } else { 0.0 };
        log_p_alpha += ps[bs].ln() + (alpha * pe[be] + copy).ln();
    }
    let eta_full = if eta == sigma {
        sigma_table.clone()
    } else {
        cache.table(eta).into_owned()
    };
    let (log_rho, weight) = match log_element_from_tables(&sigma_table, &eta_full, sigma, eta) {
        Ok(l) => (l, (2.0 * l.re - log_p_alpha).exp()),
        Err(_) => (Complex64::new(f64::NEG_INFINITY, 0.0), 0.0),
    };
    JointSample {
        sigma,
        eta,
        log_p_alpha,
        log_rho,
        weight,
    }
}

pub fn sample_joint_alpha<M, R>(model: &M, alpha: f64, n: usize, rng: &mut R) -> Result<Vec<JointSample>>
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    sample_joint_alpha_cached(&AmplitudeCache::direct(model), alpha, n, rng)
}

pub fn sample_joint_alpha_cached<M, R>(
    cache: &AmplitudeCache<'_, M>,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<JointSample>>
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    check_alpha(alpha)?;
    let master = rng.gen::<u64>();
    Ok(chunk_rngs(master, n)
        .into_par_iter()
        .flat_map_iter(|(mut rng, count)| {
            (0..count)
                .map(|_| sample_pair(cache, alpha, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Exact `log p_α(σ,η)` under the floored conditionals used by the sampler.
pub fn log_p_alpha<M: AmplitudeModel + ?Sized>(
    cache: &AmplitudeCache<'_, M>,
    alpha: f64,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> f64 {
    let ts = cache.table(sigma);
    let te = cache.table(eta);
    let mut acc = 0.0;
    for h in 0..sigma.sites() {
        let ps = floored(conditionals_from_table(&ts, h));
        let pe = floored(conditionals_from_table(&te, h));
        let (bs, be) = (sigma.bit(h), eta.bit(h));
        let copy = if bs == be { 1.0 - alpha } else { 0.0 };
        acc += ps[bs].ln() + (alpha * pe[be] + copy).ln();
    }
    acc
}

/// Upper bound `α^{−N}` on importance weights, including round-off slack.
pub fn weight_bound(alpha: f64, sites: usize) -> f64 {
    alpha.powi(-(sites as i32)) * (1.0 + 1e-9)
}

/// Self-normalized weighted mean `Σ w f / Σ w` with a blocked jackknife error.
pub fn weighted_mean(weights: &[f64], values: &[Complex64]) -> Result<EstimatorResult> {
    assert_eq!(weights.len(), values.len());
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(GhdoError::DegenerateBatch(format!(
            "total importance weight is {total}"
        )));
    }
    let n = weights.len();
    let weighted: Complex64 = weights.iter().zip(values).map(|(w, f)| f * *w).sum();
    let mean = weighted / total;
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();

    let blocks = JACKKNIFE_BLOCKS.min(n);
    let std_error = if blocks < 2 {
        f64::INFINITY
    } else {
        let mut estimates = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let (lo, hi) = (b * n / blocks, (b + 1) * n / blocks);
            let bw: f64 = weights[lo..hi].iter().sum();
            let bf: Complex64 = weights[lo..hi]
                .iter()
                .zip(&values[lo..hi])
                .map(|(w, f)| f * *w)
                .sum();
            let rest = total - bw;
            if rest > 0.0 {
                estimates.push((weighted - bf) / rest);
            }
        }
        let k = estimates.len() as f64;
        if estimates.len() < 2 {
            f64::INFINITY
        } else {
            let centre: Complex64 = estimates.iter().sum::<Complex64>() / k;
            let spread: f64 = estimates.iter().map(|e| (e - centre).norm_sqr()).sum();
            ((k - 1.0) / k * spread).sqrt()
        }
    };
    Ok(EstimatorResult {
        mean,
        std_error,
        n_samples: n,
        effective_sample_size: total * total / sum_sq,
        skipped: 0,
    })
}

/// `Σ w f(σ,η) / Σ w` over a batch drawn with a single α.
pub fn superop_expectation<F>(samples: &[JointSample], f: F) -> Result<EstimatorResult>
where
    F: Fn(&JointSample) -> Complex64,
{
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let values: Vec<Complex64> = samples
        .iter()
        .map(|s| if s.weight > 0.0 { f(s) } else { Complex64::new(0.0, 0.0) })
        .collect();
    weighted_mean(&weights, &values)
}

/// `Tr ρ² = E_{p_α}[w]` from a joint batch.
pub fn purity_from_samples(samples: &[JointSample]) -> Result<PurityEstimate> {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return Err(GhdoError::DegenerateBatch("empty batch".into()));
    }
    let purity = samples.iter().map(|s| s.weight).sum::<f64>() / n;
    if !(purity > 0.0) || !purity.is_finite() {
        return Err(GhdoError::DegenerateBatch(format!("purity estimate is {purity}")));
    }
    let var = samples.iter().map(|s| (s.weight - purity).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let purity_error = (var / n).sqrt();
    Ok(PurityEstimate {
        purity,
        purity_error,
        renyi2: -purity.log2(),
        renyi2_error: purity_error / (purity * std::f64::consts::LN_2),
        n_samples: samples.len(),
    })
}

pub fn estimate_purity_renyi2<M, R>(model: &M, alpha: f64, n: usize, rng: &mut R) -> Result<PurityEstimate>
where
    M: AmplitudeModel + ?Sized,
    R: Rng + ?Sized,
{
    let cache = AmplitudeCache::auto(model, crate::cache::DEFAULT_ENUMERATION_LIMIT);
    purity_from_samples(&sample_joint_alpha_cached(&cache, alpha, n, rng)?)
}

/// Mean of a per-configuration local estimator over diagonal samples.
/// Configurations whose estimator fails are skipped and counted.
pub fn estimate_local<F>(configs: &[SpinConfig], local: F) -> Result<EstimatorResult>
where
    F: Fn(SpinConfig) -> Result<Complex64> + Sync,
{
    let evaluated: Vec<Option<Complex64>> = configs.par_iter().map(|&c| local(c).ok()).collect();
    let values: Vec<Complex64> = evaluated.iter().flatten().copied().collect();
    let skipped = configs.len() - values.len();
    let mut result = weighted_mean(&vec![1.0; values.len()], &values)?;
    result.skipped = skipped;
    Ok(result)
}

/// `⟨A⟩` as the mean of `A_loc(σ)` over diagonal samples.
pub fn estimate_observable<M: AmplitudeModel + ?Sized>(
    cache: &AmplitudeCache<'_, M>,
    op: &LocalOperator,
    configs: &[SpinConfig],
) -> Result<EstimatorResult> {
    estimate_local(configs, |c| a_loc_cached(cache, op, c))
}

/// Site-averaged `(⟨σˣ⟩, ⟨σʸ⟩, ⟨σᶻ⟩)`.
pub fn estimate_magnetizations<M: AmplitudeModel + ?Sized>(
    cache: &AmplitudeCache<'_, M>,
    configs: &[SpinConfig],
) -> Result<[EstimatorResult; 3]> {
    let n = cache.model().sites();
    let build: [fn(usize) -> LocalOperator; 3] =
        [LocalOperator::sigma_x, LocalOperator::sigma_y, LocalOperator::sigma_z];
    let mut out = Vec::with_capacity(3);
    for make in build {
        let ops: Vec<LocalOperator> = (0..n).map(make).collect();
        out.push(estimate_local(configs, |c| {
            let mut acc = Complex64::new(0.0, 0.0);
            for op in &ops {
                acc += a_loc_cached(cache, op, c)?;
            }
            Ok(acc / n as f64)
        })?);
    }
    Ok([out[0], out[1], out[2]])
}

/// Writes one tab-separated line per sample:
/// `sigma eta weight log_rho_re log_rho_im log_p_alpha`.
pub fn write_sample_dump<W: Write>(mut out: W, samples: &[JointSample]) -> std::io::Result<()> {
    writeln!(out, "sigma\teta\tweight\tlog_rho_re\tlog_rho_im\tlog_p_alpha")?;
    for s in samples {
        writeln!(
            out,
            "{}\t{}\t{:e}\t{:e}\t{:e}\t{:e}",
            s.sigma, s.eta, s.weight, s.log_rho.re, s.log_rho.im, s.log_p_alpha
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghdo::{conditionals, diagonal, from_classical};
    use crate::netcore::{AghdoNetwork, NetworkSpec};
    use std::collections::HashMap;

    fn network(n: usize, r: usize, width: f64, seed: u64) -> AghdoNetwork {
        AghdoNetwork::new(NetworkSpec {
            sites: n,
            local_rank: r,
            feature_densities: vec![2],
            init_width: width,
            seed,
        })
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn histogram<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>) -> HashMap<K, f64> {
        let mut h = HashMap::new();
        for k in items {
            *h.entry(k).or_insert(0.0) += 1.0;
        }
        h
    }

    #[test]
    fn point_mass_always_sampled() {
        let mut p = vec![0.0; 8];
        p[5] = 1.0;
        let m = from_classical(&p).unwrap();
        let s = sample_diagonal(&m, 1000, &mut rng(1));
        assert!(s.iter().all(|c| c.index() == 5));
    }

    #[test]
    fn uniform_frequencies() {
        let m = from_classical(&[0.25; 4]).unwrap();
        let s = sample_diagonal(&m, 100_000, &mut rng(2));
        let h = histogram(s.iter().map(|c| c.index()));
        for k in 0..4 {
            assert!((h[&k] / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn diagonal_sampler_matches_enumeration() {
        let m = network(3, 2, 0.8, 7);
        let s = sample_diagonal(&m, 100_000, &mut rng(3));
        let h = histogram(s.iter().map(|c| c.index()));
        let tv: f64 = SpinConfig::all(3)
            .map(|c| (h.get(&c.index()).copied().unwrap_or(0.0) / 1e5 - diagonal(&m, c)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.01, "tv = {tv}");
    }

    /// `p_α` assembled from the model's conditionals without the floor.
    fn p_alpha_reference(m: &AghdoNetwork, alpha: f64, s: SpinConfig, e: SpinConfig) -> f64 {
        let mut p = diagonal(m, s);
        for h in 0..s.sites() {
            let pe = conditionals(m, e, h)[e.bit(h)];
            p *= alpha * pe + if s.bit(h) == e.bit(h) { 1.0 - alpha } else { 0.0 };
        }
        p
    }

    #[test]
    fn joint_sampler_matches_enumeration() {
        let m = network(2, 2, 0.8, 11);
        for alpha in [0.0, 0.5, 1.0] {
            let s = sample_joint_alpha(&m, alpha, 100_000, &mut rng(4)).unwrap();
            let h = histogram(s.iter().map(|x| (x.sigma.index(), x.eta.index())));
            let mut tv = 0.0;
            for a in SpinConfig::all(2) {
                for b in SpinConfig::all(2) {
                    let emp = h.get(&(a.index(), b.index())).copied().unwrap_or(0.0) / 1e5;
                    tv += (emp - p_alpha_reference(&m, alpha, a, b)).abs() / 2.0;
                }
            }
            assert!(tv <= 0.01, "alpha {alpha}: tv = {tv}");
            let bound = weight_bound(alpha, 2);
            assert!(s.iter().all(|x| x.weight <= bound));
        }
    }

    #[test]
    fn limits_of_alpha() {
        let m = network(3, 2, 0.5, 5);
        let s0 = sample_joint_alpha(&m, 0.0, 2000, &mut rng(5)).unwrap();
        assert!(s0.iter().all(|x| x.sigma == x.eta));
        let cache = AmplitudeCache::enumerated(&m);
        for x in sample_joint_alpha(&m, 1.0, 200, &mut rng(6)).unwrap() {
            let want = diagonal(&m, x.sigma).ln() + diagonal(&m, x.eta).ln();
            assert!((x.log_p_alpha - want).abs() < 1e-10);
            assert!((log_p_alpha(&cache, 1.0, x.sigma, x.eta) - x.log_p_alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_determinism() {
        let m = network(4, 2, 0.3, 9);
        let a = sample_joint_alpha(&m, 0.5, 1500, &mut rng(8)).unwrap();
        let b = sample_joint_alpha(&m, 0.5, 1500, &mut rng(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_alpha_rejected() {
        let m = network(2, 1, 0.1, 1);
        assert!(sample_joint_alpha(&m, 1.5, 10, &mut rng(1)).is_err());
    }

    #[test]
    fn constant_function_has_unit_mean() {
        let m = network(3, 2, 0.5, 3);
        let s = sample_joint_alpha(&m, 0.5, 500, &mut rng(9)).unwrap();
        let r = superop_expectation(&s, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!((r.mean - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(r.effective_sample_size <= r.n_samples as f64 + 1e-9);
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let w = vec![0.0; 4];
        let v = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(weighted_mean(&w, &v), Err(GhdoError::DegenerateBatch(_))));
    }

    #[test]
    fn classical_magnetization() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let m = from_classical(&p).unwrap();
        let cache = AmplitudeCache::enumerated(&m);
        let configs = sample_diagonal_cached(&cache, 20_000, &mut rng(10));
        let r = estimate_observable(&cache, &LocalOperator::sigma_z(0), &configs).unwrap();
        // site 0 is up for indices 2 and 3
        let want = -(0.1 + 0.2) + (0.3 + 0.4);
        assert!((r.mean.re - want).abs() < 3.0 * r.std_error + 1e-12);
        let id = estimate_observable(&cache, &LocalOperator::identity(1), &configs).unwrap();
        assert!((id.mean - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn dump_has_one_line_per_sample() {
        let m = network(2, 1, 0.1, 2);
        let s = sample_joint_alpha(&m, 0.5, 7, &mut rng(1)).unwrap();
        let mut buf = Vec::new();
        write_sample_dump(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 8);
    }
}
