//! Self-contained invariant suites, runnable from the command line.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::AmplitudeCache;
use crate::error::{GhdoError, Result};
use crate::ghdo::{aghdo_element, diagonal, from_classical, from_dense, maximally_mixed};
use crate::lindblad::build_tfim;
use crate::linalg::{self, CMatrix};
use crate::model::VariationalModel;
use crate::netcore::{AghdoNetwork, NetworkSpec};
use crate::oracle::{
    dense_from_ghdo, dense_from_model, exp_coefficients, hadamard_product_check, positive_series_apply,
    random_density_matrix, random_psd, steady_state_dense,
};
use crate::sampling::{log_p_alpha, sample_diagonal_cached, sample_joint_alpha_cached, weight_bound};
use crate::spins::SpinConfig;
use crate::tdvp::{full_summation_batch, GeometricSystem};

pub const SUITES: [&str; 6] = ["schur", "positivity", "constructors", "sampler", "gradient", "tdvp-fixedpoint"];

#[derive(Clone, Debug, PartialEq)]
pub struct CheckGroup {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// Worst value of the checked quantity across the group.
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub groups: Vec<CheckGroup>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed == g.total)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "{} {}: {}/{} pass (worst {:.3e})",
                self.suite, g.name, g.passed, g.total, g.worst
            )?;
        }
        Ok(())
    }
}

struct Tally {
    name: &'static str,
    passed: usize,
    total: usize,
    worst: f64,
    larger_is_worse: bool,
}

impl Tally {
    fn errors(name: &'static str) -> Self {
        Tally {
            name,
            passed: 0,
            total: 0,
            worst: 0.0,
            larger_is_worse: true,
        }
    }

    fn eigenvalues(name: &'static str) -> Self {
        Tally {
            worst: f64::INFINITY,
            larger_is_worse: false,
            ..Self::errors(name)
        }
    }

    fn record(&mut self, value: f64, ok: bool) {
        self.total += 1;
        self.passed += usize::from(ok);
        self.worst = if self.larger_is_worse {
            self.worst.max(value)
        } else {
            self.worst.min(value)
        };
    }

    fn finish(self) -> CheckGroup {
        CheckGroup {
            name: self.name.to_string(),
            passed: self.passed,
            total: self.total,
            worst: self.worst,
        }
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = match name {
        "schur" => schur(&mut rng)?,
        "positivity" => positivity(&mut rng)?,
        "constructors" => constructors(&mut rng)?,
        "sampler" => sampler(&mut rng)?,
        "gradient" => gradient(&mut rng)?,
        "tdvp-fixedpoint" => tdvp_fixed_point()?,
        other => {
            return Err(GhdoError::Input(format!(
                "unknown suite '{other}', expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        groups,
    })
}

pub fn random_network<R: Rng + ?Sized>(sites: usize, rank: usize, width: f64, rng: &mut R) -> Result<AghdoNetwork> {
    let depth = rng.gen_range(1..=2);
    AghdoNetwork::new(NetworkSpec {
        sites,
        local_rank: rank,
        feature_densities: (0..depth).map(|_| rng.gen_range(1..=3)).collect(),
        init_width: width,
        seed: rng.gen(),
    })
}

fn schur(rng: &mut ChaCha8Rng) -> Result<Vec<CheckGroup>> {
    let mut hadamard = Tally::eigenvalues("hadamard");
    for _ in 0..500 {
        let n = rng.gen_range(1..=8);
        let a = linalg::hermitize(&random_psd(n, rng.gen_range(1..=n), rng));
        let b = linalg::hermitize(&random_psd(n, rng.gen_range(1..=n), rng));
        let min = hadamard_product_check(&a, &b)?;
        hadamard.record(min, min >= -1e-10);
    }
    let mut series = Tally::eigenvalues("exp-series");
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let a = linalg::hermitize(&random_psd(n, rng.gen_range(1..=n), rng));
        let k = rng.gen_range(1..=20);
        let min = match positive_series_apply(&exp_coefficients(k), k, &a, f64::INFINITY) {
            Ok(r) => r.min_eigenvalue,
            Err(_) => f64::NEG_INFINITY,
        };
        series.record(min, min >= -1e-9);
    }
    Ok(vec![hadamard.finish(), series.finish()])
}

fn physical_error(rho: &CMatrix) -> Result<(f64, f64)> {
    let herm = linalg::hermiticity_error(rho);
    let trace = (linalg::trace(rho) - Complex64::new(1.0, 0.0)).norm();
    let min = linalg::eigvalsh(&linalg::hermitize(rho))?[0];
    Ok((herm.max(trace), min))
}

fn positivity(rng: &mut ChaCha8Rng) -> Result<Vec<CheckGroup>> {
    let mut hermitian_trace = Tally::errors("hermitian-trace");
    let mut psd = Tally::eigenvalues("min-eigenvalue");
    for _ in 0..100 {
        let n = rng.gen_range(1..=4);
        let r = [1, 2, 4][rng.gen_range(0..3)];
        let width = 10f64.powf(rng.gen_range(-3.0..=-1.0));
        let model = random_network(n, r, width, rng)?;
        let rho = dense_from_model(&model)?.into_inner();
        let (err, min) = physical_error(&rho)?;
        hermitian_trace.record(err, err <= 1e-10);
        psd.record(min, min >= -1e-10);
    }
    Ok(vec![hermitian_trace.finish(), psd.finish()])
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn constructors(rng: &mut ChaCha8Rng) -> Result<Vec<CheckGroup>> {
    let mut classical = Tally::errors("from_classical");
    for _ in 0..50 {
        let n = rng.gen_range(1..=4);
        let raw: Vec<f64> = (0..1 << n).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let rho = dense_from_model(&from_classical(&p)?)?.into_inner();
        let want = CMatrix::from_diag(&ndarray::Array1::from_iter(p.iter().map(|&x| Complex64::new(x, 0.0))));
        let err = max_diff(&rho, &want);
        classical.record(err, err <= 1e-12);
    }
    let mut dense = Tally::errors("from_dense");
    for _ in 0..20 {
        let n = rng.gen_range(2..=3);
        let target = random_density_matrix(n, rng);
        let rho = dense_from_model(&from_dense(&target)?)?.into_inner();
        let err = max_diff(&rho, &target);
        dense.record(err, err <= 1e-10);
    }
    let mut mixed = Tally::errors("maximally_mixed");
    for n in 1..=4 {
        let rho = dense_from_ghdo(&maximally_mixed(n))?.into_inner();
        let want = CMatrix::eye(1 << n) / Complex64::new((1 << n) as f64, 0.0);
        let err = max_diff(&rho, &want);
        mixed.record(err, err <= 1e-14);
    }
    Ok(vec![classical.finish(), dense.finish(), mixed.finish()])
}

fn total_variation<K: std::hash::Hash + Eq>(counts: &HashMap<K, usize>, exact: impl Iterator<Item = (K, f64)>, n: usize) -> f64 {
    exact
        .map(|(k, p)| (counts.get(&k).copied().unwrap_or(0) as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0
}

fn sampler(rng: &mut ChaCha8Rng) -> Result<Vec<CheckGroup>> {
    const SAMPLES: usize = 100_000;
    let mut diag = Tally::errors("diagonal-tv");
    for n in 1..=3 {
        let model = random_network(n, 2, 0.5, rng)?;
        let cache = AmplitudeCache::enumerated(&model);
        let mut counts = HashMap::new();
        for s in sample_diagonal_cached(&cache, SAMPLES, rng) {
            *counts.entry(s).or_insert(0) += 1;
        }
        let tv = total_variation(&counts, SpinConfig::all(n).map(|s| (s, diagonal(&model, s))), SAMPLES);
        diag.record(tv, tv <= 0.01);
    }
    let mut joint = Tally::errors("joint-tv");
    let mut bound = Tally::errors("weight-bound");
    let model = random_network(2, 2, 0.5, rng)?;
    let cache = AmplitudeCache::enumerated(&model);
    for alpha in [0.0, 0.5, 1.0] {
        let samples = sample_joint_alpha_cached(&cache, alpha, SAMPLES, rng)?;
        let limit = weight_bound(alpha, 2);
        let worst = samples.iter().map(|s| s.weight / limit).fold(0.0, f64::max);
        bound.record(worst, worst <= 1.0);
        let mut counts = HashMap::new();
        for s in &samples {
            *counts.entry((s.sigma, s.eta)).or_insert(0) += 1;
        }
        let exact = SpinConfig::all(2)
            .flat_map(|s| SpinConfig::all(2).map(move |e| (s, e)))
            .map(|(s, e)| ((s, e), log_p_alpha(&cache, alpha, s, e).exp()));
        let tv = total_variation(&counts, exact, SAMPLES);
        joint.record(tv, tv <= 0.01);
    }
    Ok(vec![diag.finish(), joint.finish(), bound.finish()])
}

/// Largest deviation between analytic and central-difference log-derivatives,
/// relative to the largest analytic derivative. Differences are taken on
/// `ρ(σ,η)` itself so no complex logarithm branch is crossed.
pub fn gradient_error<M: VariationalModel + Clone>(model: &M, sigma: SpinConfig, eta: SpinConfig, step: f64) -> Result<f64> {
    let (_, analytic) = model.log_derivatives(sigma, eta)?;
    let rho = aghdo_element(model, sigma, eta);
    let base = model.params();
    let mut shifted = model.clone();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, o) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        shifted.set_params(&p)?;
        let plus = aghdo_element(&shifted, sigma, eta);
        p[i] = base[i] - step;
        shifted.set_params(&p)?;
        let minus = aghdo_element(&shifted, sigma, eta);
        let numeric = (plus - minus) / (2.0 * step) / rho;
        worst = worst.max((numeric - o).norm());
        scale = scale.max(o.norm());
    }
    Ok(worst / scale.max(1e-300))
}

fn gradient(rng: &mut ChaCha8Rng) -> Result<Vec<CheckGroup>> {
    let mut fd = Tally::errors("finite-difference");
    let mut done = 0;
    while done < 20 {
        let n = rng.gen_range(1..=4);
        let r = rng.gen_range(1..=4);
        let model = random_network(n, r, 0.3, rng)?;
        let sigma = SpinConfig::from_index(n, rng.gen_range(0..1 << n));
        let eta = SpinConfig::from_index(n, rng.gen_range(0..1 << n));
        if aghdo_element(&model, sigma, eta).norm() < 1e-6 {
            continue;
        }
        let err = gradient_error(&model, sigma, eta, 1e-5)?;
        fd.record(err, err <= 1e-6);
        done += 1;
    }
    Ok(vec![fd.finish()])
}

fn tdvp_fixed_point() -> Result<Vec<CheckGroup>> {
    let mut force = Tally::errors("force-norm");
    for g in [0.5, 1.0, 2.0, 3.0] {
        let lind = build_tfim(2, 2.0, g, 1.0, true)?;
        let model = from_dense(steady_state_dense(&lind)?.matrix())?;
        let cache = AmplitudeCache::enumerated(&model);
        let (_, f) = GeometricSystem::build(&cache, &lind, &full_summation_batch(&cache))?.to_dense();
        let worst = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        force.record(worst, worst <= 1e-6);
    }
    Ok(vec![force.finish()])
}
