use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ghdo_core::cache::{AmplitudeCache, DEFAULT_ENUMERATION_LIMIT};
use ghdo_core::checkpoint::Checkpoint;
use ghdo_core::matrix_io::write_matrix;
use ghdo_core::oracle::{
    dense_from_model, dense_magnetizations, dense_purity, steady_state_dense, MAX_RECONSTRUCTION_SITES,
};
use ghdo_core::sampling::{
    estimate_magnetizations, purity_from_samples, sample_joint_alpha_cached, write_sample_dump, EstimatorResult,
};
use ghdo_core::tdvp::run_with_observer;
use ghdo_core::verify::{run_suite, SuiteReport};
use ghdo_core::{AghdoNetwork, AmplitudeModel, SpinConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl From<EstimatorResult> for Estimate {
    fn from(r: EstimatorResult) -> Self {
        Estimate {
            mean: r.mean.re,
            std_error: r.std_error,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampledObservables {
    pub samples: usize,
    pub alpha: f64,
    pub mx: Estimate,
    pub my: Estimate,
    pub mz: Estimate,
    pub purity: Estimate,
    pub renyi2: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactObservables {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
    pub purity: f64,
    pub renyi2: f64,
}

impl ExactObservables {
    fn from_matrix(rho: &ghdo_core::linalg::CMatrix) -> Self {
        let m = dense_magnetizations(rho);
        let purity = dense_purity(rho);
        ExactObservables {
            mx: m[0],
            my: m[1],
            mz: m[2],
            purity,
            renyi2: -purity.log2(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub g: f64,
    pub converged: bool,
    pub steps: usize,
    pub time: f64,
    pub final_alpha: f64,
    pub estimates: SampledObservables,
    /// Present when the model is small enough to reconstruct densely.
    pub exact: Option<ExactObservables>,
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub sites: usize,
    pub converged: bool,
    pub points: Vec<PointSummary>,
}

fn sampling_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn estimate_state<M: AmplitudeModel>(
    model: &M,
    samples: usize,
    alpha: f64,
    rng: &mut ChaCha8Rng,
    dump: Option<&Path>,
) -> Result<SampledObservables> {
    let cache = AmplitudeCache::auto(model, DEFAULT_ENUMERATION_LIMIT);
    let batch = sample_joint_alpha_cached(&cache, alpha, samples, rng)?;
    if let Some(path) = dump {
        write_sample_dump(BufWriter::new(File::create(path)?), &batch)?;
    }
    let sigmas: Vec<SpinConfig> = batch.iter().map(|s| s.sigma).collect();
    let [mx, my, mz] = estimate_magnetizations(&cache, &sigmas)?;
    let purity = purity_from_samples(&batch)?;
    Ok(SampledObservables {
        samples,
        alpha,
        mx: mx.into(),
        my: my.into(),
        mz: mz.into(),
        purity: Estimate {
            mean: purity.purity,
            std_error: purity.purity_error,
        },
        renyi2: Estimate {
            mean: purity.renyi2,
            std_error: purity.renyi2_error,
        },
    })
}

fn exact_if_small<M: AmplitudeModel>(model: &M) -> Result<Option<ExactObservables>> {
    if model.sites() > MAX_RECONSTRUCTION_SITES {
        return Ok(None);
    }
    let rho = dense_from_model(model)?;
    Ok(Some(ExactObservables::from_matrix(rho.matrix())))
}

pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let out = &config.output.dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let fields = config.physics.fields();
    let sweep = fields.len() > 1;
    let seed = config.model.seed;
    let mut previous: Option<AghdoNetwork> = None;
    let mut points = Vec::new();

    for (index, &g) in fields.iter().enumerate() {
        let dir = if sweep { out.join(format!("g_{g}")) } else { out.clone() };
        fs::create_dir_all(&dir)?;
        let lind = config.physics.lindbladian(config.model.sites, g)?;
        let mut model = match previous.take() {
            Some(prev) if config.physics.warm_start => prev,
            _ => AghdoNetwork::new(config.model.clone())?,
        };
        let mut rng = sampling_rng(seed, 1 + index as u64);
        let checkpoint_path = dir.join("checkpoint.json");
        let mut csv = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
        let interval = config.output.checkpoint_interval;

        let result = run_with_observer(&mut model, &lind, &config.tdvp, &mut rng, |m, row| {
            csv.serialize(row).map_err(|e| ghdo_core::GhdoError::Input(e.to_string()))?;
            if interval > 0 && (row.step + 1) % interval == 0 {
                csv.flush()?;
                Checkpoint::from_network(m, seed, row.step + 1, row.time).save(&checkpoint_path)?;
                eprintln!(
                    "g={g} step {} t={:.3} mx={:.4} mz={:.4} purity={:.4}",
                    row.step + 1,
                    row.time,
                    row.mx,
                    row.mz,
                    row.purity
                );
            }
            Ok(())
        })?;
        csv.flush()?;

        let steps = result.diagnostics.len();
        let time = result.diagnostics.last().map_or(0.0, |r| r.time);
        Checkpoint::from_network(&model, seed, steps, time).save(&checkpoint_path)?;
        let dump = config.output.dump_samples.then(|| dir.join("samples.tsv"));
        let estimates = estimate_state(
            &model,
            config.output.estimate_samples,
            result.final_alpha,
            &mut rng,
            dump.as_deref(),
        )?;
        points.push(PointSummary {
            g,
            converged: result.converged,
            steps,
            time,
            final_alpha: result.final_alpha,
            estimates,
            exact: exact_if_small(&model)?,
            checkpoint: checkpoint_path,
        });
        previous = Some(model);
    }

    let summary = RunSummary {
        sites: config.model.sites,
        converged: points.iter().all(|p| p.converged),
        points,
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub sites: usize,
    pub checkpoint_step: usize,
    pub estimates: SampledObservables,
}

pub fn estimate(checkpoint: &Path, samples: usize, alpha: f64, seed: u64) -> Result<EstimateReport> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let model = ck.to_network()?;
    let mut rng = sampling_rng(seed, 0);
    Ok(EstimateReport {
        sites: model.sites(),
        checkpoint_step: ck.step,
        estimates: estimate_state(&model, samples, alpha, &mut rng, None)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OraclePoint {
    pub g: f64,
    #[serde(flatten)]
    pub observables: ExactObservables,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub sites: usize,
    pub v: f64,
    pub gamma: f64,
    pub periodic: bool,
    pub points: Vec<OraclePoint>,
}

pub fn oracle(config: &RunConfig, matrix_out: Option<&Path>) -> Result<OracleReport> {
    let fields = config.physics.fields();
    let mut points = Vec::new();
    for &g in &fields {
        let lind = config.physics.lindbladian(config.model.sites, g)?;
        let rho = steady_state_dense(&lind)?;
        if let Some(path) = matrix_out {
            let target = if fields.len() > 1 {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("steady_state");
                path.with_file_name(format!("{stem}_g{g}.json"))
            } else {
                path.to_path_buf()
            };
            write_matrix(&target, rho.matrix())?;
        }
        points.push(OraclePoint {
            g,
            observables: ExactObservables::from_matrix(rho.matrix()),
        });
    }
    Ok(OracleReport {
        sites: config.model.sites,
        v: config.physics.v,
        gamma: config.physics.gamma,
        periodic: config.physics.periodic,
        points,
    })
}

pub fn verify(suite: &str, seed: u64) -> Result<Vec<SuiteReport>> {
    let names: Vec<&str> = if suite == "all" {
        ghdo_core::verify::SUITES.to_vec()
    } else {
        vec![suite]
    };
    names
        .into_iter()
        .map(|name| run_suite(name, seed).map_err(Into::into))
        .collect()
}

