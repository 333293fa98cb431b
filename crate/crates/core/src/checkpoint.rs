//! JSON checkpoints of network models.
//!
//! ```json
//! {
//!   "version": "ghdo-ckpt-1",
//!   "spec": { "sites": 3, "local_rank": 2, "feature_densities": [4],
//!             "init_width": 0.1, "seed": 7 },
//!   "params_re": [...],
//!   "params_im": [...],
//!   "seed": 7,
//!   "step": 120,
//!   "time": 0.12
//! }
//! ```
//!
//! `params_re[k]`, `params_im[k]` are the real and imaginary parts of the
//! `k`-th complex network parameter.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GhdoError, Result};
use crate::netcore::{AghdoNetwork, NetworkSpec, ParameterVector};

pub const CHECKPOINT_VERSION: &str = "ghdo-ckpt-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: String,
    pub spec: NetworkSpec,
    pub params_re: Vec<f64>,
    pub params_im: Vec<f64>,
    /// Seed of the run that produced the parameters.
    pub seed: u64,
    #[serde(default)]
    pub step: usize,
    #[serde(default)]
    pub time: f64,
}

impl Checkpoint {
    pub fn from_network(net: &AghdoNetwork, seed: u64, step: usize, time: f64) -> Self {
        let values = net.parameters().complex();
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            spec: net.spec().clone(),
            params_re: values.iter().map(|z| z.re).collect(),
            params_im: values.iter().map(|z| z.im).collect(),
            seed,
            step,
            time,
        }
    }

    pub fn to_network(&self) -> Result<AghdoNetwork> {
        if self.version != CHECKPOINT_VERSION {
            return Err(GhdoError::CheckpointVersion {
                found: self.version.clone(),
                expected: CHECKPOINT_VERSION,
            });
        }
        if self.params_re.len() != self.params_im.len() {
            return Err(GhdoError::Input(format!(
                "checkpoint has {} real parts but {} imaginary parts",
                self.params_re.len(),
                self.params_im.len()
            )));
        }
        let values = self
            .params_re
            .iter()
            .zip(&self.params_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        AghdoNetwork::with_params(self.spec.clone(), ParameterVector::from_complex(values))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a checkpoint, rejecting unknown versions before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(CHECKPOINT_VERSION) => Ok(serde_json::from_value(value)?),
            other => Err(GhdoError::CheckpointVersion {
                found: other.unwrap_or("<missing>").to_string(),
                expected: CHECKPOINT_VERSION,
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
