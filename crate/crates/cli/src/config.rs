//! TOML run configuration with dotted `--set section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ghdo_core::lindblad::{build_tfim, LindbladModel};
use ghdo_core::tdvp::TdvpConfig;
use ghdo_core::NetworkSpec;
use serde::{Deserialize, Serialize};

/// Problems with the configuration itself; reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    /// Nearest-neighbour ZZ coupling.
    pub v: f64,
    /// Transverse field.
    pub g: f64,
    /// Decay rate of the σ⁻ jump on each site.
    pub gamma: f64,
    #[serde(default = "default_true")]
    pub periodic: bool,
    /// Sweep over these fields instead of the single `g`.
    #[serde(default)]
    pub g_values: Vec<f64>,
    /// Start each sweep point from the previous point's final parameters.
    #[serde(default)]
    pub warm_start: bool,
}

fn default_true() -> bool {
    true
}

impl PhysicsSection {
    pub fn fields(&self) -> Vec<f64> {
        if self.g_values.is_empty() {
            vec![self.g]
        } else {
            self.g_values.clone()
        }
    }

    pub fn lindbladian(&self, sites: usize, g: f64) -> ghdo_core::Result<LindbladModel> {
        build_tfim(sites, self.v, g, self.gamma, self.periodic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write a checkpoint every this many steps (0 disables intermediate
    /// checkpoints; the final one is always written).
    pub checkpoint_interval: usize,
    /// Samples used for the final observable estimates in the summary.
    pub estimate_samples: usize,
    /// Write the final joint sample batch as a tab-separated dump.
    pub dump_samples: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("ghdo-out"),
            checkpoint_interval: 100,
            estimate_samples: 4096,
            dump_samples: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: NetworkSpec,
    pub physics: PhysicsSection,
    #[serde(default)]
    pub tdvp: TdvpConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: ghdo_core::GhdoError| ConfigError(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.tdvp.validate().map_err(wrap)?;
        let p = &self.physics;
        for (name, value) in [("physics.v", p.v), ("physics.g", p.g), ("physics.gamma", p.gamma)] {
            if !value.is_finite() {
                return Err(ConfigError(format!("{name} must be finite, got {value}")));
            }
        }
        if p.gamma < 0.0 {
            return Err(ConfigError(format!("physics.gamma must be >= 0, got {}", p.gamma)));
        }
        if let Some(g) = p.g_values.iter().find(|g| !g.is_finite()) {
            return Err(ConfigError(format!("physics.g_values contains {g}")));
        }
        if self.output.estimate_samples == 0 {
            return Err(ConfigError("output.estimate_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Applies `a.b.c=value`, parsing `value` as a TOML literal and falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override '{assignment}' is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("malformed override key '{key}'")));
    }
    let value = format!("x = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override key '{key}': '{part}' is not a section")))?;
    }
    node.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
sites = 2
local_rank = 2
feature_densities = [2]
init_width = 0.1
seed = 1

[physics]
v = 2.0
g = 1.0
gamma = 1.0
"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let c = RunConfig::parse(BASE, &[]).unwrap();
        assert_eq!(c.tdvp, TdvpConfig::default());
        assert!(c.physics.periodic);
        assert_eq!(c.physics.fields(), vec![1.0]);
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse(
            BASE,
            &["tdvp.dt=0.01".into(), "physics.g_values=[0.5, 2.0]".into(), "output.dir=runs/a".into()],
        )
        .unwrap();
        assert_eq!(c.tdvp.dt, 0.01);
        assert_eq!(c.physics.fields(), vec![0.5, 2.0]);
        assert_eq!(c.output.dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse(BASE, &["tdvp.dtt=0.01".into()]).unwrap_err();
        assert!(err.0.contains("dtt"), "{}", err.0);
    }

    #[test]
    fn ranges_checked() {
        assert!(RunConfig::parse(BASE, &["tdvp.dt=-1.0".into()]).is_err());
        assert!(RunConfig::parse(BASE, &["model.sites=0".into()]).is_err());
        assert!(RunConfig::parse(BASE, &["physics.gamma=-1".into()]).is_err());
    }
}
