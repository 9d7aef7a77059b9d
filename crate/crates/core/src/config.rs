//! Run configuration: one TOML document per run.
//!
//! ```toml
//! output_dir = "runs/ann-oja"
//!
//! [network]
//! backend = "ann"
//!
//! [plasticity]
//! rule = "oja"
//!
//! [es]
//! generations = 300
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::{SweepSpec, Topology};
use crate::environment::{CartPole, CartPoleParams, MAX_SAFETY_LIMIT};
use crate::evolution::EsConfig;
use crate::network::{Backend, ClipBounds, NetworkSpec, SnnSettings, StdpConstants};
use crate::neuron::{DecodeMode, LifParams};
use crate::plasticity::{RuleKind, WeightDependence};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("missing section `[{0}]`")]
    MissingSection(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    #[default]
    Cartpole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub name: EnvName,
    /// Base seed for evaluation episodes.
    pub seed: u64,
    pub cartpole: CartPoleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub backend: Backend,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub recurrent: bool,
    #[serde(default)]
    pub decode: DecodeMode,
    #[serde(default)]
    pub neuron: LifParams,
    #[serde(default)]
    pub snn: SnnSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClipConfig {
    pub enabled: bool,
    pub min: f64,
    pub max: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        let b = ClipBounds::default();
        Self {
            enabled: true,
            min: b.min(),
            max: b.max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasticityConfig {
    pub rule: RuleKind,
    #[serde(default)]
    pub clip: ClipConfig,
    #[serde(default)]
    pub stdp: StdpConstants,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Episode cap during training.
    pub horizon: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { horizon: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub horizons: Vec<u64>,
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    #[serde(default = "defaults::eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "defaults::safety_limit")]
    pub safety_limit: u64,
    /// Ends each cell's training once mean fitness reaches this fraction of
    /// the cell's horizon.
    #[serde(default)]
    pub stop_at_fraction: Option<f64>,
}

mod defaults {
    pub fn hidden() -> Vec<usize> {
        vec![32, 32]
    }
    pub fn repeats() -> usize {
        3
    }
    pub fn eval_episodes() -> usize {
        10
    }
    pub fn safety_limit() -> u64 {
        crate::environment::DEFAULT_SAFETY_LIMIT
    }
    pub fn output_dir() -> std::path::PathBuf {
        "runs".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub network: NetworkConfig,
    pub plasticity: PlasticityConfig,
    pub es: EsConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
}

impl RunConfig {
    /// Parses and validates. Parse errors carry the line and column.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `output_dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to toml")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = &self.network;
        if n.hidden.iter().any(|&h| h == 0) {
            return Err(ConfigError::invalid("network.hidden", "layer sizes must be positive"));
        }
        n.neuron
            .validate()
            .map_err(|e| ConfigError::invalid("network.neuron", e.to_string()))?;
        if n.snn.internal_steps == 0 {
            return Err(ConfigError::invalid("network.snn.internal_steps", "must be at least 1"));
        }
        if !(n.snn.input_gain > 0.0 && n.snn.input_gain.is_finite()) {
            return Err(ConfigError::invalid("network.snn.input_gain", "must be positive"));
        }
        let p = &self.plasticity;
        if p.rule == RuleKind::Stdp && n.backend == Backend::Ann {
            return Err(ConfigError::invalid(
                "plasticity.rule",
                "stdp needs spike times; use backend = \"snn\"",
            ));
        }
        if p.clip.enabled {
            ClipBounds::new(p.clip.min, p.clip.max)
                .map_err(|e| ConfigError::invalid("plasticity.clip", e.to_string()))?;
        } else if p.rule == RuleKind::Stdp && p.stdp.weight_dependence == WeightDependence::SoftBounds
        {
            return Err(ConfigError::invalid(
                "plasticity.stdp.weight_dependence",
                "soft bounds need finite clip bounds",
            ));
        }
        if !(p.stdp.tau_plus > 0.0 && p.stdp.tau_minus > 0.0) {
            return Err(ConfigError::invalid("plasticity.stdp", "tau_plus and tau_minus must be positive"));
        }
        if !(p.stdp.amplitude_scale > 0.0 && p.stdp.amplitude_scale.is_finite()) {
            return Err(ConfigError::invalid("plasticity.stdp.amplitude_scale", "must be positive"));
        }
        self.es.validate().map_err(|e| ConfigError::invalid("es", e.to_string()))?;
        if self.train.horizon == 0 {
            return Err(ConfigError::invalid("train.horizon", "must be at least 1"));
        }
        let c = &self.environment.cartpole;
        if !(c.dt > 0.0 && c.mass_cart > 0.0 && c.mass_pole > 0.0 && c.half_length > 0.0) {
            return Err(ConfigError::invalid(
                "environment.cartpole",
                "dt, masses and half_length must be positive",
            ));
        }
        if let Some(b) = &self.bench {
            if b.horizons.is_empty() {
                return Err(ConfigError::invalid("bench.horizons", "must not be empty"));
            }
            if b.horizons[0] == 0 || b.horizons.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::invalid(
                    "bench.horizons",
                    "must be positive and strictly increasing",
                ));
            }
            if b.repeats == 0 {
                return Err(ConfigError::invalid("bench.repeats", "must be at least 1"));
            }
            if b.eval_episodes == 0 {
                return Err(ConfigError::invalid("bench.eval_episodes", "must be at least 1"));
            }
            if b.safety_limit == 0 || b.safety_limit > MAX_SAFETY_LIMIT {
                return Err(ConfigError::invalid(
                    "bench.safety_limit",
                    format!("must be in 1..={MAX_SAFETY_LIMIT}"),
                ));
            }
            if let Some(f) = b.stop_at_fraction {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(ConfigError::invalid("bench.stop_at_fraction", "must be in (0, 1]"));
                }
            }
        }
        self.network_spec()
            .validate()
            .map_err(|e| ConfigError::invalid("network", e.to_string()))
    }

    pub fn clip_bounds(&self) -> ClipBounds {
        let c = self.plasticity.clip;
        if c.enabled {
            ClipBounds::new(c.min, c.max).unwrap_or_default()
        } else {
            ClipBounds::unbounded()
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let n = &self.network;
        let mut spec = NetworkSpec::layered(n.backend, 4, &n.hidden, 2, n.recurrent, self.plasticity.rule);
        spec.stdp = self.plasticity.stdp;
        spec.clip = self.clip_bounds();
        spec.neuron = n.neuron;
        spec.snn = n.snn;
        spec.decode = n.decode;
        spec
    }

    pub fn make_env(&self) -> impl Fn() -> CartPole + Sync + Send + Clone {
        let params = self.environment.cartpole;
        move || CartPole::new(params)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let b = self.bench.as_ref().ok_or(ConfigError::MissingSection("bench"))?;
        Ok(SweepSpec {
            rule: self.plasticity.rule,
            topology: Topology::of(&self.network_spec()),
            backend: self.network.backend,
            horizons: b.horizons.clone(),
            repeats: b.repeats,
            eval_episodes: b.eval_episodes,
            safety_limit: b.safety_limit,
            stop_at_fraction: b.stop_at_fraction,
        })
    }

    /// SHA-256 over the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("run configs serialize to json");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("json values serialize");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"

[network]
backend = "ann"

[plasticity]
rule = "oja"

[es]
generations = 5
seed = 3
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL, "t.toml").unwrap();
        assert_eq!(c.network.hidden, vec![32, 32]);
        assert_eq!(c.es.population, 128);
        assert_eq!(c.train.horizon, 200);
        assert_eq!(c.clip_bounds(), ClipBounds::default());
        let spec = c.network_spec();
        assert_eq!(spec.widths(), vec![4, 32, 32, 2]);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("generations = 5\n", "");
        let err = RunConfig::from_toml_str(&text, "t.toml").unwrap_err().to_string();
        assert!(err.contains("generations"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\nsigmaa = 0.2");
        let err = RunConfig::from_toml_str(&text, "t.toml").unwrap_err().to_string();
        assert!(err.contains("sigmaa"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_key() {
        let text = MINIMAL.replace("backend = \"ann\"", "backend = \"ann\"\nhidden = [32, 0]");
        match RunConfig::from_toml_str(&text, "t.toml") {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "network.hidden"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("rule = \"oja\"", "rule = \"stdp\"");
        match RunConfig::from_toml_str(&text, "t.toml") {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "plasticity.rule"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::from_toml_str(MINIMAL, "t.toml").unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.es.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let a = RunConfig::from_toml_str(MINIMAL, "t.toml").unwrap();
        let b = RunConfig::from_toml_str(&a.to_toml(), "t.toml").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }
}
