//! Service configuration: a TOML file with environment overrides.

use std::fs;
use std::path::{Path, PathBuf};

use pcg_core::levelgen::ParamRanges;
use pcg_core::personalization::{LiveConfig, DEFAULT_RETRIES};
use pcg_core::simulator::{GeneratorWiring, SimulationConfig};
use pcg_stats::SamplerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Budgets for the Bayesian analyses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub sampler: SamplerConfig,
    /// Monte Carlo draws for the completion comparison.
    pub mc_draws: usize,
    /// Quadrature grid for the completion comparison.
    pub grid: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { sampler: SamplerConfig::default(), mc_draws: 100_000, grid: 10_000, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Directory holding the event log and profile snapshot.
    pub data_dir: PathBuf,
    /// Seed for traditional generation; drawn from the OS when absent.
    pub seed: Option<u64>,
    pub generator: GeneratorWiring,
    pub ranges: ParamRanges,
    pub retries: usize,
    pub analysis: AnalysisConfig,
    pub simulation: SimulationConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            seed: None,
            generator: SimulationConfig::default().generator,
            ranges: ParamRanges::default(),
            retries: DEFAULT_RETRIES,
            analysis: AnalysisConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

const LLM_VARS: [&str; 4] = ["PCG_LLM_ENDPOINT", "PCG_LLM_MODEL", "PCG_LLM_API_KEY", "PCG_LLM_TIMEOUT_SECS"];

fn parse<T: std::str::FromStr>(var: &'static str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Env { var, reason: e.to_string() })
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    /// Reads `path` when given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Overrides from `PCG_*` variables. Setting `PCG_LLM_ENDPOINT` switches
    /// the generator to the live client.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("PCG_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("PCG_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("PCG_SEED") {
            self.seed = Some(parse("PCG_SEED", &v)?);
        }
        if let Some(v) = get("PCG_RETRIES") {
            self.retries = parse("PCG_RETRIES", &v)?;
        }
        if let Some(v) = get("PCG_SAMPLER_CHAINS") {
            self.analysis.sampler.chains = parse("PCG_SAMPLER_CHAINS", &v)?;
        }
        if let Some(v) = get("PCG_SAMPLER_DRAWS") {
            self.analysis.sampler.draws = parse("PCG_SAMPLER_DRAWS", &v)?;
        }
        if let Some(v) = get("PCG_SAMPLER_BURN_IN") {
            self.analysis.sampler.burn_in = parse("PCG_SAMPLER_BURN_IN", &v)?;
        }
        if let Some(v) = get("PCG_MC_DRAWS") {
            self.analysis.mc_draws = parse("PCG_MC_DRAWS", &v)?;
        }

        if LLM_VARS.iter().all(|k| get(k).is_none()) {
            return Ok(());
        }
        let mut live = match &self.generator {
            GeneratorWiring::Live(l) => l.clone(),
            _ => LiveConfig { endpoint: String::new(), model: String::new(), api_key: None, timeout_secs: 120 },
        };
        if let Some(v) = get("PCG_LLM_ENDPOINT") {
            live.endpoint = v;
        }
        if let Some(v) = get("PCG_LLM_MODEL") {
            live.model = v;
        }
        if let Some(v) = get("PCG_LLM_API_KEY") {
            live.api_key = Some(v);
        }
        if let Some(v) = get("PCG_LLM_TIMEOUT_SECS") {
            live.timeout_secs = parse("PCG_LLM_TIMEOUT_SECS", &v)?;
        }
        if live.endpoint.is_empty() {
            return Err(ConfigError::Env { var: "PCG_LLM_ENDPOINT", reason: "required for the live client".into() });
        }
        self.generator = GeneratorWiring::Live(live);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ranges.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let GeneratorWiring::Live(live) = &self.generator {
            if live.endpoint.is_empty() || live.model.is_empty() {
                return Err(ConfigError::Invalid("live generator needs an endpoint and a model".into()));
            }
        }
        let s = &self.analysis.sampler;
        if s.chains == 0 || s.draws < s.min_draws {
            return Err(ConfigError::Invalid(format!(
                "sampler needs at least one chain and {} draws",
                s.min_draws
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn toml_sections_are_optional() {
        let cfg = ServiceConfig::from_toml("bind = \"0.0.0.0:9000\"\n", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.ranges, ParamRanges::default());
        assert_eq!(cfg.analysis.sampler.chains, 4);
    }

    #[test]
    fn nested_toml() {
        let text = r#"
            data_dir = "/tmp/pcg"
            [generator]
            kind = "live"
            endpoint = "http://localhost:1234/v1/chat/completions"
            model = "m"
            [ranges.num_moves]
            min = 15
            max = 25
            [analysis.sampler]
            draws = 4000
        "#;
        let cfg = ServiceConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert!(matches!(cfg.generator, GeneratorWiring::Live(ref l) if l.model == "m" && l.timeout_secs == 120));
        assert_eq!(cfg.ranges.num_moves.max, 25);
        assert_eq!(cfg.analysis.sampler.draws, 4000);
        assert_eq!(cfg.analysis.sampler.burn_in, 2000);
        cfg.validate().unwrap();
    }

    #[test]
    fn env_overrides_file_values() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(env(&[("PCG_BIND", "127.0.0.1:1"), ("PCG_SAMPLER_DRAWS", "5000"), ("PCG_SEED", "9")]))
            .unwrap();
        assert_eq!(cfg.bind, "127.0.0.1:1");
        assert_eq!(cfg.analysis.sampler.draws, 5000);
        assert_eq!(cfg.seed, Some(9));
        assert!(matches!(cfg.generator, GeneratorWiring::Mock { .. }));
    }

    #[test]
    fn llm_variables_switch_to_live() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(env(&[("PCG_LLM_ENDPOINT", "http://h/v1"), ("PCG_LLM_MODEL", "m"), ("PCG_LLM_API_KEY", "k")]))
            .unwrap();
        let GeneratorWiring::Live(live) = &cfg.generator else { panic!("expected live") };
        assert_eq!(live.api_key.as_deref(), Some("k"));
        cfg.validate().unwrap();

        let mut cfg = ServiceConfig::default();
        assert!(cfg.apply_env(env(&[("PCG_LLM_MODEL", "m")])).is_err());
        assert!(ServiceConfig::default().apply_env(env(&[("PCG_RETRIES", "many")])).is_err());
    }
}
