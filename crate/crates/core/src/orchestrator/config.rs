use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentEndpoint;
use crate::evaluator::EvaluationSettings;
use crate::problems::{DatasetOptions, ProblemKind, Sketch};
use crate::trace::Curation;
use crate::validation::Toolchain;

use super::RunError;

pub const BASE_URL_ENV: &str = "DESIGNLOOP_BASE_URL";
pub const API_KEY_ENV: &str = "DESIGNLOOP_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Context window in tokens.
    pub max_context: u64,
    /// Reply script; when set, no network requests are made.
    pub script: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:11434".into(),
            model: "gpt-oss:20b".into(),
            timeout_secs: 600.0,
            max_context: 128_000,
            script: None,
        }
    }
}

impl EndpointConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        EndpointConfig {
            script: Some(path.into()),
            ..Self::default()
        }
    }

    /// Endpoint for requests, applying the base URL override if present.
    pub fn endpoint(&self, temperature: f64, base_url_override: Option<&str>) -> AgentEndpoint {
        AgentEndpoint {
            base_url: base_url_override.unwrap_or(&self.base_url).to_string(),
            model: self.model.clone(),
            temperature,
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_context: self.max_context,
        }
    }
}

/// Run hyperparameters. Every field takes part in the fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// Number of iterations N.
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    /// Correction attempts K per iteration.
    #[serde(default = "default_corrections")]
    pub max_corrections: u32,
    /// Curated context sizes; defaults depend on the problem.
    #[serde(default)]
    pub curation: Option<Curation>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub sketch: Option<Sketch>,
    /// Include the problem's optimization hints.
    #[serde(default = "default_true")]
    pub hints: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strategist: EndpointConfig,
    #[serde(default)]
    pub implementor: EndpointConfig,
    #[serde(default)]
    pub toolchain: Toolchain,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default)]
    pub dataset: DatasetOptions,
}

fn default_iterations() -> u32 {
    100
}

fn default_corrections() -> u32 {
    4
}

fn default_temperature() -> f64 {
    0.7
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(problem: ProblemKind) -> Self {
        RunConfig {
            problem,
            iterations: default_iterations(),
            max_corrections: default_corrections(),
            curation: Some(default_curation(problem)),
            temperature: default_temperature(),
            sketch: None,
            hints: true,
            seed: 0,
            strategist: EndpointConfig::default(),
            implementor: EndpointConfig::default(),
            toolchain: Toolchain::default(),
            evaluation: EvaluationSettings::default(),
            dataset: DatasetOptions::default(),
        }
    }

    /// Parses a TOML config. Relative script paths are resolved against
    /// `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        for ep in [&mut config.strategist, &mut config.implementor] {
            if let Some(script) = &ep.script {
                if script.is_relative() {
                    ep.script = Some(base_dir.join(script));
                }
            }
        }
        config.curation.get_or_insert(default_curation(config.problem));
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: &str| Err(RunError::Config(msg.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a non-negative number");
        }
        if self.evaluation.reps == 0 {
            return bad("evaluation.reps must be at least 1");
        }
        if !(self.evaluation.timeout_secs > 0.0) {
            return bad("evaluation.timeout_secs must be positive");
        }
        if self.toolchain.command.is_empty() {
            return bad("toolchain.command must not be empty");
        }
        for ep in [&self.strategist, &self.implementor] {
            if !(ep.timeout_secs > 0.0) {
                return bad("endpoint timeout_secs must be positive");
            }
        }
        Ok(())
    }

    pub fn curation(&self) -> Curation {
        self.curation.unwrap_or_else(|| default_curation(self.problem))
    }

    /// Hex SHA-256 of the canonical JSON form with defaults resolved.
    pub fn fingerprint(&self) -> String {
        let mut resolved = self.clone();
        resolved.curation = Some(self.curation());
        let json = serde_json::to_string(&resolved).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Curated context sizes (top, bottom, recent) per problem.
pub fn default_curation(problem: ProblemKind) -> Curation {
    match problem {
        ProblemKind::Kinetics => Curation {
            top: 4,
            bottom: 3,
            recent: 3,
        },
        ProblemKind::Matmul => Curation {
            top: 5,
            bottom: 5,
            recent: 5,
        },
    }
}
