//! Serializable run description and its fail-fast loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::GraphScope;
use crate::sensitivity::SweepKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Evaluate,
    Connect,
    Graph,
    Mitigate,
    Sensitivity,
    Demo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evaluate => "evaluate",
            Command::Connect => "connect",
            Command::Graph => "graph",
            Command::Mitigate => "mitigate",
            Command::Sensitivity => "sensitivity",
            Command::Demo => "demo",
        }
    }
}

/// Bundled synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    /// 26 occupations over the eight occupation axes.
    Occupation,
    /// gender, environment and clothing with clothing tied to environment.
    Coupled,
    /// Two axes where balancing gender skews age.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// A synthetic model file holding one model or a list.
    Synthetic { path: PathBuf },
    Scenario { name: ScenarioName },
    /// A directory (or file) of recorded image-set JSON.
    Recorded { path: PathBuf },
    /// A program speaking the line-delimited JSON protocol on stdin/stdout.
    Subprocess {
        command: Vec<String>,
        #[serde(default)]
        timeout_ms: Option<u64>,
    },
    Http {
        url: String,
        #[serde(default)]
        timeout_ms: Option<u64>,
    },
}

impl ProviderConfig {
    pub fn timeout(&self) -> Option<Duration> {
        match self {
            ProviderConfig::Subprocess { timeout_ms, .. } | ProviderConfig::Http { timeout_ms, .. } => {
                timeout_ms.map(Duration::from_millis)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    ExactCounts,
    /// Seeded sampling; the seed is the run seed.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Dot,
    Json,
    Csv,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Dot => "dot",
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub levels: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    3
}

fn default_budget() -> u64 {
    48
}

/// Everything a run depends on. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    /// Axis file; scenarios supply their own when absent.
    #[serde(default)]
    pub axes: Option<PathBuf>,
    /// Prompts to audit; defaults to every prompt the provider knows.
    #[serde(default)]
    pub prompts: Vec<String>,
    /// Per-axis ideal weights; unlisted axes are uniform.
    #[serde(default)]
    pub ideals: BTreeMap<String, Vec<f64>>,
    #[serde(default = "default_budget")]
    pub budget_n: u64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub p_threshold: Option<f64>,
    #[serde(default)]
    pub scope: Option<GraphScope>,
    #[serde(default)]
    pub is_floor: Option<f64>,
    /// Axes InterMit may mitigate; defaults to every measurable axis.
    #[serde(default)]
    pub b_star: Vec<String>,
    /// Priority per `b_star` axis; defaults to equal weights.
    #[serde(default)]
    pub priority: BTreeMap<String, f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub worsen_delta: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Synonym group file for CAS.
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
    /// Directory of the config file; adapter commands run there.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        cfg.resolve_paths(base);
        cfg.base_dir = Some(base.to_path_buf());
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.axes {
            fix(p);
        }
        if let Some(p) = &mut self.synonyms {
            fix(p);
        }
        match &mut self.provider {
            Some(ProviderConfig::Synthetic { path }) | Some(ProviderConfig::Recorded { path }) => fix(path),
            _ => {}
        }
    }

    /// Hex SHA-256 of the canonical JSON form. Settings that cannot change
    /// results (thread count) are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Range checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.budget_n == 0 {
            return Err(Error::config("budget_n must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs must be at least 1"));
        }
        if let Some(p) = self.p_threshold {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!("p_threshold must lie in (0, 1], got {p}")));
            }
        }
        if let Some(f) = self.is_floor {
            if !(f >= 0.0) {
                return Err(Error::config(format!("is_floor must be non-negative, got {f}")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::config(format!("epsilon must lie in (0, 1], got {e}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.budget_n, 48);
        assert_eq!(cfg.mode, ModeName::ExactCounts);
        assert!(cfg.provider.is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"budget": 3}"#).is_err());
    }

    #[test]
    fn provider_variants_parse() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"provider": {"kind": "subprocess", "command": ["python3", "a.py"], "timeout_ms": 500}}"#,
        )
        .unwrap();
        assert_eq!(cfg.provider.unwrap().timeout(), Some(Duration::from_millis(500)));
    }

    #[test]
    fn hash_ignores_jobs() {
        let a = RunConfig::default();
        let b = RunConfig { jobs: Some(8), ..RunConfig::default() };
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
