use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backends::DEFAULT_DIM;
use crate::keeper::DEFAULT_THRESHOLD;
use crate::redactor::DEFAULT_REDACT_THRESHOLD;

#[derive(Debug, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Which pipeline an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Design {
    /// QA over the full corpus, nothing withheld.
    #[serde(alias = "baseline")]
    Baseline,
    /// QA over the full corpus followed by the keeper.
    #[serde(alias = "sanitize", alias = "sanitization")]
    Sanitization,
    /// QA over a corpus with secret sentences removed.
    #[serde(alias = "Secret Remover", alias = "remove", alias = "secret_remover")]
    SecretRemover,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Baseline, Design::Sanitization, Design::SecretRemover];
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Baseline => "Baseline",
            Design::Sanitization => "Sanitization",
            Design::SecretRemover => "Secret Remover",
        })
    }
}

impl FromStr for Design {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace([' ', '_', '-'], "").as_str() {
            "baseline" => Ok(Design::Baseline),
            "sanitize" | "sanitization" => Ok(Design::Sanitization),
            "remove" | "secretremover" => Ok(Design::SecretRemover),
            _ => Err(ConfigError(format!("unknown design {s:?} (expected baseline, sanitize or remove)"))),
        }
    }
}

/// `"builtin"` or the base URL of a model server.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum BackendSpec {
    #[default]
    Builtin,
    Remote(String),
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Builtin => f.write_str("builtin"),
            BackendSpec::Remote(url) => f.write_str(url),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin" {
            Ok(BackendSpec::Builtin)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(BackendSpec::Remote(s.to_string()))
        } else {
            Err(ConfigError(format!("backend {s:?} is neither \"builtin\" nor an http(s) URL")))
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: Design,
    pub answerer: BackendSpec,
    pub embedder: BackendSpec,
    pub num_secrets: usize,
    pub context_ratio: f64,
    pub secret_question_ratio: f64,
    /// Upper bound on the evaluation set size; see [`super::feasible_eval_size`].
    pub n_questions: usize,
    pub threshold: f64,
    pub redact_threshold: f64,
    pub seed: u64,
    pub dim: usize,
    pub timeout_secs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            design: Design::Sanitization,
            answerer: BackendSpec::Builtin,
            embedder: BackendSpec::Builtin,
            num_secrets: 8,
            context_ratio: 1.0,
            secret_question_ratio: 0.5,
            n_questions: 500,
            threshold: DEFAULT_THRESHOLD,
            redact_threshold: DEFAULT_REDACT_THRESHOLD,
            seed: 0,
            dim: DEFAULT_DIM,
            timeout_secs: 30,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.context_ratio > 0.0 && self.context_ratio <= 1.0) {
            return Err(ConfigError(format!("context_ratio {} outside (0, 1]", self.context_ratio)));
        }
        if !(0.0..=1.0).contains(&self.secret_question_ratio) {
            return Err(ConfigError(format!(
                "secret_question_ratio {} outside [0, 1]",
                self.secret_question_ratio
            )));
        }
        if !self.threshold.is_finite() {
            return Err(ConfigError(format!("threshold {} is not finite", self.threshold)));
        }
        if !(self.redact_threshold > 0.0 && self.redact_threshold <= 1.0) {
            return Err(ConfigError(format!("redact_threshold {} outside (0, 1]", self.redact_threshold)));
        }
        if self.dim < 2 {
            return Err(ConfigError(format!("dim {} below 2", self.dim)));
        }
        if self.timeout_secs == 0 {
            return Err(ConfigError("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    /// Whether the keeper runs for this design.
    pub fn keeper_enabled(&self) -> bool {
        self.design == Design::Sanitization
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendPair {
    pub answerer: BackendSpec,
    pub embedder: BackendSpec,
}

impl Default for BackendPair {
    fn default() -> Self {
        BackendPair {
            answerer: BackendSpec::Builtin,
            embedder: BackendSpec::Builtin,
        }
    }
}

/// A sweep over the Cartesian product of the listed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// SQuAD file to sweep over; the CLI can override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    pub designs: Vec<Design>,
    pub backends: Vec<BackendPair>,
    pub num_secrets: Vec<usize>,
    pub context_ratio: Vec<f64>,
    pub secret_question_ratio: Vec<f64>,
    pub n_questions: usize,
    pub threshold: f64,
    pub redact_threshold: f64,
    pub dim: usize,
    pub timeout_secs: u64,
    pub base_seed: u64,
    /// Wall-clock columns make output non-reproducible, so they are opt-in.
    pub record_timing: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            corpus: None,
            designs: vec![Design::Sanitization, Design::SecretRemover],
            backends: vec![BackendPair::default()],
            num_secrets: vec![0, 1, 2, 4, 8, 16, 32],
            context_ratio: vec![0.25, 0.5, 0.75, 1.0],
            secret_question_ratio: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n_questions: 500,
            threshold: DEFAULT_THRESHOLD,
            redact_threshold: DEFAULT_REDACT_THRESHOLD,
            dim: DEFAULT_DIM,
            timeout_secs: 30,
            base_seed: 0,
            record_timing: false,
        }
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of cell `index`: `splitmix64(base_seed ^ splitmix64(index))`.
pub fn cell_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(index as u64))
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.designs.len()
            * self.backends.len()
            * self.num_secrets.len()
            * self.context_ratio.len()
            * self.secret_question_ratio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.is_empty() {
            return Err(ConfigError("grid has an empty axis".into()));
        }
        self.cells().iter().try_for_each(ExperimentConfig::validate)
    }

    /// Cells in row-major order over (design, backends, num_secrets,
    /// context_ratio, secret_question_ratio).
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &design in &self.designs {
            for pair in &self.backends {
                for &num_secrets in &self.num_secrets {
                    for &context_ratio in &self.context_ratio {
                        for &secret_question_ratio in &self.secret_question_ratio {
                            out.push(ExperimentConfig {
                                design,
                                answerer: pair.answerer.clone(),
                                embedder: pair.embedder.clone(),
                                num_secrets,
                                context_ratio,
                                secret_question_ratio,
                                n_questions: self.n_questions,
                                threshold: self.threshold,
                                redact_threshold: self.redact_threshold,
                                seed: cell_seed(self.base_seed, out.len()),
                                dim: self.dim,
                                timeout_secs: self.timeout_secs,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_280_cells() {
        let g = GridSpec::default();
        assert_eq!(g.len(), 2 * 7 * 4 * 5);
        assert_eq!(g.cells().len(), 280);
        g.validate().unwrap();
    }

    #[test]
    fn small_grid_product() {
        let g = GridSpec {
            designs: vec![Design::Baseline, Design::Sanitization],
            num_secrets: vec![1, 2, 4],
            context_ratio: vec![1.0],
            secret_question_ratio: vec![0.0, 0.5],
            ..Default::default()
        };
        assert_eq!(g.cells().len(), 12);
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let g = GridSpec::default();
        let a: Vec<u64> = g.cells().iter().map(|c| c.seed).collect();
        assert_eq!(a, g.cells().iter().map(|c| c.seed).collect::<Vec<_>>());
        let unique: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }

    #[test]
    fn json_round_trip_and_names() {
        let raw = r#"{"designs":["Baseline","sanitize","Secret Remover"],
            "backends":[{"answerer":"builtin","embedder":"http://localhost:9000"}],
            "num_secrets":[1],"context_ratio":[0.5],"secret_question_ratio":[0.25],"base_seed":3}"#;
        let g: GridSpec = serde_json::from_str(raw).unwrap();
        assert_eq!(g.designs, Design::ALL);
        assert_eq!(g.backends[0].embedder, BackendSpec::Remote("http://localhost:9000".into()));
        let back: GridSpec = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(serde_json::from_str::<GridSpec>(r#"{"bogus":1}"#).is_err());
        assert!("ftp://x".parse::<BackendSpec>().is_err());
        assert_eq!("remove".parse::<Design>().unwrap().to_string(), "Secret Remover");
    }

    #[test]
    fn validation() {
        let bad = ExperimentConfig { context_ratio: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { secret_question_ratio: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { redact_threshold: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        ExperimentConfig::default().validate().unwrap();
    }
}
