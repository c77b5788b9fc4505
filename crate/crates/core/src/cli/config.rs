//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::MspaceGrid;
use crate::families::FamilySpec;
use crate::sampler::SamplerConfig;
use crate::simulator::ScenarioSpec;

fn default_seed() -> u64 {
    1
}

fn default_epsilon() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Series to fit, relative to the configuration file.
    pub input: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// `estimate.json` written by `fit`.
    pub estimate: PathBuf,
    /// `truth.json` written by `simulate`.
    pub truth: PathBuf,
    /// Matching window of the F1 score.
    #[serde(default = "default_epsilon")]
    pub epsilon: usize,
}

/// Everything a subcommand may need; each subcommand checks its own sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
    #[serde(default)]
    pub mspace: Option<MspaceGrid>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative file references against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(fit) = &mut cfg.fit {
            fit.input = base.join(&fit.input);
        }
        if let Some(ev) = &mut cfg.evaluate {
            ev.estimate = base.join(&ev.estimate);
            ev.truth = base.join(&ev.truth);
        }
        Ok(cfg)
    }

    /// Applies command line overrides; the seed also seeds the sampler.
    pub fn apply_overrides(&mut self, seed: Option<u64>, standard: bool) {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.sampler.seed = self.seed;
        if standard {
            self.sampler.standard = true;
        }
    }

    pub fn family(&self) -> Result<&FamilySpec> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::Config("missing [family] section".into()))
    }

    /// First 16 hex digits of the SHA-256 of the configuration as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serialises");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
