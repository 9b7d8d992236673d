//! TOML run configuration. Each section mirrors one subcommand or module,
//! every key is optional, and command-line flags take precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "DGSAN_SEED";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train: TrainSection,
    pub dgsan: DgsanSection,
    pub model: ModelSection,
    pub corpus: CorpusSection,
    pub sample: SampleSection,
    pub eval: EvalSection,
    pub verify: VerifySection,
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Option<super::Mode>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub domain_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgsanSection {
    pub batch_size: Option<usize>,
    pub outer_iters: Option<usize>,
    pub temperature: Option<f64>,
    pub old_logprob_temperature: Option<f64>,
    pub inner_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_emb: Option<usize>,
    pub d_h: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub max_len: Option<usize>,
    pub min_freq: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub count: Option<usize>,
    pub temperature: Option<f64>,
    pub length: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub feature_dim: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub trials: Option<usize>,
    pub dim: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub symbols: Option<usize>,
    pub max_len: Option<usize>,
    pub count: Option<usize>,
    pub skew: Option<f64>,
    pub fixed_len: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))
    }

    /// Flag, then config file, then `DGSAN_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

/// First of flag and config value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
