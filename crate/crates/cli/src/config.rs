//! Pipeline configuration: a TOML file whose keys mirror the structs below.
//! Every key is optional.
//!
//! ```toml
//! seed = 7
//! corpus_dir = "corpus"
//! cache_dir = "cache"
//! output_dir = "out"
//! montage = "tcp.txt"        # "ANODE-CATHODE" per line; built-in TCP when absent
//! scheme = "seizure5"        # or "patient3"
//! variant = "fused"          # cnn | bilstm | fused | all
//!
//! [corpus]                   # synthetic corpus generator
//! patients_per_class = 3
//!
//! [train]
//! batch_size = 64
//! max_epochs = 100
//!
//! [model]
//! base_maps = 32
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use seizure_core::ingest::CorpusSpec;
use seizure_core::neural::{ModelConfig, Variant};
use seizure_core::preprocess::MontageSpec;
use seizure_core::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub corpus_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub montage: Option<PathBuf>,
    pub scheme: Option<String>,
    pub variant: Option<String>,
    pub corpus: CorpusSpec,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: PipelineConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    pub fn montage(&self) -> Result<MontageSpec> {
        match &self.montage {
            Some(p) => MontageSpec::load(p).with_context(|| format!("loading montage {}", p.display())),
            None => Ok(MontageSpec::default()),
        }
    }
}

/// Which model variants a command runs.
pub fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(vec![Variant::Cnn, Variant::BiLstm, Variant::Fused]);
    }
    match s.parse() {
        Ok(v) => Ok(vec![v]),
        Err(e) => bail!("{e}"),
    }
}
