use std::path::Path;

use serde_json::{Map, Value};

use crate::dataset::Normalizer;
use crate::neural::{ModelConfig, MpSeizNet, Tensor};
use crate::tensorfile::{TensorFile, TensorFileError};

use super::TrainError;

/// Trained weights with the normalization they expect. Stored as a tensor
/// file holding every parameter (running statistics included) by name.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: MpSeizNet,
    pub norm: Normalizer,
    /// Free-form provenance (config hash, seed, ...).
    pub meta: Map<String, Value>,
}

impl Checkpoint {
    pub fn to_file(&self) -> TensorFile {
        let mut meta = self.meta.clone();
        meta.insert("kind".into(), Value::from("checkpoint"));
        meta.insert("model_config".into(), serde_json::to_value(&self.model.config).expect("config serializes"));
        let mut f = TensorFile::new(meta);
        for p in self.model.params() {
            f.push(p.name.clone(), Tensor { shape: p.shape.clone(), data: p.value.clone() });
        }
        for (n, t) in self.norm.to_tensors() {
            f.push(n, t);
        }
        f
    }

    pub fn from_file(f: &TensorFile) -> Result<Self, TrainError> {
        if f.meta_str("kind") != Some("checkpoint") {
            return Err(TensorFileError::Meta("not a checkpoint".into()).into());
        }
        let cfg: ModelConfig = f
            .meta
            .get("model_config")
            .cloned()
            .ok_or_else(|| TensorFileError::Meta("missing model_config".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| TensorFileError::Meta(e.to_string())))?;
        let mut model = MpSeizNet::new(&cfg, 0)?;
        for p in model.params_mut() {
            let t = f.get_shaped(&p.name, &p.shape)?;
            p.value.copy_from_slice(&t.data);
        }
        let norm = Normalizer::from_file(f)?;
        let mut meta = f.meta.clone();
        meta.remove("kind");
        meta.remove("model_config");
        Ok(Checkpoint { model, norm, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        Ok(self.to_file().write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_file(&TensorFile::read(path)?)
    }
}
