//! On-disk checkpoints: `config.json` (model config + class catalog + its hash) and
//! `weights.safetensors`.

use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use super::classes::ClassCatalog;
use super::config::ModelConfig;
use super::recognizer::RecognitionModel;
use super::train::TrainHistory;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const CONFIG_FILE: &str = "config.json";
const WEIGHTS_FILE: &str = "weights.safetensors";
const HISTORY_FILE: &str = "history.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub model: ModelConfig,
    pub class_descriptions_sha256: String,
    pub class_descriptions: ClassCatalog,
    pub best_epoch: Option<usize>,
    pub best_val_weighted_f1: Option<f64>,
}

pub fn save_checkpoint(model: &RecognitionModel, dir: impl AsRef<Path>, history: Option<&TrainHistory>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(Error::at(dir))?;
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        model: model.config().clone(),
        class_descriptions_sha256: model.catalog().fingerprint(),
        class_descriptions: model.catalog().clone(),
        best_epoch: history.and_then(|h| h.best_epoch),
        best_val_weighted_f1: history.and_then(|h| h.best_val_weighted_f1),
    };
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(Error::at(&path))?;
    model.params().save(dir.join(WEIGHTS_FILE))?;
    if let Some(h) = history {
        let path = dir.join(HISTORY_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(h)?).map_err(Error::at(&path))?;
    }
    Ok(())
}

pub fn read_checkpoint_meta(dir: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = dir.as_ref().join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(Error::at(&path))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::config(format!("unsupported checkpoint version {}", meta.version)));
    }
    if meta.class_descriptions.fingerprint() != meta.class_descriptions_sha256 {
        return Err(Error::config("checkpoint class descriptions do not match their recorded hash"));
    }
    Ok(meta)
}

/// Loads a checkpoint with the class descriptions it was trained on.
pub fn load_checkpoint(dir: impl AsRef<Path>, device: &Device) -> Result<RecognitionModel> {
    let meta = read_checkpoint_meta(&dir)?;
    let model = RecognitionModel::new(&meta.model, &meta.class_descriptions, device)?;
    model.params().load(dir.as_ref().join(WEIGHTS_FILE))?;
    Ok(model)
}

/// Loads a checkpoint, refusing it unless it was trained on exactly `catalog`.
pub fn load_checkpoint_for(dir: impl AsRef<Path>, catalog: &ClassCatalog, device: &Device) -> Result<RecognitionModel> {
    let meta = read_checkpoint_meta(&dir)?;
    if meta.class_descriptions_sha256 != catalog.fingerprint() {
        return Err(Error::config(format!(
            "checkpoint was trained on class descriptions {} but {} were supplied",
            meta.class_descriptions_sha256,
            catalog.fingerprint()
        )));
    }
    load_checkpoint(dir, device)
}
