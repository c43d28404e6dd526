use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Label;
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../assets/class_descriptions.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDescription {
    pub class_id: Label,
    pub name: String,
    pub description: String,
}

/// Versioned set of per-class motion descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub version: String,
    pub classes: Vec<ClassDescription>,
}

impl ClassCatalog {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("bundled class descriptions parse")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
        Self::from_json(&text)
    }

    /// Descriptions ordered by class id; every id in `0..num_classes` must appear once.
    pub fn ordered(&self, num_classes: usize) -> Result<Vec<&ClassDescription>> {
        let mut slots: Vec<Option<&ClassDescription>> = vec![None; num_classes];
        for c in &self.classes {
            let i = c.class_id.index();
            let slot = slots
                .get_mut(i)
                .ok_or_else(|| Error::config(format!("class id {i} outside 0..{num_classes}")))?;
            if slot.replace(c).is_some() {
                return Err(Error::config(format!("class id {i} described twice")));
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::config(format!("missing class description for label {i}"))))
            .collect()
    }

    pub fn get(&self, label: Label) -> Option<&ClassDescription> {
        self.classes.iter().find(|c| c.class_id == label)
    }

    /// sha256 over the canonical JSON form; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("catalog serialises");
        hex::encode(Sha256::digest(canonical))
    }
}
