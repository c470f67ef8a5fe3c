use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::CbmModel;

pub const CHECKPOINT_FORMAT: &str = "cibm-checkpoint/1";

/// A trained model plus the configuration text that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_echo: String,
    /// Concept groups of the training data, needed for interventions.
    pub groups: Vec<Vec<usize>>,
    pub model: CbmModel,
}

impl Checkpoint {
    pub fn new(model: CbmModel, groups: Vec<Vec<usize>>, config_echo: String) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config_echo,
            groups,
            model,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(ckpt)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Contract(format!(
            "{}: unsupported checkpoint format `{}`",
            path.display(),
            ckpt.format
        )));
    }
    ckpt.model.validate()?;
    Ok(ckpt)
}
