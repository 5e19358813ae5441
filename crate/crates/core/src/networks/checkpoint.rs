use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Model, NetworkParams, OutputMode};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "fccov-net-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a [`Model`]: a JSON document holding each network's
/// architecture, seed and flat parameter values. Floats are written with
/// shortest round-trip formatting, so load(save(m)) == m bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub mode: OutputMode,
    pub nets: Vec<NetworkParams>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            mode: model.mode,
            nets: model.nets.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::LayoutMismatch {
                checkpoint: format!("format {} v{}", self.format, self.version),
                expected: format!("format {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"),
            });
        }
        if self.nets.is_empty() {
            return Err(Error::LayoutMismatch {
                checkpoint: "no networks".into(),
                expected: "at least one network".into(),
            });
        }
        let nets = self
            .nets
            .into_iter()
            .map(|n| NetworkParams::from_values(n.arch, n.values, n.seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model { mode: self.mode, nets })
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_model(model))?;
    write_atomic(path, text.as_bytes())
}

/// Loads a model, optionally checking each network against `expected`
/// (with its output width adjusted per network).
pub fn load_checkpoint(path: &Path, expected: Option<&Architecture>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    let model = ckpt.into_model()?;
    if let Some(arch) = expected {
        for net in &model.nets {
            let want = arch.with_outputs(net.arch.output_dim());
            if net.arch != want {
                return Err(Error::LayoutMismatch {
                    checkpoint: net.arch.describe(),
                    expected: want.describe(),
                });
            }
        }
    }
    Ok(model)
}
