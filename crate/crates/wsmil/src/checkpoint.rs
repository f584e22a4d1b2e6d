//! Versioned JSON checkpoint. Floats are written in shortest round-trip form
//! and parsed exactly, so save then load is bitwise lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wsmil_core::model::Dense;
use wsmil_core::{AdamState, FrameworkConfig, Mlp};

use crate::{Error, Result};

pub const FORMAT: &str = "wsmil-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub adam: AdamState,
    pub framework: FrameworkConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
    adam: AdamState,
    framework: FrameworkConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let stored = Stored {
            format: FORMAT.into(),
            version: VERSION,
            layer_dims: self.model.layer_dims(),
            layers: self.model.layers().to_vec(),
            adam: self.adam.clone(),
            framework: self.framework,
        };
        serde_json::to_string_pretty(&stored).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let s: Stored =
            serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        if s.format != FORMAT || s.version != VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint {} v{}", s.format, s.version),
            ));
        }
        let model = Mlp::from_layers(s.layers).map_err(|e| Error::format(path, e.to_string()))?;
        if model.layer_dims() != s.layer_dims {
            return Err(Error::format(
                path,
                "layer_dims disagree with stored layers",
            ));
        }
        let n = model.param_count();
        if s.adam.m.len() != n || s.adam.v.len() != n {
            return Err(Error::format(
                path,
                "adam state does not match parameter count",
            ));
        }
        Ok(Checkpoint {
            model,
            adam: s.adam,
            framework: s.framework,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
