//! JSON run and simulation configs. Unknown keys are rejected and every file
//! carries `schema_version`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wsmil_core::{FrameworkConfig, SyntheticSpec, TrainSettings};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn default_hidden() -> Vec<usize> {
    vec![32, 16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; input and output widths are implied.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub framework: FrameworkConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub model: ModelConfig,
    /// Manifest path; relative paths resolve against the config file.
    pub manifest: PathBuf,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub simulator: SyntheticSpec,
    /// Write the `gt` column into feature files.
    #[serde(default = "default_true")]
    pub export_gt: bool,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn check_version(v: u32, path: &Path) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: schema_version {v} is not supported (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

impl RunConfig {
    /// Loads, resolves relative paths and validates everything that can be
    /// checked without touching data.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path)?;
        check_version(cfg.schema_version, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.manifest.is_relative() {
            cfg.manifest = base.join(&cfg.manifest);
        }
        if let Some(out) = cfg.out_dir.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.framework.validate()?;
        self.train.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "model.hidden has a zero-width layer: {:?}",
                self.model.hidden
            )));
        }
        Ok(())
    }
}

impl SimulateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SimulateConfig = read_json(path)?;
        check_version(cfg.schema_version, path)?;
        cfg.simulator.validate()?;
        Ok(cfg)
    }
}
