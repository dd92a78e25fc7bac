use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use d2csg::network::HyperParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    #[default]
    Mesh,
    Pointcloud,
}

/// Everything a `fit` run needs; the snapshot written to `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub input_kind: InputKind,
    pub out: Option<PathBuf>,
    /// Marching-cubes resolution for the reconstruction.
    pub resolution: usize,
    /// Compute metrics.json.
    pub metrics: bool,
    pub hyper: HyperParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_kind: InputKind::Mesh,
            out: None,
            resolution: d2csg::extract::MESH_RESOLUTION,
            metrics: true,
            hyper: HyperParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.hyper.validate()?;
        if self.input.is_none() {
            bail!("no input: pass --mesh or --pc (or set \"input\" in the config)");
        }
        if self.out.is_none() {
            bail!("no output directory: pass --out");
        }
        if self.resolution < 16 {
            bail!("resolution must be at least 16, got {}", self.resolution);
        }
        Ok(())
    }
}
