use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use d2csg::extract::{extract_tree, CsgTree};
use d2csg::network::FittedModel;

use crate::fit::{MODEL_FILE, TREE_FILE};

/// A checkpoint or tree read from a file or a run directory.
pub struct Source {
    pub model: Option<FittedModel>,
    pub tree: CsgTree,
    /// Run directory the input came from, if any.
    pub run_dir: Option<PathBuf>,
}

fn is_checkpoint(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("d2cm"))
}

/// Resolves a run directory to its checkpoint, or to its tree if the
/// checkpoint is missing.
pub fn resolve(path: &Path) -> anyhow::Result<(PathBuf, Option<PathBuf>)> {
    if path.is_dir() {
        for name in [MODEL_FILE, TREE_FILE] {
            let candidate = path.join(name);
            if candidate.is_file() {
                return Ok((candidate, Some(path.to_path_buf())));
            }
        }
        bail!("{} holds neither {MODEL_FILE} nor {TREE_FILE}", path.display());
    }
    if !path.is_file() {
        bail!("{} does not exist", path.display());
    }
    let parent = path
        .parent()
        .filter(|p| p.join(MODEL_FILE).is_file() || p.join(TREE_FILE).is_file());
    Ok((path.to_path_buf(), parent.map(Path::to_path_buf)))
}

pub fn load(path: &Path) -> anyhow::Result<Source> {
    let (file, run_dir) = resolve(path)?;
    if is_checkpoint(&file) {
        let model = FittedModel::load(&file)?;
        let tree = extract_tree(&model).with_context(|| format!("extracting a tree from {}", file.display()))?;
        Ok(Source {
            model: Some(model),
            tree,
            run_dir,
        })
    } else {
        let tree = CsgTree::load(&file)?;
        Ok(Source {
            model: None,
            tree,
            run_dir,
        })
    }
}
