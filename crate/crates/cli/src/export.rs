use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use d2csg::export::{emit_openscad, ExportOptions};
use d2csg::network::FittedModel;

use crate::args::ExportArgs;
use crate::fit::MODEL_FILE;
use crate::source;

pub const SCAD_FILE: &str = "shape.scad";

pub fn cmd_export(args: &ExportArgs) -> anyhow::Result<PathBuf> {
    let src = source::load(&args.input)?;
    let seed = match (&src.model, &src.run_dir) {
        (Some(m), _) => Some(m.hyper.seed),
        (None, Some(dir)) if dir.join(MODEL_FILE).is_file() => {
            Some(FittedModel::load(&dir.join(MODEL_FILE))?.hyper.seed)
        }
        _ => None,
    };
    let opts = ExportOptions {
        world: args.world,
        classify: !args.no_classify,
        seed,
        ..Default::default()
    };
    let text = emit_openscad(&src.tree, &opts).context("exporting the tree")?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => {
            let dir = if args.input.is_dir() {
                args.input.clone()
            } else {
                args.input.parent().map(PathBuf::from).unwrap_or_default()
            };
            dir.join(SCAD_FILE)
        }
    };
    fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(out)
}
