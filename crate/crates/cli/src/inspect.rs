use std::fmt::Write as _;
use std::fs;

use anyhow::Context;
use d2csg::export::{classify_quadric, CLASSIFY_TOL};
use d2csg::extract::{compactness, eval_tree, extract_isosurface, marching_cubes, Compactness, CsgTree, Leaf};
use d2csg::network::{Branch, Phase, Removal};
use d2csg::trainer::DropoutLog;
use serde::Serialize;

use crate::args::InspectArgs;
use crate::fit::DROPOUT_JSON;
use crate::source;

#[derive(Debug, Serialize)]
pub struct ShapeRow {
    pub index: usize,
    pub kinds: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RemovedRow {
    pub branch: Branch,
    pub target: &'static str,
    pub index: usize,
    pub delta: usize,
    pub sweep: usize,
}

#[derive(Debug, Serialize)]
pub struct Inspection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub cover: Vec<ShapeRow>,
    pub residual: Vec<ShapeRow>,
    pub compactness: Compactness,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed: Option<Vec<RemovedRow>>,
}

fn leaf_kind(leaf: &Leaf) -> String {
    let convex = if leaf.inverted {
        leaf.coeffs.map(|v| -v)
    } else {
        leaf.coeffs
    };
    let kind = classify_quadric(&convex, CLASSIFY_TOL).map_or("quadric", |p| p.kind());
    if leaf.inverted {
        format!("inverse {kind}")
    } else {
        kind.to_string()
    }
}

fn rows(tree: &CsgTree, b: Branch) -> Vec<ShapeRow> {
    tree.branch(b)
        .iter()
        .enumerate()
        .map(|(index, node)| ShapeRow {
            index,
            kinds: node.iter().map(leaf_kind).collect(),
        })
        .collect()
}

pub fn inspect(args: &InspectArgs) -> anyhow::Result<Inspection> {
    let src = source::load(&args.input)?;
    let mesh = match &src.model {
        Some(m) => marching_cubes(m, args.res)?,
        None => extract_isosurface(
            |pts| {
                eval_tree(&src.tree, pts)
                    .into_iter()
                    .map(|b| if b { 0.0 } else { 1.0 })
                    .collect()
            },
            args.res,
            0.5,
        ),
    };
    let removed = match &src.run_dir {
        Some(dir) if dir.join(DROPOUT_JSON).is_file() => {
            let path = dir.join(DROPOUT_JSON);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let log: DropoutLog = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Some(
                log.removed()
                    .map(|r| {
                        let (target, branch, index) = match r.target {
                            Removal::Intermediate { branch, index } => ("shape", branch, index),
                            Removal::Primitive { branch, index } => ("primitive", branch, index),
                        };
                        RemovedRow {
                            branch,
                            target,
                            index,
                            delta: r.delta,
                            sweep: r.sweep,
                        }
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    Ok(Inspection {
        phase: src.model.as_ref().map(|m| m.phase),
        seed: src.model.as_ref().map(|m| m.hyper.seed),
        cover: rows(&src.tree, Branch::Cover),
        residual: rows(&src.tree, Branch::Residual),
        compactness: compactness(&src.tree, &mesh),
        removed,
    })
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn branch_line(name: &str, shapes: &[ShapeRow]) -> String {
    if shapes.is_empty() {
        return format!("{name}: empty");
    }
    let leaves = shapes.iter().map(|s| s.kinds.len()).sum();
    format!(
        "{name}: {} / {}",
        plural(shapes.len(), "shape"),
        plural(leaves, "leaf").replace("leafs", "leaves")
    )
}

impl Inspection {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}; {}",
            branch_line("cover", &self.cover),
            branch_line("residual", &self.residual)
        );
        if let Some(phase) = self.phase {
            let _ = writeln!(out, "phase: {phase:?}, seed {}", self.seed.unwrap_or_default());
        }
        for (name, shapes) in [("cover", &self.cover), ("residual", &self.residual)] {
            for s in shapes.iter() {
                let _ = writeln!(out, "  {name}[{}]: {}", s.index, s.kinds.join(", "));
            }
        }
        let c = self.compactness;
        let _ = writeln!(out, "numP {}  numIS {}  numSeg {}", c.num_p, c.num_is, c.num_seg);
        if let Some(removed) = &self.removed {
            let _ = writeln!(out, "removed: {}", removed.len());
            for r in removed {
                let _ = writeln!(
                    out,
                    "  sweep {} {:?} {} {} ΔS={}",
                    r.sweep, r.branch, r.target, r.index, r.delta
                );
            }
        }
        out
    }
}
