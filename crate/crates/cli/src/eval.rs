use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use d2csg::extract::Compactness;
use d2csg::geometry::{load_mesh, normalize_to_unit_box, NormalizationTransform, SurfaceSamples};
use d2csg::metrics::{evaluate, sample_surface, MetricReport, Reconstruction};
use d2csg::network::FittedModel;
use serde::Serialize;

use crate::args::EvalArgs;
use crate::fit::{MODEL_FILE, RECON_FILE};

/// Relative tolerance when comparing two normalisations.
const TRANSFORM_TOL: f64 = 1e-6;

#[derive(Debug, Serialize)]
pub struct EvalRow {
    pub shape: String,
    #[serde(flatten)]
    pub report: MetricReport,
    pub normalization_mismatch: bool,
}

#[derive(Debug, Serialize)]
pub struct MeanRow {
    pub shape: &'static str,
    pub count: usize,
    pub cd: f64,
    pub nc: f64,
    pub ecd: f64,
}

fn is_mesh(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["obj", "stl", "off"].contains(&e.to_ascii_lowercase().as_str()))
}

fn same_transform(a: &NormalizationTransform, b: &NormalizationTransform) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= TRANSFORM_TOL * x.abs().max(y.abs()).max(1.0);
    close(a.scale, b.scale) && (0..3).all(|i| close(a.translation[i], b.translation[i]))
}

fn map_samples(s: SurfaceSamples, from: &NormalizationTransform, to: &NormalizationTransform) -> SurfaceSamples {
    SurfaceSamples {
        points: s.points.into_iter().map(|p| to.apply(from.invert(p))).collect(),
        normals: s.normals,
    }
}

/// Loads a reconstruction as samples in the ground truth's normalised frame.
fn recon_samples(
    path: &Path,
    gt: &NormalizationTransform,
    res: usize,
) -> anyhow::Result<(SurfaceSamples, Option<Compactness>, bool)> {
    let file = if path.is_dir() {
        [MODEL_FILE, RECON_FILE]
            .iter()
            .map(|n| path.join(n))
            .find(|p| p.is_file())
            .with_context(|| format!("{} holds neither {MODEL_FILE} nor {RECON_FILE}", path.display()))?
    } else {
        path.to_path_buf()
    };
    if is_mesh(&file) {
        // meshes are compared in the units they were written in
        let mesh = load_mesh(&file)?.mesh.transformed(gt);
        return Ok((sample_surface(&mesh), None, false));
    }
    let model = FittedModel::load(&file)?;
    let recon = Reconstruction::new(&model, res)?;
    let mismatch = !same_transform(&model.transform, gt);
    if mismatch {
        log::warn!(
            "{}: normalisation differs from the ground truth (scale {} vs {}); comparing in world units",
            file.display(),
            model.transform.scale,
            gt.scale
        );
    }
    Ok((
        map_samples(recon.samples()?, &model.transform, gt),
        Some(recon.compactness),
        mismatch,
    ))
}

pub fn eval_one(gt_path: &Path, recon: &Path, res: usize) -> anyhow::Result<EvalRow> {
    let (gt_mesh, gt_transform) = normalize_to_unit_box(&load_mesh(gt_path)?.mesh)?;
    let reference = sample_surface(&gt_mesh);
    let (samples, compactness, normalization_mismatch) = recon_samples(recon, &gt_transform, res)?;
    Ok(EvalRow {
        shape: gt_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        report: evaluate(&reference, &samples, compactness)?,
        normalization_mismatch,
    })
}

/// Finds the reconstruction for ground truth `stem` inside a batch directory.
fn batch_recon(dir: &Path, stem: &str) -> Option<PathBuf> {
    let sub = dir.join(stem);
    if sub.is_dir() {
        return Some(sub);
    }
    ["d2cm", "obj"]
        .iter()
        .map(|e| dir.join(format!("{stem}.{e}")))
        .find(|p| p.is_file())
}

/// Runs `eval`; returns the text written to standard output and the file.
pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<String> {
    if !args.mesh.exists() {
        bail!("{} does not exist", args.mesh.display());
    }
    let text = if args.mesh.is_dir() {
        let mut gts: Vec<PathBuf> = fs::read_dir(&args.mesh)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_mesh(p))
            .collect();
        gts.sort();
        let mut lines = Vec::new();
        let mut rows = Vec::new();
        for gt in &gts {
            let stem = gt.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let Some(recon) = batch_recon(&args.recon, &stem) else {
                log::warn!("no reconstruction for {stem} in {}", args.recon.display());
                continue;
            };
            let row = eval_one(gt, &recon, args.res).with_context(|| format!("evaluating {stem}"))?;
            lines.push(serde_json::to_string(&row)?);
            rows.push(row);
        }
        if rows.is_empty() {
            bail!("no ground-truth/reconstruction pairs found");
        }
        let n = rows.len() as f64;
        let mean = MeanRow {
            shape: "mean",
            count: rows.len(),
            cd: rows.iter().map(|r| r.report.cd).sum::<f64>() / n,
            nc: rows.iter().map(|r| r.report.nc).sum::<f64>() / n,
            ecd: rows.iter().map(|r| r.report.ecd).sum::<f64>() / n,
        };
        lines.push(serde_json::to_string(&mean)?);
        lines.join("\n") + "\n"
    } else {
        serde_json::to_string_pretty(&eval_one(&args.mesh, &args.recon, args.res)?)? + "\n"
    };
    fs::write(&args.out, &text).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(text)
}
