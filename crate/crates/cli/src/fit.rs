use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context};
use d2csg::extract::Compactness;
use d2csg::geometry::{
    load_mesh, load_xyz, normalize_to_unit_box, sample_occupancy_from_mesh, sample_occupancy_from_pointcloud,
    write_obj, NormalizationTransform, OccupancySet, SurfaceSamples,
};
use d2csg::metrics::{sample_surface, Reconstruction, METRIC_SAMPLES, METRIC_SEED};
use d2csg::network::Branch;
use d2csg::trainer::{fit_shape_with, StageSummary, TrainOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::FitArgs;
use crate::config::{InputKind, RunConfig};

/// Files written into every run directory.
pub const MODEL_FILE: &str = "model.d2cm";
pub const TREE_FILE: &str = "tree.json";
pub const RECON_FILE: &str = "recon.obj";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRAIN_LOG: &str = "train.log";
pub const DROPOUT_LOG: &str = "dropout.log";
pub const DROPOUT_JSON: &str = "dropout.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

/// Merges the config file (if any) with flag overrides.
pub fn resolve_config(args: &FitArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &args.mesh {
        cfg.input = Some(m.clone());
        cfg.input_kind = InputKind::Mesh;
    }
    if let Some(p) = &args.pc {
        cfg.input = Some(p.clone());
        cfg.input_kind = InputKind::Pointcloud;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    let h = &mut cfg.hyper;
    if let Some(v) = args.seed {
        h.seed = v;
    }
    if let Some(v) = args.p {
        h.p = v;
    }
    if let Some(v) = args.c {
        h.c = v;
    }
    if let Some(v) = args.iters {
        *h = h.clone().with_iterations(v);
    }
    if let Some(v) = args.alpha {
        h.alpha = v;
    }
    if let Some(v) = args.eta {
        h.eta = v;
    }
    if let Some(v) = args.sigma {
        h.sigma = v;
    }
    if let Some(v) = args.theta {
        h.theta = v;
    }
    if let Some(v) = args.res {
        cfg.resolution = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A loaded, normalised input ready for fitting.
pub struct PreparedInput {
    pub occupancy: OccupancySet,
    pub transform: NormalizationTransform,
    pub reference: SurfaceSamples,
}

pub fn prepare_input(kind: InputKind, path: &Path, seed: u64) -> anyhow::Result<PreparedInput> {
    let prepared = match kind {
        InputKind::Mesh => {
            let loaded = load_mesh(path)?;
            if loaded.degenerate_dropped > 0 {
                log::warn!(
                    "{}: dropped {} zero-area faces",
                    path.display(),
                    loaded.degenerate_dropped
                );
            }
            let (mesh, transform) = normalize_to_unit_box(&loaded.mesh)?;
            PreparedInput {
                occupancy: sample_occupancy_from_mesh(&mesh, seed),
                transform,
                reference: sample_surface(&mesh),
            }
        }
        InputKind::Pointcloud => {
            let (pc, transform) = load_xyz(path)?.normalized()?;
            let picked: Vec<usize> = if pc.len() > METRIC_SAMPLES {
                let mut rng = ChaCha8Rng::seed_from_u64(METRIC_SEED);
                let mut idx = rand::seq::index::sample(&mut rng, pc.len(), METRIC_SAMPLES).into_vec();
                idx.sort_unstable();
                idx
            } else {
                (0..pc.len()).collect()
            };
            PreparedInput {
                occupancy: sample_occupancy_from_pointcloud(&pc, seed)?,
                transform,
                reference: SurfaceSamples {
                    points: picked.iter().map(|&i| pc.points()[i]).collect(),
                    normals: picked.iter().map(|&i| pc.normals()[i]).collect(),
                },
            }
        }
    };
    prepared.occupancy.validate_for_fitting()?;
    Ok(prepared)
}

#[derive(Debug, Serialize)]
pub struct ShapeSummary {
    pub index: usize,
    pub leaves: usize,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub input: PathBuf,
    pub seed: u64,
    pub stages: Vec<StageSummary>,
    pub cover: Vec<ShapeSummary>,
    pub residual: Vec<ShapeSummary>,
    pub empty_columns: Vec<(Branch, usize)>,
    pub removed: usize,
    pub contract_violations: Vec<String>,
    pub compactness: Compactness,
    pub runtime_seconds: f64,
}

fn write_lines(path: &Path, lines: &[String]) -> anyhow::Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fits one shape into `out`. Inputs are read and checked before the
/// directory is created.
pub fn fit_one(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<RunSummary> {
    let start = Instant::now();
    let prepared = prepare_input(cfg.input_kind, input, cfg.hyper.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let snapshot = RunConfig {
        input: Some(input.to_path_buf()),
        out: Some(out.to_path_buf()),
        ..cfg.clone()
    };
    write_json(&out.join(CONFIG_FILE), &snapshot)?;

    let opts = TrainOptions {
        dump_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    let (model, dropout, report) = fit_shape_with(&prepared.occupancy, cfg.hyper.clone(), prepared.transform, &opts)?;
    model.save(&out.join(MODEL_FILE))?;
    write_lines(&out.join(TRAIN_LOG), &report.lines)?;
    write_lines(&out.join(DROPOUT_LOG), &dropout.to_lines())?;
    write_json(&out.join(DROPOUT_JSON), &dropout)?;

    let recon = Reconstruction::new(&model, cfg.resolution)?;
    recon.tree.save(&out.join(TREE_FILE))?;
    let world: Vec<_> = recon.mesh.vertices.iter().map(|&v| model.transform.invert(v)).collect();
    write_obj(
        &out.join(RECON_FILE),
        &world,
        &recon.mesh.triangles,
        Some(&recon.mesh.normals),
    )?;
    if cfg.metrics {
        write_json(&out.join(METRICS_FILE), &recon.evaluate(&prepared.reference)?)?;
    }

    let shapes = |b: Branch| {
        recon
            .tree
            .branch(b)
            .iter()
            .enumerate()
            .map(|(index, n)| ShapeSummary { index, leaves: n.len() })
            .collect()
    };
    let summary = RunSummary {
        input: input.to_path_buf(),
        seed: cfg.hyper.seed,
        stages: report.stages.clone(),
        cover: shapes(Branch::Cover),
        residual: shapes(Branch::Residual),
        empty_columns: Branch::BOTH
            .into_iter()
            .flat_map(|b| model.empty_columns(b).into_iter().map(move |i| (b, i)))
            .filter(|&(b, i)| model.params.union_weights(b).get(i, 0) != 0.0)
            .collect(),
        removed: dropout.removed().count(),
        contract_violations: dropout.contract_violations(),
        compactness: recon.compactness,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn shape_files(dir: &Path, kind: InputKind) -> anyhow::Result<Vec<PathBuf>> {
    let exts: &[&str] = match kind {
        InputKind::Mesh => &["obj", "stl", "off"],
        InputKind::Pointcloud => &["xyz"],
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| exts.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no {kind:?} files in {}", dir.display());
    }
    Ok(files)
}

pub fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let cfg = resolve_config(args)?;
    let input = cfg.input.clone().expect("validated");
    let out = cfg.out.clone().expect("validated");
    if !input.is_dir() {
        let s = fit_one(&cfg, &input, &out)?;
        eprintln!(
            "fitted {} in {:.1}s: numP={} numIS={} numSeg={}",
            input.display(),
            s.runtime_seconds,
            s.compactness.num_p,
            s.compactness.num_is,
            s.compactness.num_seg
        );
        return Ok(());
    }

    let files = shape_files(&input, cfg.input_kind)?;
    let queue = Mutex::new(files.iter());
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.max(1) {
            scope.spawn(|| loop {
                let Some(file) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                let stem = file.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
                match fit_one(&cfg, file, &out.join(&stem)) {
                    Ok(s) => eprintln!("fitted {} in {:.1}s", file.display(), s.runtime_seconds),
                    Err(e) => {
                        eprintln!("failed {}: {e:#}", file.display());
                        failures.lock().expect("failure lock").push((file.clone(), e));
                    }
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("failure lock");
    if failures.is_empty() {
        return Ok(());
    }
    // report the most severe failure
    failures.sort_by_key(|(_, e)| std::cmp::Reverse(crate::exit_code(e)));
    let (file, err) = failures.swap_remove(0);
    Err(err.context(format!(
        "{} of {} shapes failed; first: {}",
        failures.len() + 1,
        files.len(),
        file.display()
    )))
}
