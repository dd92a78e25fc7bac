use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "d2csg",
    version,
    about = "Recover compact CSG trees of quadric primitives from a shape"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a shape (or every shape in a directory) and write a run directory.
    Fit(FitArgs),
    /// Compare a reconstruction against a ground-truth mesh.
    Eval(EvalArgs),
    /// Write an OpenSCAD script for a tree or checkpoint.
    Export(ExportArgs),
    /// Summarise a checkpoint, tree or run directory.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input mesh (.obj/.stl/.off) or a directory of meshes.
    #[arg(long, conflicts_with = "pc")]
    pub mesh: Option<PathBuf>,
    /// Input point cloud (.xyz with normals) or a directory of them.
    #[arg(long)]
    pub pc: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub c: Option<usize>,
    /// Iterations per stage.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Marching-cubes resolution.
    #[arg(long)]
    pub res: Option<usize>,
    /// Shapes fitted concurrently for directory input.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth mesh or a directory of meshes.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Reconstruction: checkpoint, mesh, run directory, or a directory of runs.
    pub recon: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub res: usize,
    /// Where the JSON is written besides standard output.
    #[arg(long, default_value = "eval.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// tree.json, model.d2cm or a run directory.
    pub input: PathBuf,
    /// Output script; defaults next to the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write coordinates in the original input units.
    #[arg(long)]
    pub world: bool,
    /// Write every leaf as a polyhedron.
    #[arg(long)]
    pub no_classify: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// model.d2cm, tree.json or a run directory.
    pub input: PathBuf,
    #[arg(long)]
    pub json: bool,
    /// Marching-cubes resolution used for the segment count.
    #[arg(long, default_value_t = 128)]
    pub res: usize,
}
