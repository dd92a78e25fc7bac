//! Surface reconstruction metrics: Chamfer distance, normal consistency and
//! edge Chamfer distance over sampled surfaces in normalised space.
//!
//! Chamfer values use squared distances scaled by 1000.

mod index;

pub use index::{brute_nearest, GridIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{compactness, extract_tree, marching_cubes, Compactness, CsgTree, IsoMesh};
use crate::geometry::{cross, norm, sample_surface_points, Point3, SurfaceSamples, TriangleMesh};
use crate::network::FittedModel;

pub const METRIC_SAMPLES: usize = 8192;
pub const METRIC_SEED: u64 = 0x8c5;
pub const SCALE: f64 = 1000.0;
/// Neighbourhood radius for edge detection.
pub const EDGE_RADIUS: f64 = 0.02;
/// `‖nᵢ × nⱼ‖` above which a pair straddles an edge.
pub const EDGE_CROSS: f64 = 0.1;
/// ECD when exactly one edge set is empty: squared unit diameter × 1000.
pub const ECD_PENALTY: f64 = 1000.0;

/// The fixed-size, fixed-seed sample set every metric is computed on.
pub fn sample_surface(mesh: &TriangleMesh) -> SurfaceSamples {
    sample_surface_points(mesh, METRIC_SAMPLES, METRIC_SEED)
}

/// Like [`sample_surface`], with each normal replaced by `normal(x)`
/// where that returns a non-degenerate vector (it is normalised).
pub fn sample_surface_with(mesh: &TriangleMesh, normal: impl Fn(Point3) -> Option<Point3> + Sync) -> SurfaceSamples {
    let mut s = sample_surface(mesh);
    let better: Vec<Option<Point3>> = s
        .points
        .par_iter()
        .map(|&x| {
            let n = normal(x)?;
            let l = norm(n);
            (l > 1e-12 && l.is_finite()).then(|| n.map(|v| v / l))
        })
        .collect();
    for (n, b) in s.normals.iter_mut().zip(better) {
        if let Some(b) = b {
            *n = b;
        }
    }
    s
}

/// For each `a` in `from`, its nearest point in `to` and the squared
/// distance.
fn nearest_all(from: &[Point3], to: &[Point3]) -> Vec<(usize, f64)> {
    let index = GridIndex::new(to, 2.0 * EDGE_RADIUS);
    from.par_iter()
        .map(|&a| index.nearest(a).expect("non-empty target"))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn require_points(a: &[Point3], b: &[Point3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("metric on an empty point set".into()));
    }
    Ok(())
}

fn chamfer_points(a: &[Point3], b: &[Point3]) -> f64 {
    let ab = mean(nearest_all(a, b).into_iter().map(|(_, d)| d));
    let ba = mean(nearest_all(b, a).into_iter().map(|(_, d)| d));
    (ab + ba) * SCALE
}

pub fn chamfer(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    require_points(&a.points, &b.points)?;
    Ok(chamfer_points(&a.points, &b.points))
}

/// Mean absolute cosine between each sample's normal and that of its
/// positional nearest neighbour, averaged over both directions.
pub fn normal_consistency(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    require_points(&a.points, &b.points)?;
    let one_way = |x: &SurfaceSamples, y: &SurfaceSamples| {
        mean(
            nearest_all(&x.points, &y.points)
                .into_iter()
                .enumerate()
                .map(|(i, (j, _))| crate::geometry::dot(x.normals[i], y.normals[j]).abs()),
        )
    };
    Ok(0.5 * (one_way(a, b) + one_way(b, a)))
}

/// Samples with a neighbour within [`EDGE_RADIUS`] whose normal differs
/// by a cross-product magnitude above [`EDGE_CROSS`].
pub fn edge_points(s: &SurfaceSamples) -> Vec<Point3> {
    let index = GridIndex::new(&s.points, 2.0 * EDGE_RADIUS);
    let flags: Vec<bool> = (0..s.len())
        .into_par_iter()
        .map(|i| {
            index
                .within(s.points[i], EDGE_RADIUS)
                .into_iter()
                .any(|j| norm(cross(s.normals[i], s.normals[j])) > EDGE_CROSS)
        })
        .collect();
    s.points
        .iter()
        .zip(flags)
        .filter(|(_, f)| *f)
        .map(|(p, _)| *p)
        .collect()
}

/// Chamfer distance between edge-point sets; 0 when both are empty and
/// [`ECD_PENALTY`] when only one is.
pub fn edge_chamfer(a: &SurfaceSamples, b: &SurfaceSamples) -> Result<f64> {
    require_points(&a.points, &b.points)?;
    let (ea, eb) = (edge_points(a), edge_points(b));
    Ok(match (ea.is_empty(), eb.is_empty()) {
        (true, true) => 0.0,
        (false, false) => chamfer_points(&ea, &eb),
        _ => ECD_PENALTY,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub chamfer: String,
    pub samples: usize,
    pub edge_radius: f64,
    pub edge_cross_threshold: f64,
    pub empty_edge_set: String,
    pub recon_normals: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            chamfer: "mean squared nearest distance, both directions summed, x1000".into(),
            samples: METRIC_SAMPLES,
            edge_radius: EDGE_RADIUS,
            edge_cross_threshold: EDGE_CROSS,
            empty_edge_set: format!("both empty: 0; one empty: {ECD_PENALTY}"),
            recon_normals: "gradient of the closest CSG leaf at each sample".into(),
        }
    }
}

/// Metric report as written to `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub nc: f64,
    pub ecd: f64,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub compactness: Option<Compactness>,
    pub conventions: Conventions,
}

/// All three surface metrics between reference and reconstruction samples.
pub fn evaluate(
    reference: &SurfaceSamples,
    recon: &SurfaceSamples,
    compactness: Option<Compactness>,
) -> Result<MetricReport> {
    Ok(MetricReport {
        cd: chamfer(reference, recon)?,
        nc: normal_consistency(reference, recon)?,
        ecd: edge_chamfer(reference, recon)?,
        compactness,
        conventions: Conventions::default(),
    })
}

/// A binary model read back as a tree and meshed.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub tree: CsgTree,
    pub mesh: IsoMesh,
    pub compactness: Compactness,
}

impl Reconstruction {
    pub fn new(model: &FittedModel, resolution: usize) -> Result<Self> {
        let tree = extract_tree(model)?;
        let mesh = marching_cubes(model, resolution)?;
        let compactness = compactness(&tree, &mesh);
        Ok(Self {
            tree,
            mesh,
            compactness,
        })
    }

    /// Metric samples on the mesh with closest-leaf normals.
    pub fn samples(&self) -> Result<SurfaceSamples> {
        if self.mesh.is_empty() {
            return Err(Error::EmptyReconstruction);
        }
        let mesh = self.mesh.to_mesh()?;
        Ok(sample_surface_with(&mesh, |x| self.tree.surface_normal(x)))
    }

    pub fn evaluate(&self, reference: &SurfaceSamples) -> Result<MetricReport> {
        evaluate(reference, &self.samples()?, Some(self.compactness))
    }
}
