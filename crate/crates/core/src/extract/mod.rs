//! Reading a binary model back as an explicit CSG tree, meshing its field
//! and measuring compactness.

mod mesher;
mod tables;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

pub use mesher::{extract_isosurface, Grid, IsoMesh};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_surface_points, NormalizationTransform, Point3};
use crate::network::{quadric_value, Branch, FieldEvaluator, FittedModel, QUADRIC_COEFFS};

/// Default marching-cubes resolution.
pub const MESH_RESOLUTION: usize = 128;
/// Surface samples used to count segments.
pub const SEGMENT_SAMPLES: usize = 8192;
/// Minimum samples a leaf must own to count as a segment.
pub const SEGMENT_FLOOR: usize = 10;
const SEGMENT_SEED: u64 = 0x5e9;

/// A quadric half of the tree, `quadric(x) ≤ 0` inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub coeffs: [f64; QUADRIC_COEFFS],
    pub inverted: bool,
    /// Source row in its branch's primitive matrix.
    #[serde(default)]
    pub row: usize,
}

impl Leaf {
    pub fn contains(&self, x: Point3) -> bool {
        quadric_value(&self.coeffs, x) <= 0.0
    }

    pub fn gradient(&self, x: Point3) -> Point3 {
        let q = &self.coeffs;
        [0, 1, 2].map(|d| 2.0 * q[d] * x[d] + q[3 + d])
    }

    /// First-order distance estimate `|q| / ‖∇q‖`.
    pub fn distance_estimate(&self, x: Point3) -> f64 {
        let g = self.gradient(x);
        quadric_value(&self.coeffs, x).abs() / (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
    }
}

/// Intersection of its leaves.
pub type InterNode = Vec<Leaf>;

/// `union(cover) − union(residual)`, in normalised coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsgTree {
    pub cover: Vec<InterNode>,
    pub residual: Vec<InterNode>,
    #[serde(default)]
    pub transform: NormalizationTransform,
}

impl CsgTree {
    pub fn branch(&self, b: Branch) -> &[InterNode] {
        match b {
            Branch::Cover => &self.cover,
            Branch::Residual => &self.residual,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (Branch, &Leaf)> {
        Branch::BOTH
            .into_iter()
            .flat_map(move |b| self.branch(b).iter().flatten().map(move |l| (b, l)))
    }

    /// Outward normal at a surface point `x`, taken from the closest leaf
    /// by first-order distance. Residual leaves face inward.
    pub fn surface_normal(&self, x: Point3) -> Option<Point3> {
        let (b, leaf) = self
            .leaves()
            .map(|(b, l)| (l.distance_estimate(x), b, l))
            .filter(|(d, _, _)| d.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, b, l)| (b, l))?;
        let g = leaf.gradient(x);
        let len = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let sign = if b == Branch::Cover { 1.0 } else { -1.0 };
        (len > 0.0).then(|| g.map(|v| sign * v / len))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Reads the active structure of a binary model.
///
/// Intermediate shapes with a zero gate are skipped, and so are columns that
/// select no primitive (logged, since such a column covers nothing).
pub fn extract_tree(model: &FittedModel) -> Result<CsgTree> {
    model.require_binary()?;
    let (pc, pr) = model.primitives()?;
    let mut out = [Vec::new(), Vec::new()];
    for (slot, (b, prims)) in out.iter_mut().zip([(Branch::Cover, &pc), (Branch::Residual, &pr)]) {
        let t = model.params.selection(b);
        let w = model.params.union_weights(b);
        for i in 0..t.cols() {
            if w.get(i, 0) == 0.0 {
                continue;
            }
            let node: InterNode = (0..t.rows())
                .filter(|&k| t.get(k, i) != 0.0)
                .map(|k| Leaf {
                    coeffs: prims.row(k),
                    inverted: prims.is_inverse(k),
                    row: k,
                })
                .collect();
            if node.is_empty() {
                log::warn!("{b:?} intermediate shape {i} has W = 1 but selects nothing; excluded");
                continue;
            }
            slot.push(node);
        }
    }
    let [cover, residual] = out;
    if cover.is_empty() {
        return Err(Error::EmptyReconstruction);
    }
    Ok(CsgTree {
        cover,
        residual,
        transform: model.transform,
    })
}

fn union_contains(nodes: &[InterNode], x: Point3) -> bool {
    nodes.iter().any(|n| n.iter().all(|l| l.contains(x)))
}

/// Set-semantics evaluation: cover AND NOT residual.
pub fn eval_tree(tree: &CsgTree, points: &[Point3]) -> Vec<bool> {
    points
        .par_iter()
        .map(|&x| union_contains(&tree.cover, x) && !union_contains(&tree.residual, x))
        .collect()
}

/// Meshes the `s* = α/2` level set of a model over `[-0.5, 0.5]³`.
pub fn marching_cubes(model: &FittedModel, resolution: usize) -> Result<IsoMesh> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "marching-cubes resolution {resolution} < 16"
        )));
    }
    let eval = FieldEvaluator::new(model)?;
    let mesh = extract_isosurface(|pts| eval.values(pts), resolution, model.hyper.alpha / 2.0);
    if mesh.is_empty() {
        log::warn!("field has no sign change on the {resolution}³ grid; empty mesh");
    }
    Ok(mesh)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compactness {
    #[serde(rename = "numP")]
    pub num_p: usize,
    #[serde(rename = "numIS")]
    pub num_is: usize,
    #[serde(rename = "numSeg")]
    pub num_seg: usize,
}

/// Primitive, intermediate-shape and surface-segment counts.
///
/// Primitives are counted once per distinct coefficient row. A surface
/// sample belongs to the leaf with the smallest `|quadric|` there; a leaf
/// is a segment when it owns at least [`SEGMENT_FLOOR`] samples.
pub fn compactness(tree: &CsgTree, surface: &IsoMesh) -> Compactness {
    let rows: HashSet<[u64; QUADRIC_COEFFS]> = tree.leaves().map(|(_, l)| l.coeffs.map(f64::to_bits)).collect();
    let num_is = tree.cover.len() + tree.residual.len();
    let leaves: Vec<(Branch, &Leaf)> = tree.leaves().collect();
    let num_seg = match surface.to_mesh() {
        Ok(mesh) if !surface.is_empty() && !leaves.is_empty() => {
            let samples = sample_surface_points(&mesh, SEGMENT_SAMPLES, SEGMENT_SEED);
            let owners: Vec<usize> = samples
                .points
                .par_iter()
                .map(|&x| {
                    leaves
                        .iter()
                        .enumerate()
                        .map(|(i, (_, l))| (i, quadric_value(&l.coeffs, x).abs()))
                        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                        .0
                })
                .collect();
            // leaves with identical coefficients in the same branch share a label
            let mut counts: BTreeMap<(Branch, [u64; QUADRIC_COEFFS]), usize> = BTreeMap::new();
            for i in owners {
                let (b, l) = leaves[i];
                *counts.entry((b, l.coeffs.map(f64::to_bits))).or_default() += 1;
            }
            counts.values().filter(|&&n| n >= SEGMENT_FLOOR).count()
        }
        _ => 0,
    };
    Compactness {
        num_p: rows.len(),
        num_is,
        num_seg,
    }
}

#[cfg(test)]
mod tests;
