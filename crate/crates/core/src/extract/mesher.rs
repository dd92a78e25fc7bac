use std::path::Path;

use rayon::prelude::*;

use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use crate::error::Result;
use crate::geometry::{write_obj, Point3, TriangleMesh};

/// Corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs per table edge.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Triangle mesh extracted from a scalar field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IsoMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    /// Area-weighted vertex normals, pointing toward increasing field.
    pub normals: Vec<Point3>,
}

impl IsoMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn to_mesh(&self) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices.clone(), self.triangles.clone())
    }

    /// `V − E + F`, edges counted as undirected pairs.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let used = {
            let mut seen = vec![false; self.vertices.len()];
            self.triangles.iter().flatten().for_each(|&v| seen[v] = true);
            seen.into_iter().filter(|&s| s).count()
        };
        used as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        write_obj(path, &self.vertices, &self.triangles, Some(&self.normals))
    }
}

/// Sample grid over `[-0.5, 0.5]³` with `resolution` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub resolution: usize,
}

impl Grid {
    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Coordinate of node `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 + i as f64 * self.spacing()
    }

    /// All `(resolution+1)³` nodes, x fastest.
    pub fn nodes(&self) -> Vec<Point3> {
        let n = self.resolution + 1;
        let mut out = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    out.push([self.coord(i), self.coord(j), self.coord(k)]);
                }
            }
        }
        out
    }
}

/// Extracts the level set `field = level` with the region `field < level`
/// treated as inside. `field` is called once with every grid node.
///
/// The grid is padded with a layer of outside nodes, so the surface is
/// closed even where the solid touches the domain boundary; vertices on
/// padded edges sit half a cell outside the box.
pub fn extract_isosurface(field: impl Fn(&[Point3]) -> Vec<f64>, resolution: usize, level: f64) -> IsoMesh {
    let grid = Grid { resolution };
    let n = resolution + 1;
    let values = field(&grid.nodes());
    assert_eq!(values.len(), n * n * n, "one field value per node");

    // padded node index space: [0, n + 2) per axis, real node (i,j,k) at +1
    let m = n + 2;
    let h = grid.spacing();
    let pidx = |i: usize, j: usize, k: usize| (k * m + j) * m + i;
    let value = |i: usize, j: usize, k: usize| -> Option<f64> {
        if i == 0 || j == 0 || k == 0 || i > n || j > n || k > n {
            None
        } else {
            Some(values[((k - 1) * n + (j - 1)) * n + (i - 1)])
        }
    };
    let inside = |i: usize, j: usize, k: usize| value(i, j, k).is_some_and(|v| v < level);
    let pos = |i: usize, j: usize, k: usize| -> Point3 {
        [
            -0.5 + (i as f64 - 1.0) * h,
            -0.5 + (j as f64 - 1.0) * h,
            -0.5 + (k as f64 - 1.0) * h,
        ]
    };

    let mut vertex_of: [Vec<u32>; 3] = [
        vec![u32::MAX; m * m * m],
        vec![u32::MAX; m * m * m],
        vec![u32::MAX; m * m * m],
    ];
    let mut mesh = IsoMesh::default();

    for k in 0..m - 1 {
        for j in 0..m - 1 {
            for i in 0..m - 1 {
                let mut case = 0usize;
                for (bit, c) in CORNERS.iter().enumerate() {
                    if inside(i + c[0], j + c[1], k + c[2]) {
                        case |= 1 << bit;
                    }
                }
                let edges = EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                for (e, pair) in EDGES.iter().enumerate() {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let (a, b) = (CORNERS[pair[0]], CORNERS[pair[1]]);
                    let lo = if a <= b { a } else { b };
                    let axis = (0..3).find(|&d| a[d] != b[d]).expect("edge spans one axis");
                    let (li, lj, lk) = (i + lo[0], j + lo[1], k + lo[2]);
                    let mut hi = [li, lj, lk];
                    hi[axis] += 1;
                    let slot = &mut vertex_of[axis][pidx(li, lj, lk)];
                    if *slot == u32::MAX {
                        let (p0, p1) = (pos(li, lj, lk), pos(hi[0], hi[1], hi[2]));
                        let t = match (value(li, lj, lk), value(hi[0], hi[1], hi[2])) {
                            (Some(v0), Some(v1)) if v0 != v1 => ((level - v0) / (v1 - v0)).clamp(0.0, 1.0),
                            _ => 0.5,
                        };
                        let p = [0, 1, 2].map(|d| p0[d] + t * (p1[d] - p0[d]));
                        *slot = mesh.vertices.len() as u32;
                        mesh.vertices.push(p);
                    }
                    ids[e] = *slot;
                }
                for tri in TRIANGLE_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // table winding faces the inside; flip to face outward
                    mesh.triangles.push([
                        ids[tri[0] as usize] as usize,
                        ids[tri[2] as usize] as usize,
                        ids[tri[1] as usize] as usize,
                    ]);
                }
            }
        }
    }
    mesh.normals = vertex_normals(&mesh.vertices, &mesh.triangles);
    mesh
}

fn vertex_normals(vertices: &[Point3], triangles: &[[usize; 3]]) -> Vec<Point3> {
    let mut acc = vec![[0.0; 3]; vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        for &i in t {
            for d in 0..3 {
                acc[i][d] += n[d];
            }
        }
    }
    acc.into_par_iter()
        .map(|n| {
            let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if l > 0.0 {
                [n[0] / l, n[1] / l, n[2] / l]
            } else {
                [0.0; 3]
            }
        })
        .collect()
}
