use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::mesh::{normalized, Point3, TriangleMesh};
use super::sampling::sample_surface_points;
use super::winding::inside_test;
use super::OrientedPointCloud;
use crate::error::{Error, Result};

pub const NEAR_SURFACE_POINTS: usize = 24_576;
pub const UNIFORM_POINTS: usize = 4_096;
pub const POINTCLOUD_OFFSETS: usize = 8;
/// Largest near-surface offset, and the σ of point-cloud offsets.
pub const SURFACE_BAND: f64 = 1.0 / 64.0;

const MAGIC: &[u8; 4] = b"D2CS";
const VERSION: u32 = 1;

/// How an occupancy sample was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Origin {
    NearSurface = 0,
    Uniform = 1,
    NormalOffset = 2,
}

impl Origin {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::NearSurface),
            1 => Some(Self::Uniform),
            2 => Some(Self::NormalOffset),
            _ => None,
        }
    }
}

/// Labelled query points in `[-0.5, 0.5]³` (`true` = inside).
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancySet {
    pub points: Vec<[f32; 3]>,
    pub labels: Vec<bool>,
    pub origins: Vec<Origin>,
}

impl OccupancySet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn inside_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn point(&self, i: usize) -> Point3 {
        let p = self.points[i];
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    /// Non-empty with both labels present.
    pub fn validate_for_fitting(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidOccupancy("no points".into()));
        }
        if self.labels.len() != self.len() || self.origins.len() != self.len() {
            return Err(Error::InvalidOccupancy("column lengths differ".into()));
        }
        let inside = self.inside_count();
        if inside == 0 {
            return Err(Error::InvalidOccupancy("all points are outside".into()));
        }
        if inside == self.len() {
            return Err(Error::InvalidOccupancy("all points are inside".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for v in self.points[i] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[self.labels[i] as u8, self.origins[i] as u8])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |reason: &str| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing D2CS header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad("unsupported occupancy version"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        const RECORD: usize = 14;
        if bytes.len() != 16 + n * RECORD {
            return Err(bad("record count does not match file length"));
        }
        let mut set = Self {
            points: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            origins: Vec::with_capacity(n),
        };
        for rec in bytes[16..].chunks_exact(RECORD) {
            let f = |k: usize| f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap());
            set.points.push([f(0), f(1), f(2)]);
            set.labels.push(match rec[12] {
                0 => false,
                1 => true,
                _ => return Err(bad("label byte is not 0/1")),
            });
            set.origins
                .push(Origin::from_u8(rec[13]).ok_or_else(|| bad("unknown origin tag"))?);
        }
        Ok(set)
    }
}

fn clamp_to_box(p: Point3) -> [f32; 3] {
    [
        p[0].clamp(-0.5, 0.5) as f32,
        p[1].clamp(-0.5, 0.5) as f32,
        p[2].clamp(-0.5, 0.5) as f32,
    ]
}

fn widen(p: [f32; 3]) -> Point3 {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Default mesh protocol: 24,576 near-surface and 4,096 uniform points.
pub fn sample_occupancy_from_mesh(mesh: &TriangleMesh, seed: u64) -> OccupancySet {
    sample_occupancy_from_mesh_with(mesh, NEAR_SURFACE_POINTS, UNIFORM_POINTS, seed)
}

/// Near-surface points are a surface sample displaced in a uniformly random
/// direction by a uniform distance in `[0, 1/64]`; uniform points are i.i.d.
/// in the unit box. Everything is clamped to `[-0.5, 0.5]³` (a projection
/// onto a convex set containing the surface, so the band bound still holds)
/// and then labelled by the winding-number inside test.
pub fn sample_occupancy_from_mesh_with(mesh: &TriangleMesh, near: usize, uniform: usize, seed: u64) -> OccupancySet {
    sample_occupancy_labelled(mesh, near, uniform, seed, |pts| inside_test(mesh, pts))
}

/// Same point layout as [`sample_occupancy_from_mesh_with`], labelled by an
/// arbitrary inside predicate (e.g. the closed form of an analytic solid).
pub fn sample_occupancy_labelled(
    mesh: &TriangleMesh,
    near: usize,
    uniform: usize,
    seed: u64,
    label: impl Fn(&[Point3]) -> Vec<bool>,
) -> OccupancySet {
    let surface = sample_surface_points(mesh, near, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut points = Vec::with_capacity(near + uniform);
    let mut origins = Vec::with_capacity(near + uniform);
    for p in &surface.points {
        let dir = normalized([
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]);
        let mag = rng.random::<f64>() * SURFACE_BAND;
        points.push(clamp_to_box([
            p[0] + dir[0] * mag,
            p[1] + dir[1] * mag,
            p[2] + dir[2] * mag,
        ]));
        origins.push(Origin::NearSurface);
    }
    for _ in 0..uniform {
        points.push(clamp_to_box([
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        ]));
        origins.push(Origin::Uniform);
    }
    let wide: Vec<Point3> = points.iter().map(|&p| widen(p)).collect();
    let labels = label(&wide);
    OccupancySet {
        points,
        labels,
        origins,
    }
}

/// Eight samples `x + t·n` per point with `t ~ N(0, 1/64)`; points behind
/// the surface (`t < 0`) are inside, `t = 0` counts as outside.
pub fn sample_occupancy_from_pointcloud(pc: &OrientedPointCloud, seed: u64) -> Result<OccupancySet> {
    pc.check_unit_normals()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = Normal::new(0.0, SURFACE_BAND).expect("valid sigma");
    let n = pc.len() * POINTCLOUD_OFFSETS;
    let mut set = OccupancySet {
        points: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        origins: vec![Origin::NormalOffset; n],
    };
    for (p, nrm) in pc.points().iter().zip(pc.normals()) {
        for _ in 0..POINTCLOUD_OFFSETS {
            let t: f64 = offset.sample(&mut rng);
            set.points
                .push(clamp_to_box([p[0] + t * nrm[0], p[1] + t * nrm[1], p[2] + t * nrm[2]]));
            set.labels.push(t < 0.0);
        }
    }
    Ok(set)
}

/// Labels for explicit offsets along each normal; used to pin the sign rule.
pub fn label_normal_offsets(pc: &OrientedPointCloud, offsets: &[f64]) -> OccupancySet {
    let mut set = OccupancySet {
        points: Vec::new(),
        labels: Vec::new(),
        origins: Vec::new(),
    };
    for (p, nrm) in pc.points().iter().zip(pc.normals()) {
        for &t in offsets {
            set.points
                .push(clamp_to_box([p[0] + t * nrm[0], p[1] + t * nrm[1], p[2] + t * nrm[2]]));
            set.labels.push(t < 0.0);
            set.origins.push(Origin::NormalOffset);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::norm;
    use crate::geometry::primitives::{box_mesh, icosphere};

    #[test]
    fn protocol_counts() {
        let sphere = icosphere([0.0; 3], 0.4, 2);
        let occ = sample_occupancy_from_mesh(&sphere, 3);
        assert_eq!(occ.len(), 28_672);
        assert_eq!(
            occ.origins.iter().filter(|&&o| o == Origin::NearSurface).count(),
            24_576
        );
        assert_eq!(occ.origins.iter().filter(|&&o| o == Origin::Uniform).count(), 4_096);
        for (i, p) in occ.points.iter().enumerate() {
            assert!(p.iter().all(|v| (-0.5..=0.5).contains(v)));
            if occ.origins[i] == Origin::Uniform && norm(widen(*p)) > 0.4 + 1e-3 {
                assert!(!occ.labels[i]);
            }
        }
    }

    #[test]
    fn near_surface_band_and_determinism() {
        let cube = box_mesh([-0.4; 3], [0.4; 3]);
        let a = sample_occupancy_from_mesh_with(&cube, 2000, 500, 11);
        let b = sample_occupancy_from_mesh_with(&cube, 2000, 500, 11);
        assert_eq!(a, b);
        for i in 0..2000 {
            assert!(cube.distance_to_surface(a.point(i)) <= SURFACE_BAND + 1e-6);
        }
    }

    #[test]
    fn cube_volume_fraction_of_uniform_points() {
        let cube = box_mesh([-0.4; 3], [0.4; 3]);
        let occ = sample_occupancy_from_mesh_with(&cube, 0, 4096, 5);
        let frac = occ.inside_count() as f64 / 4096.0;
        assert!((frac - 0.512).abs() < 0.03, "{frac}");
    }

    #[test]
    fn pointcloud_sign_rule() {
        let pc = OrientedPointCloud::new(vec![[0.0; 3]], vec![[0.0, 0.0, 1.0]]).unwrap();
        let set = label_normal_offsets(&pc, &[-0.01, 0.01, 0.0]);
        assert_eq!(set.labels, vec![true, false, false]);
    }

    #[test]
    fn pointcloud_counts_and_sphere_geometry() {
        let sphere = icosphere([0.0; 3], 0.4, 3);
        let s = sample_surface_points(&sphere, 8192, 1);
        // analytic outward normals
        let normals: Vec<Point3> = s.points.iter().map(|&p| normalized(p)).collect();
        let points: Vec<Point3> = normals.iter().map(|n| [n[0] * 0.4, n[1] * 0.4, n[2] * 0.4]).collect();
        let pc = OrientedPointCloud::new(points, normals).unwrap();
        let occ = sample_occupancy_from_pointcloud(&pc, 9).unwrap();
        assert_eq!(occ.len(), 65_536);
        let inside: Vec<usize> = (0..occ.len()).filter(|&i| occ.labels[i]).collect();
        let bad = inside.iter().filter(|&&i| norm(occ.point(i)) >= 0.4).count();
        assert!((bad as f64) < 0.01 * inside.len() as f64);
    }

    #[test]
    fn non_unit_normals_rejected() {
        let pc = OrientedPointCloud::new_unchecked(vec![[0.0; 3]], vec![[0.0, 0.0, 2.0]]);
        assert!(matches!(
            sample_occupancy_from_pointcloud(&pc, 0),
            Err(Error::NonUnitNormal { .. })
        ));
    }

    #[test]
    fn binary_round_trip() {
        let cube = box_mesh([-0.4; 3], [0.4; 3]);
        let occ = sample_occupancy_from_mesh_with(&cube, 100, 50, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.d2cs");
        occ.write(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"D2CS");
        assert_eq!(bytes.len(), 16 + 150 * 14);
        assert_eq!(OccupancySet::read(&path).unwrap(), occ);
    }

    #[test]
    fn fitting_requires_both_labels() {
        let mut occ = sample_occupancy_from_mesh_with(&box_mesh([-0.4; 3], [0.4; 3]), 100, 50, 2);
        assert!(occ.validate_for_fitting().is_ok());
        occ.labels.iter_mut().for_each(|l| *l = true);
        assert!(occ.validate_for_fitting().is_err());
    }
}
