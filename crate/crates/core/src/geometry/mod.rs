//! Input geometry: mesh and point-cloud loading, normalisation into the
//! unit box, surface sampling, winding-number inside tests and occupancy
//! sampling.

mod io;
mod mesh;
mod occupancy;
pub mod primitives;
mod sampling;
mod winding;

pub use io::{load_mesh, load_xyz, write_obj, LoadedMesh};
pub(crate) use mesh::{cross, dot, norm};
pub use mesh::{normalize_to_unit_box, point_triangle_distance_sq, NormalizationTransform, Point3, TriangleMesh};
pub use occupancy::{
    label_normal_offsets, sample_occupancy_from_mesh, sample_occupancy_from_mesh_with,
    sample_occupancy_from_pointcloud, sample_occupancy_labelled, OccupancySet, Origin, NEAR_SURFACE_POINTS,
    POINTCLOUD_OFFSETS, SURFACE_BAND, UNIFORM_POINTS,
};
pub use sampling::{sample_surface_points, SurfaceSamples};
pub use winding::{inside_test, winding_number};

use crate::error::{Error, Result};

/// Points with unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedPointCloud {
    points: Vec<Point3>,
    normals: Vec<Point3>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Point3>, normals: Vec<Point3>) -> Result<Self> {
        let pc = Self::new_unchecked(points, normals);
        pc.check_unit_normals()?;
        Ok(pc)
    }

    /// Skips the unit-normal check; [`sample_occupancy_from_pointcloud`]
    /// still enforces it.
    pub fn new_unchecked(points: Vec<Point3>, normals: Vec<Point3>) -> Self {
        assert_eq!(points.len(), normals.len(), "one normal per point");
        Self { points, normals }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> &[Point3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_unit_normals(&self) -> Result<()> {
        for (index, n) in self.normals.iter().enumerate() {
            let len = norm(*n);
            if (len - 1.0).abs() > 1e-6 {
                return Err(Error::NonUnitNormal { index, norm: len });
            }
        }
        Ok(())
    }

    /// Same map as [`normalize_to_unit_box`], applied to the points.
    pub fn normalized(&self) -> Result<(Self, NormalizationTransform)> {
        if self.points.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let (lo, hi) = mesh::bounds_of(&self.points);
        let t = NormalizationTransform::fit_box(lo, hi)?;
        Ok((
            Self {
                points: self.points.iter().map(|&p| t.apply(p)).collect(),
                normals: self.normals.clone(),
            },
            t,
        ))
    }
}
