use indexmap::IndexMap;
use nalgebra::{Point3, Vector3};

use super::PointCloud;

/// Integer voxel cell `(⌊x/s⌋, ⌊y/s⌋, ⌊z/s⌋)`.
pub type VoxelKey = (i64, i64, i64);

pub(crate) fn voxel_key(p: &Point3<f64>, size: f64) -> VoxelKey {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Replaces the points of each occupied voxel with their centroid.
///
/// Output order follows the first appearance of each cell in the input, and
/// centroids are accumulated in input order, so the result is deterministic.
///
/// # Panics
/// If `voxel_size` is not strictly positive and finite.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(
        voxel_size > 0.0 && voxel_size.is_finite(),
        "voxel size must be positive, got {voxel_size}"
    );
    let mut cells: IndexMap<VoxelKey, (Vector3<f64>, usize)> = IndexMap::new();
    for p in cloud.points() {
        let e = cells.entry(voxel_key(p, voxel_size)).or_insert((Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    PointCloud::from_points_unchecked(
        cells
            .into_values()
            .map(|(sum, n)| Point3::from(sum / n as f64))
            .collect(),
    )
}
