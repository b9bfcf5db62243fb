//! Core 3D geometry.

mod cloud;
mod kabsch;
mod kdtree;
mod metrics;
mod transform;
mod voxel;

pub use cloud::{Correspondences, PointCloud};
pub use kabsch::{kabsch, kabsch_points};
pub use kdtree::{Neighbor, NeighborIndex};
pub use metrics::{overlap_ratio, rre, rte, DEFAULT_OVERLAP_TAU};
pub(crate) use metrics::overlap_ratio_indexed;
pub use transform::{apply_transform, RigidTransform};
pub use voxel::{voxel_downsample, VoxelKey};

pub use nalgebra::{Matrix3, Point3, Vector3};
