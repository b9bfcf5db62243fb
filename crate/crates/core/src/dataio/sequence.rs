use crate::geom::{PointCloud, RigidTransform};
use crate::{Error, Result};

/// One scan with its sensor-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub cloud: PointCloud,
    pub pose: RigidTransform,
}

impl Frame {
    /// LiDAR center in world coordinates.
    pub fn origin(&self) -> nalgebra::Vector3<f64> {
        *self.pose.translation()
    }
}

/// Time-ordered frames of one vehicle. Indices are strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSequence {
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(Error::InvalidConfig("frame indices must be strictly increasing".into()));
        }
        Ok(Self { frames })
    }

    /// Builds a sequence indexed `0..n` from clouds and poses.
    pub fn from_parts(clouds: Vec<PointCloud>, poses: Vec<RigidTransform>) -> Result<Self> {
        if clouds.len() != poses.len() {
            return Err(Error::ShapeMismatch(format!("{} clouds but {} poses", clouds.len(), poses.len())));
        }
        Ok(Self {
            frames: clouds
                .into_iter()
                .zip(poses)
                .enumerate()
                .map(|(index, (cloud, pose))| Frame { index, cloud, pose })
                .collect(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame by position in the sequence (not by its `index` field).
    pub fn frame(&self, pos: usize) -> Option<&Frame> {
        self.frames.get(pos)
    }

    /// Transform taking frame `i`'s sensor coordinates into frame `j`'s.
    pub fn relative_pose(&self, i: usize, j: usize) -> RigidTransform {
        relative_pose(&self.frames[i].pose, &self.frames[j].pose)
    }
}

/// `pose_to⁻¹ ∘ pose_from`.
pub fn relative_pose(pose_from: &RigidTransform, pose_to: &RigidTransform) -> RigidTransform {
    pose_to.inverse().compose(pose_from)
}
