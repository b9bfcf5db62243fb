use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::sim::{line_trajectory, simulate_sequence, simulate_world, LidarConfig, WorldModel};
use super::FrameSequence;
use crate::geom::RigidTransform;
use crate::{Error, Result};

/// Two vehicles driving the same seeded world on parallel lanes, one frame
/// per `step` meters across the whole extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLaneScenario {
    pub seed: u64,
    /// Side of the square world, meters.
    pub extent: f64,
    /// Obstacles drawn before the lanes are cleared.
    pub obstacles: usize,
    /// Lanes run at `y = ∓lane_offset`.
    pub lane_offset: f64,
    pub step: f64,
    /// Obstacles closer than this to either lane are dropped.
    pub clearance: f64,
    pub lidar: LidarConfig,
}

impl Default for TwoLaneScenario {
    /// 40 m world with 140 obstacles, lanes 8 m apart, a 32-ring sensor
    /// tilted up (−2° to +18°) so ground returns stay sparse.
    fn default() -> Self {
        Self {
            seed: 1,
            extent: 40.0,
            obstacles: 140,
            lane_offset: 4.0,
            step: 1.0,
            clearance: 2.5,
            lidar: LidarConfig::with_rings(1024, 32, -2.0, 18.0),
        }
    }
}

impl TwoLaneScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= self.extent) || !(self.clearance >= 0.0) || !self.lane_offset.is_finite() {
            return Err(Error::InvalidConfig("scenario needs 0 < step ≤ extent and clearance ≥ 0".into()));
        }
        self.lidar.validate()
    }

    pub fn frames(&self) -> usize {
        (self.extent / self.step).floor() as usize + 1
    }

    /// Poses of lane 0 (`y = −offset`) or lane 1 (`y = +offset`).
    pub fn trajectory(&self, lane: usize) -> Vec<RigidTransform> {
        let y = if lane == 0 { -self.lane_offset } else { self.lane_offset };
        line_trajectory(Vector2::new(-self.extent / 2.0, y), 0.0, self.step, self.frames())
    }

    pub fn world(&self) -> Result<WorldModel> {
        self.validate()?;
        let (a, b) = (self.trajectory(0), self.trajectory(1));
        Ok(simulate_world(self.seed, self.extent, self.obstacles)?.with_clearance(a.iter().chain(&b), self.clearance))
    }

    pub fn sequences(&self) -> Result<(FrameSequence, FrameSequence)> {
        let world = self.world()?;
        let a = simulate_sequence(&world, &self.trajectory(0), &self.lidar)?;
        let b = simulate_sequence(&world, &self.trajectory(1), &self.lidar)?;
        Ok((a, b))
    }
}
