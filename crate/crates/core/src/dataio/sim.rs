//! A ray-casting LiDAR simulator over a ground plane with box and cylinder
//! obstacles. Reproduces range-dependent density and occlusion.

use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FrameSequence;
use crate::geom::{PointCloud, RigidTransform};
use crate::{Error, Result};

/// KITTI Velodyne mounting height, meters.
pub const DEFAULT_SENSOR_HEIGHT: f64 = 1.73;

const HIT_EPS: f64 = 1e-9;
const NOISE_CLAMP_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    /// Rays per ring.
    pub azimuth_steps: usize,
    /// Ring elevations, degrees.
    pub elevation_angles: Vec<f64>,
    pub max_range: f64,
    /// Standard deviation of the range noise, meters. Noise is truncated at 6σ.
    pub range_noise_sigma: f64,
}

impl Default for LidarConfig {
    /// 1024 azimuth steps, 16 rings spanning −15° to +5°, 80 m range, 1 cm noise.
    fn default() -> Self {
        Self {
            azimuth_steps: 1024,
            elevation_angles: evenly_spaced(-15.0, 5.0, 16),
            max_range: 80.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl LidarConfig {
    pub fn with_rings(azimuth_steps: usize, rings: usize, lowest: f64, highest: f64) -> Self {
        Self {
            azimuth_steps,
            elevation_angles: evenly_spaced(lowest, highest, rings),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.azimuth_steps < 8 {
            return Err(Error::InvalidConfig("azimuth_steps must be at least 8".into()));
        }
        if self.elevation_angles.is_empty() || self.elevation_angles.iter().any(|e| !e.is_finite() || e.abs() >= 90.0) {
            return Err(Error::InvalidConfig("elevation angles must be finite and within (-90, 90)".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidConfig("max_range must be positive".into()));
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("range_noise_sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

fn evenly_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Axis-aligned box, `min` and `max` corners in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Vertical cylinder standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Box(Aabb),
    Cylinder(Cylinder),
}

impl Obstacle {
    /// Horizontal distance from `xy` to the obstacle footprint (0 inside).
    pub fn footprint_distance(&self, xy: Vector2<f64>) -> f64 {
        match self {
            Obstacle::Box(b) => {
                let dx = (b.min[0] - xy.x).max(0.0).max(xy.x - b.max[0]);
                let dy = (b.min[1] - xy.y).max(0.0).max(xy.y - b.max[1]);
                dx.hypot(dy)
            }
            Obstacle::Cylinder(c) => ((xy - Vector2::new(c.center[0], c.center[1])).norm() - c.radius).max(0.0),
        }
    }

    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Obstacle::Box(b) => intersect_box(b, o, d),
            Obstacle::Cylinder(c) => intersect_cylinder(c, o, d),
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            Obstacle::Box(b) => (0..3).all(|k| b.max[k] > b.min[k]) && b.min[2] >= 0.0,
            Obstacle::Cylinder(c) => c.radius > 0.0 && c.height > 0.0,
        }
    }
}

/// Ground plane `z = 0` plus obstacles. The seed also drives scan noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub seed: u64,
    /// Side of the square `[-extent/2, extent/2]²` obstacles are placed in.
    pub extent: f64,
    pub obstacles: Vec<Obstacle>,
}

impl WorldModel {
    pub fn new(seed: u64, extent: f64, obstacles: Vec<Obstacle>) -> Result<Self> {
        if !(extent > 0.0) {
            return Err(Error::InvalidConfig("extent must be positive".into()));
        }
        if !obstacles.iter().all(Obstacle::is_valid) {
            return Err(Error::InvalidConfig("obstacles need positive size and must sit above ground".into()));
        }
        Ok(Self {
            seed,
            extent,
            obstacles,
        })
    }

    /// Drops obstacles whose footprint comes within `clearance` of any path
    /// point, so sensors never start inside geometry.
    pub fn with_clearance<'a>(&self, path: impl IntoIterator<Item = &'a RigidTransform>, clearance: f64) -> Self {
        let xy: Vec<Vector2<f64>> = path.into_iter().map(|p| p.translation().xy()).collect();
        Self {
            seed: self.seed,
            extent: self.extent,
            obstacles: self
                .obstacles
                .iter()
                .copied()
                .filter(|o| xy.iter().all(|p| o.footprint_distance(*p) > clearance))
                .collect(),
        }
    }

    fn cast(&self, o: &Vector3<f64>, d: &Vector3<f64>, max_range: f64) -> Option<f64> {
        let mut best = if d.z < 0.0 { Some(-o.z / d.z) } else { None };
        for obs in &self.obstacles {
            if let Some(t) = obs.intersect(o, d) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best.filter(|t| *t > HIT_EPS && *t <= max_range)
    }
}

/// Places `n_obstacles` boxes and cylinders uniformly in the world square.
pub fn simulate_world(seed: u64, extent: f64, n_obstacles: usize) -> Result<WorldModel> {
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(Error::InvalidConfig("extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = extent / 2.0;
    let obstacles = (0..n_obstacles)
        .map(|_| {
            let cx = rng.random_range(-half..half);
            let cy = rng.random_range(-half..half);
            if rng.random_bool(0.5) {
                let (sx, sy) = (rng.random_range(1.0..6.0), rng.random_range(1.0..6.0));
                let h = rng.random_range(1.0..5.0);
                Obstacle::Box(Aabb {
                    min: [cx - sx / 2.0, cy - sy / 2.0, 0.0],
                    max: [cx + sx / 2.0, cy + sy / 2.0, h],
                })
            } else {
                Obstacle::Cylinder(Cylinder {
                    center: [cx, cy],
                    radius: rng.random_range(0.3..1.5),
                    height: rng.random_range(1.5..6.0),
                })
            }
        })
        .collect();
    WorldModel::new(seed, extent, obstacles)
}

/// Casts one ray per (azimuth, ring) from the sensor and returns the first
/// hits, with truncated Gaussian range noise, in sensor coordinates.
///
/// The sensor must be above ground. Noise is a pure function of the world
/// seed and the pose.
pub fn simulate_scan(world: &WorldModel, sensor_pose: &RigidTransform, cfg: &LidarConfig) -> PointCloud {
    debug_assert!(sensor_pose.translation().z > 0.0, "sensor below ground");
    let origin = *sensor_pose.translation();
    let mut rng = ChaCha8Rng::seed_from_u64(scan_seed(world.seed, sensor_pose));
    let clamp = NOISE_CLAMP_SIGMAS * cfg.range_noise_sigma;
    let rings: Vec<(f64, f64)> = cfg
        .elevation_angles
        .iter()
        .map(|e| (e.to_radians().cos(), e.to_radians().sin()))
        .collect();
    let mut points = Vec::new();
    for a in 0..cfg.azimuth_steps {
        let az = std::f64::consts::TAU * a as f64 / cfg.azimuth_steps as f64;
        let (sa, ca) = az.sin_cos();
        for &(ce, se) in &rings {
            let local = Vector3::new(ce * ca, ce * sa, se);
            let dir = sensor_pose.apply_vector(&local);
            // one noise draw per ray keeps the stream independent of hits
            let z: f64 = rng.sample(StandardNormal);
            if let Some(range) = world.cast(&origin, &dir, cfg.max_range) {
                let noisy = range + (z * cfg.range_noise_sigma).clamp(-clamp, clamp);
                points.push(Point3::from(local * noisy));
            }
        }
    }
    PointCloud::from_points_unchecked(points)
}

/// One scan per trajectory pose; poses are recorded as ground truth.
pub fn simulate_sequence(world: &WorldModel, trajectory: &[RigidTransform], cfg: &LidarConfig) -> Result<FrameSequence> {
    if trajectory.is_empty() {
        return Err(Error::InvalidConfig("trajectory is empty".into()));
    }
    cfg.validate()?;
    let clouds: Vec<PointCloud> = trajectory.par_iter().map(|p| simulate_scan(world, p, cfg)).collect();
    FrameSequence::from_parts(clouds, trajectory.to_vec())
}

/// `n` poses along a straight line at sensor height, facing along the motion.
pub fn line_trajectory(start: Vector2<f64>, heading: f64, step: f64, n: usize) -> Vec<RigidTransform> {
    let dir = Vector2::new(heading.cos(), heading.sin());
    (0..n)
        .map(|k| {
            let xy = start + dir * (step * k as f64);
            RigidTransform::from_yaw(heading, Vector3::new(xy.x, xy.y, DEFAULT_SENSOR_HEIGHT))
        })
        .collect()
}

/// `n` poses on a circular arc, `step` meters of arc apart, facing along the
/// tangent. Positive `radius` turns left.
pub fn arc_trajectory(start: Vector2<f64>, heading: f64, radius: f64, step: f64, n: usize) -> Vec<RigidTransform> {
    let left = Vector2::new(-heading.sin(), heading.cos());
    let center = start + left * radius;
    (0..n)
        .map(|k| {
            let turned = heading + step * k as f64 / radius;
            let xy = center - Vector2::new(-turned.sin(), turned.cos()) * radius;
            RigidTransform::from_yaw(turned, Vector3::new(xy.x, xy.y, DEFAULT_SENSOR_HEIGHT))
        })
        .collect()
}

fn intersect_box(b: &Aabb, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let t1 = (b.min[k] - o[k]) / d[k];
        let t2 = (b.max[k] - o[k]) / d[k];
        t_enter = t_enter.max(t1.min(t2));
        t_exit = t_exit.min(t1.max(t2));
    }
    (t_enter <= t_exit && t_enter > HIT_EPS).then_some(t_enter)
}

fn intersect_cylinder(c: &Cylinder, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    let rel = o.xy() - Vector2::new(c.center[0], c.center[1]);
    let dxy = d.xy();
    let a = dxy.norm_squared();
    if a > 1e-15 {
        let b = 2.0 * rel.dot(&dxy);
        let cc = rel.norm_squared() - c.radius * c.radius;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let z = o.z + t * d.z;
            if t > HIT_EPS && (0.0..=c.height).contains(&z) {
                best = Some(t);
            }
        }
    }
    if d.z < 0.0 && o.z > c.height {
        let t = (c.height - o.z) / d.z;
        if (rel + dxy * t).norm_squared() <= c.radius * c.radius && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// splitmix64 over the seed and the pose bits.
fn scan_seed(seed: u64, pose: &RigidTransform) -> u64 {
    pose.to_row_major_3x4()
        .iter()
        .fold(splitmix(seed), |h, v| splitmix(h ^ v.to_bits()))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
