//! Aggregated point cloud (APC) generation: the decoder's reconstruction
//! target, built from pose-aligned neighboring frames of a key frame.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::FrameSequence;
use crate::geom::{apply_transform, voxel_downsample, NeighborIndex, PointCloud, RigidTransform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApgConfig {
    /// Non-key frames sampled on each temporal side.
    pub psi: usize,
    /// Target spacing between sampled frames, meters.
    pub alpha: f64,
    /// Crop radius around the key-frame sensor origin, meters.
    pub scope_radius: f64,
    pub voxel_size: f64,
    pub include_key_frame: bool,
}

impl Default for ApgConfig {
    fn default() -> Self {
        Self {
            psi: 3,
            alpha: 10.0,
            scope_radius: 50.0,
            voxel_size: 0.3,
            include_key_frame: false,
        }
    }
}

impl ApgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.psi == 0 {
            return Err(Error::InvalidConfig("psi must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("scope_radius", self.scope_radius), ("voxel_size", self.voxel_size)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Random rotations injected into some non-key frames, simulating failed
/// alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisturbConfig {
    pub n_disturb: usize,
    pub seed: u64,
}

/// Non-key frames chosen around a key frame, as sequence positions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NonKeySelection {
    /// Ordered by target distance `α, 2α, …`.
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    /// Targets that could not be met because the sequence ran out.
    pub shortfall: usize,
}

impl NonKeySelection {
    pub fn indices(&self) -> Vec<usize> {
        self.before.iter().chain(&self.after).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.before.len() + self.after.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// For each side and each `k = 1..=ψ`, picks the not-yet-chosen frame whose
/// origin is closest to Euclidean distance `k·α` from the key origin. Targets
/// left over once a side runs out of frames are reported as shortfall.
pub fn select_nonkey_frames(seq: &FrameSequence, key: usize, cfg: &ApgConfig) -> NonKeySelection {
    assert!(key < seq.len(), "key index {key} out of range for {} frames", seq.len());
    let origin = seq.frames()[key].origin();
    let pick_side = |side: &mut dyn Iterator<Item = usize>| -> (Vec<usize>, usize) {
        // temporally outward, so ties keep the frame nearer in time
        let mut cands: Vec<(usize, f64)> = side.map(|j| (j, (seq.frames()[j].origin() - origin).norm())).collect();
        let mut chosen = Vec::with_capacity(cfg.psi);
        for k in 1..=cfg.psi {
            let target = k as f64 * cfg.alpha;
            let best = cands
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |best, (slot, &(_, d))| {
                    let err = (d - target).abs();
                    match best {
                        Some((_, e)) if e <= err => best,
                        _ => Some((slot, err)),
                    }
                });
            match best {
                Some((slot, _)) => chosen.push(cands.remove(slot).0),
                None => break,
            }
        }
        let missing = cfg.psi - chosen.len();
        (chosen, missing)
    };
    let (before, miss_b) = pick_side(&mut (0..key).rev());
    let (after, miss_a) = pick_side(&mut (key + 1..seq.len()));
    NonKeySelection {
        before,
        after,
        shortfall: miss_b + miss_a,
    }
}

/// A frame mapped into the key frame's sensor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFrame {
    pub index: usize,
    pub cloud: PointCloud,
    pub is_key: bool,
    pub disturbed: bool,
}

/// Maps the selected non-key frames (and the key frame, if configured) into
/// the key frame via `pose_key⁻¹ ∘ pose_j`, applying disturbance rotations
/// about each chosen frame's own sensor origin first.
pub fn align_frames(
    seq: &FrameSequence,
    key: usize,
    cfg: &ApgConfig,
    disturb: Option<&DisturbConfig>,
) -> Result<Vec<AlignedFrame>> {
    cfg.validate()?;
    if key >= seq.len() {
        return Err(Error::InvalidConfig(format!("key index {key} out of range for {} frames", seq.len())));
    }
    let selection = select_nonkey_frames(seq, key, cfg);
    if selection.is_empty() {
        return Err(Error::NoNeighborFrames(key));
    }
    let indices = selection.indices();
    let rotations = disturbance_rotations(indices.len(), disturb);
    let key_inv = seq.frames()[key].pose.inverse();

    let mut out = Vec::with_capacity(indices.len() + 1);
    if cfg.include_key_frame {
        out.push(AlignedFrame {
            index: key,
            cloud: seq.frames()[key].cloud.clone(),
            is_key: true,
            disturbed: false,
        });
    }
    for (slot, &j) in indices.iter().enumerate() {
        let mut to_key = key_inv.compose(&seq.frames()[j].pose);
        if let Some(rot) = &rotations[slot] {
            to_key = to_key.compose(rot);
        }
        out.push(AlignedFrame {
            index: j,
            cloud: apply_transform(&seq.frames()[j].cloud, &to_key),
            is_key: false,
            disturbed: rotations[slot].is_some(),
        });
    }
    Ok(out)
}

/// One optional rotation per selected slot. `n_disturb` is capped at the
/// number of frames actually available; zero draws nothing from the RNG.
fn disturbance_rotations(slots: usize, disturb: Option<&DisturbConfig>) -> Vec<Option<RigidTransform>> {
    let mut rotations = vec![None; slots];
    let Some(d) = disturb.filter(|d| d.n_disturb > 0) else {
        return rotations;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let mut chosen = rand::seq::index::sample(&mut rng, slots, d.n_disturb.min(slots)).into_vec();
    chosen.sort_unstable();
    for slot in chosen {
        let axis = loop {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            if v.norm() > 1e-9 {
                break v;
            }
        };
        let theta = rng.random_range(-PI..=PI);
        rotations[slot] = Some(RigidTransform::from_axis_angle(&axis, theta, Vector3::zeros()));
    }
    rotations
}

/// Builds the APC for `key`: aligned frames, cropped to the scope sphere
/// around the key sensor origin, then voxel-downsampled.
pub fn generate_apc(
    seq: &FrameSequence,
    key: usize,
    cfg: &ApgConfig,
    disturb: Option<&DisturbConfig>,
) -> Result<PointCloud> {
    let frames = align_frames(seq, key, cfg, disturb)?;
    let merged = PointCloud::concat(frames.iter().map(|f| &f.cloud));
    Ok(crop_and_voxelize(&merged, cfg))
}

/// Scope-sphere crop followed by voxel downsampling.
pub fn crop_and_voxelize(cloud: &PointCloud, cfg: &ApgConfig) -> PointCloud {
    let r2 = cfg.scope_radius * cfg.scope_radius;
    let cropped = cloud.filter(|p| p.coords.norm_squared() <= r2);
    // centroids of points inside the sphere may not leave it: the ball is convex
    voxel_downsample(&cropped, cfg.voxel_size)
}

/// Fraction of APC points farther than `tau` from every key-frame point:
/// geometry present in the target but absent from the input.
pub fn apc_coverage_gain(key_frame: &PointCloud, apc: &PointCloud, tau: f64) -> Result<f64> {
    if key_frame.is_empty() || apc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NeighborIndex::build(key_frame)?;
    let tau_sq = tau * tau;
    let far = apc.points().iter().filter(|p| index.nearest(p).dist_sq > tau_sq).count();
    Ok(far as f64 / apc.len() as f64)
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector2;

    use super::*;
    use crate::dataio::line_trajectory;

    fn straight_seq(n: usize, cloud: &PointCloud) -> FrameSequence {
        let poses = line_trajectory(Vector2::zeros(), 0.0, 1.0, n);
        FrameSequence::from_parts(vec![cloud.clone(); n], poses).unwrap()
    }

    fn small_cloud() -> PointCloud {
        PointCloud::from_xyz(&(0..60).map(|i| [(i % 10) as f64 * 0.7, (i / 10) as f64 * 0.9 - 2.0, -1.7]).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn uniform_motion_selects_multiples_of_alpha() {
        let seq = straight_seq(100, &small_cloud());
        let sel = select_nonkey_frames(&seq, 50, &ApgConfig::default());
        assert_eq!(sel.before, vec![40, 30, 20]);
        assert_eq!(sel.after, vec![60, 70, 80]);
        assert_eq!(sel.shortfall, 0);
    }

    #[test]
    fn key_at_start_has_only_after_frames() {
        let seq = straight_seq(30, &small_cloud());
        let cfg = ApgConfig { psi: 1, ..ApgConfig::default() };
        let sel = select_nonkey_frames(&seq, 0, &cfg);
        assert!(sel.before.is_empty());
        assert_eq!(sel.after, vec![10]);
        assert_eq!(sel.shortfall, 1);
    }

    #[test]
    fn short_sequence_reports_shortfall() {
        let seq = straight_seq(16, &small_cloud());
        let sel = select_nonkey_frames(&seq, 13, &ApgConfig::default());
        assert_eq!(sel.before, vec![3, 0, 1]);
        assert_eq!(sel.after, vec![15, 14]);
        assert_eq!(sel.shortfall, 1);
    }

    #[test]
    fn no_neighbors_is_an_error() {
        let seq = straight_seq(1, &small_cloud());
        assert!(matches!(generate_apc(&seq, 0, &ApgConfig::default(), None), Err(Error::NoNeighborFrames(0))));
    }

    #[test]
    fn identical_static_frames_collapse_to_one_voxelized_frame() {
        let c = small_cloud();
        let poses = vec![RigidTransform::identity(); 5];
        let seq = FrameSequence::from_parts(vec![c.clone(); 5], poses).unwrap();
        let cfg = ApgConfig { scope_radius: 5.0, ..ApgConfig::default() };
        let apc = generate_apc(&seq, 2, &cfg, None).unwrap();
        let single = crop_and_voxelize(&c, &cfg);
        assert_eq!(apc.len(), single.len());
        for (a, b) in apc.points().iter().zip(single.points()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn disturbance_zero_is_bit_identical() {
        let seq = straight_seq(80, &small_cloud());
        let cfg = ApgConfig::default();
        let plain = generate_apc(&seq, 40, &cfg, None).unwrap();
        let zero = generate_apc(&seq, 40, &cfg, Some(&DisturbConfig { n_disturb: 0, seed: 99 })).unwrap();
        assert_eq!(plain, zero);
    }

    #[test]
    fn disturbance_moves_only_chosen_frames() {
        let seq = straight_seq(80, &small_cloud());
        let cfg = ApgConfig { include_key_frame: true, ..ApgConfig::default() };
        let clean = align_frames(&seq, 40, &cfg, None).unwrap();
        for seed in 0..5 {
            let d = DisturbConfig { n_disturb: 2, seed };
            let dist = align_frames(&seq, 40, &cfg, Some(&d)).unwrap();
            assert_eq!(dist.iter().filter(|f| f.disturbed).count(), 2);
            for (a, b) in clean.iter().zip(&dist) {
                assert_eq!(a.index, b.index);
                if b.is_key {
                    assert_eq!(a.cloud, b.cloud);
                }
                if !b.disturbed {
                    assert_eq!(a.cloud, b.cloud);
                }
            }
            assert_eq!(dist, align_frames(&seq, 40, &cfg, Some(&d)).unwrap());
        }
    }

    #[test]
    fn disturbance_rotates_about_sensor_origin() {
        // a point at a frame's own sensor origin is a fixed point of the disturbance
        let origin_cloud = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let seq = straight_seq(40, &origin_cloud);
        let cfg = ApgConfig { psi: 1, ..ApgConfig::default() };
        let clean = align_frames(&seq, 20, &cfg, None).unwrap();
        let dist = align_frames(&seq, 20, &cfg, Some(&DisturbConfig { n_disturb: 2, seed: 7 })).unwrap();
        for (a, b) in clean.iter().zip(&dist) {
            assert!((a.cloud[0] - b.cloud[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn coverage_gain_counts_far_points() {
        let key = small_cloud();
        assert_eq!(apc_coverage_gain(&key, &key, 0.1).unwrap(), 0.0);
        let key99 = key.select(&(0..59).collect::<Vec<_>>());
        let mut pts = key99.points().to_vec();
        pts.push(nalgebra::Point3::new(100.0, 0.0, 0.0));
        // 59 + 1 points; scale to the 99 + 1 case below
        let apc = PointCloud::new(pts).unwrap();
        assert!((apc_coverage_gain(&key99, &apc, 0.1).unwrap() - 1.0 / 60.0).abs() < 1e-15);
        let ring: Vec<[f64; 3]> = (0..99).map(|i| [(i as f64 * 0.0634).cos() * 10.0, (i as f64 * 0.0634).sin() * 10.0, 0.0]).collect();
        let key = PointCloud::from_xyz(&ring).unwrap();
        let mut with_far = ring.clone();
        with_far.push([50.0, 50.0, 0.0]);
        let apc = PointCloud::from_xyz(&with_far).unwrap();
        assert_eq!(apc_coverage_gain(&key, &apc, 0.1).unwrap(), 1.0 / 100.0);
        assert!(apc_coverage_gain(&PointCloud::empty(), &apc, 0.1).is_err());
    }
}
