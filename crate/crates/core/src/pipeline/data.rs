use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::apg::{generate_apc, ApgConfig, DisturbConfig};
use crate::dataio::{DistilledPair, FrameSequence, PairSource};
use crate::error::{Error, Result};
use crate::geom::{
    voxel_downsample, Correspondences, NeighborIndex, PointCloud, RigidTransform,
};

/// Preprocessing applied to every key frame before it reaches the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct InputConfig {
    pub voxel_size: f64,
    /// Points beyond this sensor range are dropped.
    pub range: f64,
    /// Seeded uniform subsample after voxelization, if set.
    pub max_points: Option<usize>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.3,
            range: 50.0,
            max_points: None,
        }
    }
}

impl InputConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) || !(self.range > 0.0) || self.max_points == Some(0) {
            return Err(Error::InvalidConfig("input voxel size, range and max points must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniformly keeps `keep` of the points, in original order.
pub fn subsample(cloud: &PointCloud, keep: usize, seed: u64) -> PointCloud {
    if keep >= cloud.len() {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, cloud.len(), keep).into_vec();
    idx.sort_unstable();
    cloud.select(&idx)
}

/// Crop, voxelize, optionally subsample. `seed` only matters with `max_points`.
pub fn prepare_input(cloud: &PointCloud, cfg: &InputConfig, seed: u64) -> PointCloud {
    let r2 = cfg.range * cfg.range;
    let v = voxel_downsample(&cloud.filter(|p| p.coords.norm_squared() <= r2), cfg.voxel_size);
    match cfg.max_points {
        Some(m) => subsample(&v, m, seed),
        None => v,
    }
}

/// Ground-truth correspondences: `(i, j)` with `T·a_i` and `b_j` mutually
/// closest and within `radius`.
pub fn gt_correspondences(
    a: &PointCloud,
    b: &PointCloud,
    gt: &RigidTransform,
    radius: f64,
) -> Result<Correspondences> {
    if a.is_empty() || b.is_empty() {
        return Ok(Correspondences::new(Vec::new()));
    }
    let moved = crate::geom::apply_transform(a, gt);
    let ib = NeighborIndex::build(b)?;
    let ia = NeighborIndex::build(&moved)?;
    let r2 = radius * radius;
    let pairs = moved
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let n = ib.nearest(p);
            (n.dist_sq <= r2 && ia.nearest(&b[n.index]).index == i).then_some((i, n.index))
        })
        .collect();
    Ok(Correspondences::new(pairs))
}

pub(crate) struct Apc {
    pub index: NeighborIndex,
}

/// Lazily built, shareable per-frame data for one sequence.
pub(crate) struct FrameCache<'a> {
    seq: &'a FrameSequence,
    tag: u64,
    inputs: Vec<OnceLock<PointCloud>>,
    apcs: Vec<OnceLock<Apc>>,
}

impl<'a> FrameCache<'a> {
    pub fn new(seq: &'a FrameSequence, tag: u64) -> Self {
        Self {
            seq,
            tag,
            inputs: (0..seq.len()).map(|_| OnceLock::new()).collect(),
            apcs: (0..seq.len()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn input(&self, pos: usize, cfg: &InputConfig, seed: u64) -> &PointCloud {
        self.inputs[pos].get_or_init(|| {
            prepare_input(&self.seq.frames()[pos].cloud, cfg, mix(mix(seed, self.tag), pos as u64))
        })
    }

    pub fn apc(&self, pos: usize, cfg: &ApgConfig, n_disturb: usize, seed: u64) -> Result<&Apc> {
        if let Some(apc) = self.apcs[pos].get() {
            return Ok(apc);
        }
        let disturb = DisturbConfig {
            n_disturb,
            seed: mix(mix(seed, self.tag), pos as u64),
        };
        let cloud = generate_apc(self.seq, pos, cfg, (n_disturb > 0).then_some(&disturb))?;
        let index = NeighborIndex::build(&cloud)?;
        // a concurrent builder produces the same value; either one may win
        let _ = self.apcs[pos].set(Apc { index });
        Ok(self.apcs[pos].get().expect("just set"))
    }
}

/// Frame caches for both sides of a pair source; a single sequence shares one.
pub(crate) struct PairCache<'a> {
    first: FrameCache<'a>,
    second: Option<FrameCache<'a>>,
}

impl<'a> PairCache<'a> {
    pub fn new(source: PairSource<'a>) -> Self {
        match source {
            PairSource::Single(s) => Self {
                first: FrameCache::new(s, 1),
                second: None,
            },
            PairSource::Cross(a, b) => Self {
                first: FrameCache::new(a, 1),
                second: Some(FrameCache::new(b, 2)),
            },
        }
    }

    pub fn first(&self) -> &FrameCache<'a> {
        &self.first
    }

    pub fn second(&self) -> &FrameCache<'a> {
        self.second.as_ref().unwrap_or(&self.first)
    }
}

/// An evaluation pair with preprocessed clouds; `gt` maps `a` into `b`.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub overlap: f64,
    pub a: PointCloud,
    pub b: PointCloud,
    pub gt: RigidTransform,
}

pub fn prepare_pairs(
    source: PairSource<'_>,
    pairs: &[DistilledPair],
    input: &InputConfig,
    seed: u64,
) -> Vec<PreparedPair> {
    let cache = PairCache::new(source);
    pairs
        .iter()
        .map(|p| PreparedPair {
            i: p.i,
            j: p.j,
            distance: p.distance,
            overlap: p.overlap,
            a: cache.first().input(p.i, input, seed).clone(),
            b: cache.second().input(p.j, input, seed).clone(),
            gt: source.gt_transform(p.i, p.j),
        })
        .collect()
}
