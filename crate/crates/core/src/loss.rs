//! Training objectives with exact gradients.
//!
//! Every loss output carries a `signature` over its discrete choices
//! (nearest-neighbor assignments, active hinges, mined negatives) so callers
//! can tell whether two evaluations lie on the same smooth piece.

use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Correspondences, NeighborIndex, PointCloud};
use crate::model::{feature_dist_sq, FeatureMap, OffsetSet};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub m_p: f64,
    pub m_n: f64,
    pub n_pos_pairs: usize,
    pub n_neg_candidates: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            m_p: 0.1,
            m_n: 1.4,
            n_pos_pairs: 1024,
            n_neg_candidates: 256,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.lambda1, self.lambda2, self.m_p, self.m_n];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("loss weights and margins must be finite and ≥ 0".into()));
        }
        if self.m_n <= self.m_p {
            return Err(Error::InvalidConfig("m_n must exceed m_p".into()));
        }
        if self.n_pos_pairs == 0 || self.n_neg_candidates == 0 {
            return Err(Error::InvalidConfig("pair and candidate counts must be positive".into()));
        }
        Ok(())
    }

    /// Metric learning only; the reconstruction branch is switched off.
    pub fn metric_only(&self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub l_ml: f64,
    pub l_cd: f64,
    pub l_l2: f64,
}

pub fn total_loss(l_ml: f64, l_cd: f64, l_l2: f64, cfg: &LossConfig) -> Result<LossReport> {
    if !(l_ml.is_finite() && l_cd.is_finite() && l_l2.is_finite()) {
        return Err(Error::NonFinite("loss term"));
    }
    let total = l_ml + cfg.lambda1 * l_cd + cfg.lambda2 * l_l2;
    if !total.is_finite() {
        return Err(Error::NonFinite("total loss"));
    }
    Ok(LossReport {
        total,
        l_ml,
        l_cd,
        l_l2,
    })
}

fn hash_of(v: &impl Hash) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone)]
pub struct Chamfer {
    pub value: f64,
    /// `∂value/∂a` for every point of the first argument.
    pub grad_a: Vec<Vector3<f64>>,
    /// Nearest point of B for each point of A, and vice versa.
    pub nn_ab: Vec<usize>,
    pub nn_ba: Vec<usize>,
}

impl Chamfer {
    pub fn signature(&self) -> u64 {
        hash_of(&(&self.nn_ab, &self.nn_ba))
    }
}

/// Mean squared nearest-neighbor distance A→B plus B→A.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<Chamfer> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    chamfer_points(a.points(), &NeighborIndex::build(b)?)
}

/// As [`chamfer`], reusing a prebuilt index of B.
pub fn chamfer_points(a: &[Point3<f64>], b: &NeighborIndex) -> Result<Chamfer> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = NeighborIndex::build(&PointCloud::new(a.to_vec())?)?;
    let ab: Vec<_> = a.par_iter().map(|p| b.nearest(p)).collect();
    let ba: Vec<_> = (0..b.len()).into_par_iter().map(|j| ia.nearest(&b.point(j))).collect();

    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sum_ab: f64 = ab.iter().map(|n| n.dist_sq).sum();
    let sum_ba: f64 = ba.iter().map(|n| n.dist_sq).sum();
    let value = sum_ab / na + sum_ba / nb;

    let mut grad_a: Vec<Vector3<f64>> = a
        .iter()
        .zip(&ab)
        .map(|(p, n)| (p - b.point(n.index)) * (2.0 / na))
        .collect();
    for (j, n) in ba.iter().enumerate() {
        grad_a[n.index] += (a[n.index] - b.point(j)) * (2.0 / nb);
    }
    Ok(Chamfer {
        value,
        grad_a,
        nn_ab: ab.iter().map(|n| n.index).collect(),
        nn_ba: ba.iter().map(|n| n.index).collect(),
    })
}

/// Mean squared offset norm and its gradient (`2·o / count` per offset).
pub fn l2_offset_reg(offsets: &OffsetSet) -> (f64, Vec<Vector3<f64>>) {
    let o = offsets.as_slice();
    if o.is_empty() {
        return (0.0, Vec::new());
    }
    let count = o.len() as f64;
    let value = o.iter().map(|v| v.norm_squared()).sum::<f64>() / count;
    let grad = o.iter().map(|v| v * (2.0 / count)).collect();
    (value, grad)
}

#[derive(Debug, Clone)]
pub struct Contrastive {
    pub value: f64,
    pub pos: f64,
    pub neg_a: f64,
    pub neg_b: f64,
    /// Row-major gradients, same shape as the feature maps.
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    choices: Vec<usize>,
}

impl Contrastive {
    pub fn signature(&self) -> u64 {
        hash_of(&self.choices)
    }
}

fn sorted_sample<R: Rng + ?Sized>(rng: &mut R, n: usize, want: usize) -> Vec<usize> {
    if want >= n {
        return (0..n).collect();
    }
    let mut v = sample(rng, n, want).into_vec();
    v.sort_unstable();
    v
}

/// `f_a − f_b` scaled by `s`, accumulated into `ga` (+) and `gb` (−).
fn push_pair_grad(ga: &mut [f64], gb: &mut [f64], fa: &[f64], fb: &[f64], s: f64) {
    for c in 0..fa.len() {
        let g = s * (fa[c] - fb[c]);
        ga[c] += g;
        gb[c] -= g;
    }
}

/// Hardest-contrastive metric loss over ground-truth correspondences.
///
/// Positives are subsampled to `n_pos_pairs`; negatives for both anchors of
/// each positive are mined among `n_neg_candidates` random points of the other
/// cloud, skipping candidates that are themselves positives of the anchor.
pub fn hardest_contrastive<R: Rng + ?Sized>(
    fa: &FeatureMap,
    fb: &FeatureMap,
    positives: &Correspondences,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<Contrastive> {
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    if fa.dim() != fb.dim() {
        return Err(Error::ShapeMismatch(format!(
            "feature widths {} and {}",
            fa.dim(),
            fb.dim()
        )));
    }
    positives.validate(fa.len(), fb.len())?;
    let dim = fa.dim();
    let all = positives.pairs();
    let picked = sorted_sample(rng, all.len(), cfg.n_pos_pairs);
    let cand_b = sorted_sample(rng, fb.len(), cfg.n_neg_candidates);
    let cand_a = sorted_sample(rng, fa.len(), cfg.n_neg_candidates);
    let positive_set: HashSet<(usize, usize)> = all.iter().copied().collect();

    let mut grad_a = vec![0.0; fa.len() * dim];
    let mut grad_b = vec![0.0; fb.len() * dim];
    let mut choices = Vec::with_capacity(picked.len() * 3);
    let np = picked.len() as f64;

    let mut pos = 0.0;
    for &p in &picked {
        let (i, j) = all[p];
        let d = feature_dist_sq(fa.row(i), fb.row(j)).sqrt();
        let h = d - cfg.m_p;
        choices.push((h > 0.0) as usize);
        if h > 0.0 {
            pos += h * h;
            let s = 2.0 * h / (np * d);
            let (ga, gb) = (&mut grad_a[i * dim..(i + 1) * dim], &mut grad_b[j * dim..(j + 1) * dim]);
            push_pair_grad(ga, gb, fa.row(i), fb.row(j), s);
        }
    }
    pos /= np;

    // hardest negative per anchor: (anchor in A, index in B) or (index in A, anchor in B)
    let mut mine = |anchor_in_a: bool| -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(picked.len());
        for &p in &picked {
            let (i, j) = all[p];
            let mut best: Option<(usize, f64)> = None;
            let cands = if anchor_in_a { &cand_b } else { &cand_a };
            for &k in cands {
                let (pa, pb) = if anchor_in_a { (i, k) } else { (k, j) };
                if positive_set.contains(&(pa, pb)) {
                    continue;
                }
                let d2 = feature_dist_sq(fa.row(pa), fb.row(pb));
                if best.is_none_or(|(_, b)| d2 < b) {
                    best = Some((k, d2));
                }
            }
            choices.push(best.map_or(usize::MAX, |(k, _)| k));
            if let Some((k, d2)) = best {
                let (pa, pb) = if anchor_in_a { (i, k) } else { (k, j) };
                out.push((pa, pb, d2.sqrt()));
            }
        }
        out
    };
    let hard_a = mine(true);
    let hard_b = mine(false);

    let mut neg = |hard: &[(usize, usize, f64)], choices: &mut Vec<usize>| -> f64 {
        if hard.is_empty() {
            return 0.0;
        }
        let nv = hard.len() as f64;
        let mut sum = 0.0;
        for &(pa, pb, d) in hard {
            let h = cfg.m_n - d;
            choices.push((h > 0.0) as usize);
            if h > 0.0 {
                sum += h * h;
                if d > 0.0 {
                    // ½ weight of the negative term, d/dd of h² = −2h
                    let s = -0.5 * 2.0 * h / (nv * d);
                    let (ga, gb) = (
                        &mut grad_a[pa * dim..(pa + 1) * dim],
                        &mut grad_b[pb * dim..(pb + 1) * dim],
                    );
                    push_pair_grad(ga, gb, fa.row(pa), fb.row(pb), s);
                }
            }
        }
        sum / nv
    };
    let neg_a = neg(&hard_a, &mut choices);
    let neg_b = neg(&hard_b, &mut choices);

    let value = pos + 0.5 * (neg_a + neg_b);
    if !value.is_finite() {
        return Err(Error::NonFinite("contrastive loss"));
    }
    Ok(Contrastive {
        value,
        pos,
        neg_a,
        neg_b,
        grad_a,
        grad_b,
        choices,
    })
}
