use rayon::prelude::*;

use super::data::{mix, prepare_pairs, subsample, InputConfig, PreparedPair};
use super::train::{train, TrainConfig, TrainLog, Validation};
use crate::dataio::{distill_pairs, PairSource, PairSpec};
use crate::error::{Error, Result};
use crate::geom::{apply_transform, PointCloud, RigidTransform, DEFAULT_OVERLAP_TAU};
use crate::model::{encoder_forward, EncoderParams, FeatureMap};
use crate::reg::{
    evaluate, match_features, ransac_register, Criterion, PairRecord, RansacConfig, RansacOutcome,
};

/// Online registration of `a` onto `b`: encoder features, mutual matching,
/// RANSAC. Only the encoder is involved.
pub fn register_pair(
    encoder: &EncoderParams,
    a: &PointCloud,
    b: &PointCloud,
    ransac: &RansacConfig,
) -> Result<RansacOutcome> {
    let (fa, fb) = rayon::join(|| encoder_forward(a, encoder), || encoder_forward(b, encoder));
    let corr = match_features(&fa?, &fb?)?;
    ransac_register(&corr, a, b, ransac)
}

/// Fraction of mutual feature matches whose points lie within `radius`
/// after ground-truth alignment; 0 when nothing matches.
pub fn match_inlier_ratio(
    fa: &FeatureMap,
    fb: &FeatureMap,
    a: &PointCloud,
    b: &PointCloud,
    gt: &RigidTransform,
    radius: f64,
) -> Result<f64> {
    let corr = match_features(fa, fb)?;
    if corr.is_empty() {
        return Ok(0.0);
    }
    let moved = apply_transform(a, gt);
    let r2 = radius * radius;
    let hits = corr
        .pairs()
        .iter()
        .filter(|&&(i, j)| (moved[i] - b[j]).norm_squared() <= r2)
        .count();
    Ok(hits as f64 / corr.len() as f64)
}

pub fn pair_inlier_ratio(encoder: &EncoderParams, pair: &PreparedPair, radius: f64) -> Result<f64> {
    let (fa, fb) = rayon::join(
        || encoder_forward(&pair.a, encoder),
        || encoder_forward(&pair.b, encoder),
    );
    match_inlier_ratio(&fa?, &fb?, &pair.a, &pair.b, &pair.gt, radius)
}

/// Mean inlier ratio over pairs.
pub fn mean_inlier_ratio(encoder: &EncoderParams, pairs: &[PreparedPair], radius: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyResults);
    }
    let ratios = pairs
        .iter()
        .map(|p| pair_inlier_ratio(encoder, p, radius))
        .collect::<Result<Vec<_>>>()?;
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

pub(crate) fn validation_metrics(encoder: &EncoderParams, v: &Validation<'_>) -> Result<(f64, Option<f64>)> {
    let ir = mean_inlier_ratio(encoder, v.pairs, v.radius)?;
    let rr = match &v.ransac {
        Some(r) => {
            let records = evaluate_pairs(encoder, v.pairs, r)?;
            Some(recall_of(&records, &v.criterion)?)
        }
        None => None,
    };
    Ok((ir, rr))
}

fn register_or_fail(encoder: &EncoderParams, p: &PreparedPair, ransac: &RansacConfig) -> Result<(RigidTransform, usize)> {
    match register_pair(encoder, &p.a, &p.b, ransac) {
        Ok(o) => Ok((o.transform, o.inlier_count)),
        // too little structure to hypothesize: a failed registration, not an error
        Err(Error::TooFewCorrespondences { .. }) | Err(Error::DegenerateGeometry(_)) => {
            Ok((RigidTransform::identity(), 0))
        }
        Err(e) => Err(e),
    }
}

/// Registers every pair (pair `k` uses RANSAC seed `mix(seed, k)`).
pub fn evaluate_pairs(
    encoder: &EncoderParams,
    pairs: &[PreparedPair],
    ransac: &RansacConfig,
) -> Result<Vec<PairRecord>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let cfg = RansacConfig {
                seed: mix(ransac.seed, k as u64),
                ..ransac.clone()
            };
            let (t, inliers) = register_or_fail(encoder, p, &cfg)?;
            let r = evaluate(&t, &p.gt, inliers);
            Ok(PairRecord::new(p.i, p.j, p.distance, p.overlap, &r))
        })
        .collect()
}

/// Recall recomputed from exported records.
pub fn recall_of(records: &[PairRecord], c: &Criterion) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(records.iter().filter(|r| r.succeeds(c)).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub input: InputConfig,
    pub ransac: RansacConfig,
    pub overlap_tau: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            ransac: RansacConfig::default(),
            overlap_tau: DEFAULT_OVERLAP_TAU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinResult {
    pub spec: PairSpec,
    pub pairs: usize,
    /// `None` for an empty bin.
    pub recall: Option<f64>,
    pub records: Vec<PairRecord>,
}

fn check_bins(bins: &[PairSpec]) -> Result<()> {
    let mut sorted: Vec<&PairSpec> = bins.iter().collect();
    for b in &sorted {
        b.validate()?;
    }
    sorted.sort_by(|x, y| x.d1.total_cmp(&y.d1));
    for w in sorted.windows(2) {
        if w[1].d1 < w[0].d2 {
            return Err(Error::InvalidConfig(format!(
                "bins [{}, {}] and [{}, {}] overlap",
                w[0].d1, w[0].d2, w[1].d1, w[1].d2
            )));
        }
    }
    Ok(())
}

/// Recall per distance bin; empty bins are reported with `recall: None`.
pub fn eval_distance_bins(
    encoder: &EncoderParams,
    source: PairSource<'_>,
    bins: &[PairSpec],
    cfg: &EvalConfig,
    criterion: &Criterion,
) -> Result<Vec<BinResult>> {
    check_bins(bins)?;
    bins.iter()
        .map(|spec| {
            let distilled = distill_pairs(source, spec, cfg.overlap_tau)?;
            let prepared = prepare_pairs(source, &distilled, &cfg.input, cfg.seed);
            let records = evaluate_pairs(encoder, &prepared, &cfg.ransac)?;
            let recall = if records.is_empty() {
                None
            } else {
                Some(recall_of(&records, criterion)?)
            };
            Ok(BinResult {
                spec: *spec,
                pairs: records.len(),
                recall,
                records,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityArm {
    pub ratio: f64,
    pub recall: f64,
    pub records: Vec<PairRecord>,
}

/// Keeps `⌈r·N⌉` points of the second cloud of every pair.
pub fn downsample_pairs(pairs: &[PreparedPair], ratio: f64, seed: u64) -> Result<Vec<PreparedPair>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!("downsample ratio {ratio} not in (0, 1]")));
    }
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let keep = (ratio * p.b.len() as f64).ceil() as usize;
            PreparedPair {
                b: subsample(&p.b, keep, mix(seed, k as u64)),
                ..p.clone()
            }
        })
        .collect())
}

pub fn eval_density(
    encoder: &EncoderParams,
    pairs: &[PreparedPair],
    ratios: &[f64],
    ransac: &RansacConfig,
    criterion: &Criterion,
    seed: u64,
) -> Result<Vec<DensityArm>> {
    ratios
        .iter()
        .map(|&ratio| {
            let thinned = downsample_pairs(pairs, ratio, seed)?;
            let records = evaluate_pairs(encoder, &thinned, ransac)?;
            Ok(DensityArm {
                ratio,
                recall: recall_of(&records, criterion)?,
                records,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DisturbArm {
    pub n_disturb: usize,
    pub recall: f64,
    pub records: Vec<PairRecord>,
    pub log: TrainLog,
}

/// Trains one model per `n_disturb` (disturbance only in the training APCs)
/// and evaluates each on the clean `val` pairs.
pub fn eval_disturb(
    source: PairSource<'_>,
    cfg: &TrainConfig,
    sweep: &[usize],
    val: &[PreparedPair],
    ransac: &RansacConfig,
    criterion: &Criterion,
) -> Result<Vec<DisturbArm>> {
    if let Some(&bad) = sweep.iter().find(|&&n| n > 2 * cfg.apg.psi) {
        return Err(Error::InvalidConfig(format!("n_disturb {bad} exceeds 2ψ = {}", 2 * cfg.apg.psi)));
    }
    sweep
        .iter()
        .map(|&n_disturb| {
            let arm_cfg = TrainConfig {
                n_disturb,
                ..cfg.clone()
            };
            let trained = train(source, &arm_cfg, None)?;
            let records = evaluate_pairs(&trained.params.encoder, val, ransac)?;
            Ok(DisturbArm {
                n_disturb,
                recall: recall_of(&records, criterion)?,
                records,
                log: trained.log,
            })
        })
        .collect()
}
