use std::hash::{Hash, Hasher};
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::data::{gt_correspondences, mix, InputConfig, PairCache, PreparedPair};
use super::eval::validation_metrics;
use crate::apg::ApgConfig;
use crate::dataio::{check_pairs, distill_pairs, DistilledPair, PairSource, PairSpec};
use crate::error::{Error, Result};
use crate::geom::{Correspondences, NeighborIndex, PointCloud, DEFAULT_OVERLAP_TAU};
use crate::loss::{chamfer_points, hardest_contrastive, l2_offset_reg, total_loss, LossConfig, LossReport};
use crate::model::{
    backward, forward_train, fuse, init_params, Gradients, LossGrads, ModelDims, ModelParams, Tape,
};
use crate::reg::{Criterion, RansacConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning-rate factor applied from two thirds of the epochs on.
    pub lr_decay: f64,
    pub seed: u64,
    pub pairs: PairSpec,
    pub overlap_tau: f64,
    /// Cap on training pairs, subsampled with the seed.
    pub max_pairs: Option<usize>,
    pub apg: ApgConfig,
    pub n_disturb: usize,
    pub loss: LossConfig,
    pub dims: ModelDims,
    pub input: InputConfig,
    /// Radius for ground-truth correspondences.
    pub gt_radius: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-2,
            momentum: 0.9,
            lr_decay: 0.5,
            seed: 0,
            pairs: PairSpec {
                d1: 5.0,
                d2: 20.0,
                overlap_max: 1.0,
            },
            overlap_tau: DEFAULT_OVERLAP_TAU,
            max_pairs: None,
            apg: ApgConfig::default(),
            n_disturb: 0,
            loss: LossConfig::default(),
            dims: ModelDims::default(),
            input: InputConfig::default(),
            gt_radius: 0.3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.lr_decay > 0.0) {
            return Err(Error::InvalidConfig("need lr > 0, momentum in [0, 1), decay > 0".into()));
        }
        if !(self.gt_radius > 0.0) || !(self.overlap_tau > 0.0) || self.max_pairs == Some(0) {
            return Err(Error::InvalidConfig("radii and pair cap must be positive".into()));
        }
        if self.n_disturb > 2 * self.apg.psi {
            return Err(Error::InvalidConfig(format!(
                "n_disturb {} exceeds 2ψ = {}",
                self.n_disturb,
                2 * self.apg.psi
            )));
        }
        self.pairs.validate()?;
        self.apg.validate()?;
        self.loss.validate()?;
        self.dims.validate()?;
        self.input.validate()
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if 3 * epoch >= 2 * self.epochs && self.epochs >= 3 {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }
}

/// Everything one training pair contributes to the loss.
pub struct PairInputs<'a> {
    pub a: &'a PointCloud,
    pub b: &'a PointCloud,
    pub apc_a: &'a NeighborIndex,
    pub apc_b: &'a NeighborIndex,
    /// Ground-truth correspondences between `a` and `b`.
    pub positives: &'a Correspondences,
}

pub struct StepOutcome {
    pub report: LossReport,
    pub grads: Gradients,
    /// Hash of every discrete choice in the forward pass and the losses.
    pub signature: u64,
}

/// Full training loss of one pair and its exact gradient. `seed` drives the
/// contrastive sampling.
pub fn pair_loss(
    params: &ModelParams,
    inputs: &PairInputs<'_>,
    cfg: &LossConfig,
    seed: u64,
) -> Result<StepOutcome> {
    let recon = !cfg.metric_only();
    let run = |c: &PointCloud| {
        let mut tape = Tape::new();
        forward_train(params, c, recon, &mut tape).map(|(f, o)| (tape, f, o))
    };
    let (ra, rb) = rayon::join(|| run(inputs.a), || run(inputs.b));
    let (tape_a, fa, oa) = ra?;
    let (tape_b, fb, ob) = rb?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ml = hardest_contrastive(&fa, &fb, inputs.positives, cfg, &mut rng)?;

    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    tape_a.activation_signature().hash(&mut hasher);
    tape_b.activation_signature().hash(&mut hasher);
    ml.signature().hash(&mut hasher);

    let mut l_cd = 0.0;
    let mut l_l2 = 0.0;
    let mut offset_grads = [None, None];
    if recon {
        for (side, (cloud, offsets, apc)) in [
            (inputs.a, oa.as_ref(), inputs.apc_a),
            (inputs.b, ob.as_ref(), inputs.apc_b),
        ]
        .into_iter()
        .enumerate()
        {
            let offsets = offsets.expect("decoder ran");
            let fused = fuse(cloud, offsets)?;
            let ch = chamfer_points(fused.points(), apc)?;
            ch.signature().hash(&mut hasher);
            let (reg, reg_grad) = l2_offset_reg(offsets);
            l_cd += ch.value;
            l_l2 += reg;
            let g: Vec<_> = ch
                .grad_a
                .iter()
                .zip(&reg_grad)
                .map(|(c, r)| c * cfg.lambda1 + r * cfg.lambda2)
                .collect();
            offset_grads[side] = Some(g);
        }
    }
    let report = total_loss(ml.value, l_cd, l_l2, cfg)?;

    let l = fa.dim();
    let [ga_off, gb_off] = offset_grads;
    let ga = LossGrads {
        features: DMatrix::from_row_slice(fa.len(), l, &ml.grad_a),
        offsets: ga_off,
    };
    let gb = LossGrads {
        features: DMatrix::from_row_slice(fb.len(), l, &ml.grad_b),
        offsets: gb_off,
    };
    let (grad_a, grad_b) = rayon::join(
        || backward(params, &tape_a, &ga),
        || backward(params, &tape_b, &gb),
    );
    let mut grads = grad_a?;
    grads.add_assign(&grad_b?);
    Ok(StepOutcome {
        report,
        grads,
        signature: hasher.finish(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub i: usize,
    pub j: usize,
    pub report: LossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_total: f64,
    pub inlier_ratio: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Distilled pairs dropped for lack of ground-truth correspondences.
    pub skipped_pairs: usize,
    /// Mean loss over the training pairs before the first update, with
    /// fixed sampling seeds.
    pub initial_loss: f64,
    /// The same sweep with the final parameters.
    pub final_loss: f64,
}

#[derive(Serialize)]
struct LogRow {
    kind: &'static str,
    epoch: usize,
    step: Option<usize>,
    i: Option<usize>,
    j: Option<usize>,
    l_ml: Option<f64>,
    l_cd: Option<f64>,
    l_l2: Option<f64>,
    total: Option<f64>,
    inlier_ratio: Option<f64>,
    recall: Option<f64>,
}

impl TrainLog {
    /// One `step` row per step, one `epoch` row per epoch, then `initial`
    /// and `final` rows holding the two loss sweeps.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::MalformedFile(e.to_string());
        for s in &self.steps {
            w.serialize(LogRow {
                kind: "step",
                epoch: s.epoch,
                step: Some(s.step),
                i: Some(s.i),
                j: Some(s.j),
                l_ml: Some(s.report.l_ml),
                l_cd: Some(s.report.l_cd),
                l_l2: Some(s.report.l_l2),
                total: Some(s.report.total),
                inlier_ratio: None,
                recall: None,
            })
            .map_err(err)?;
        }
        for e in &self.epochs {
            w.serialize(LogRow {
                kind: "epoch",
                epoch: e.epoch,
                step: None,
                i: None,
                j: None,
                l_ml: None,
                l_cd: None,
                l_l2: None,
                total: Some(e.mean_total),
                inlier_ratio: e.inlier_ratio,
                recall: e.recall,
            })
            .map_err(err)?;
        }
        for (kind, total) in [("initial", self.initial_loss), ("final", self.final_loss)] {
            w.serialize(LogRow {
                kind,
                epoch: self.epochs.len(),
                step: None,
                i: None,
                j: None,
                l_ml: None,
                l_cd: None,
                l_l2: None,
                total: Some(total),
                inlier_ratio: None,
                recall: None,
            })
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::MalformedFile(e.to_string()))
    }
}

/// Held-out pairs scored after every epoch.
#[derive(Debug, Clone)]
pub struct Validation<'a> {
    pub pairs: &'a [PreparedPair],
    /// Radius for counting a feature match as an inlier.
    pub radius: f64,
    /// RANSAC settings for recall; `None` skips the RANSAC pass.
    pub ransac: Option<RansacConfig>,
    pub criterion: Criterion,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Distills pairs per `cfg.pairs` and trains from a seeded initialization.
pub fn train(source: PairSource<'_>, cfg: &TrainConfig, val: Option<&Validation<'_>>) -> Result<Trained> {
    cfg.validate()?;
    let params = init_params(cfg.seed, &cfg.dims)?;
    train_from(params, source, cfg, val)
}

/// As [`train`], continuing from `params`.
pub fn train_from(
    params: ModelParams,
    source: PairSource<'_>,
    cfg: &TrainConfig,
    val: Option<&Validation<'_>>,
) -> Result<Trained> {
    cfg.validate()?;
    let pairs = distill_pairs(source, &cfg.pairs, cfg.overlap_tau)?;
    train_on_pairs(params, source, &pairs, cfg, val)
}

/// Trains on an explicit pair list.
pub fn train_on_pairs(
    mut params: ModelParams,
    source: PairSource<'_>,
    pairs: &[DistilledPair],
    cfg: &TrainConfig,
    val: Option<&Validation<'_>>,
) -> Result<Trained> {
    cfg.validate()?;
    if params.dims() != cfg.dims {
        return Err(Error::ShapeMismatch("initial parameters do not match configured dims".into()));
    }
    check_pairs(source, pairs)?;
    let mut pairs = pairs.to_vec();
    if let Some(cap) = cfg.max_pairs {
        if pairs.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x7061_6972));
            pairs.shuffle(&mut rng);
            pairs.truncate(cap);
            pairs.sort_by_key(|p| (p.i, p.j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }

    let cache = PairCache::new(source);
    let positives: Vec<Correspondences> = pairs
        .par_iter()
        .map(|p| {
            let a = cache.first().input(p.i, &cfg.input, cfg.seed);
            let b = cache.second().input(p.j, &cfg.input, cfg.seed);
            gt_correspondences(a, b, &source.gt_transform(p.i, p.j), cfg.gt_radius)
        })
        .collect::<Result<_>>()?;
    let usable: Vec<usize> = (0..pairs.len()).filter(|&k| !positives[k].is_empty()).collect();
    if usable.is_empty() {
        return Err(Error::NoPairs);
    }
    let mut log = TrainLog {
        skipped_pairs: pairs.len() - usable.len(),
        ..TrainLog::default()
    };
    // fixed parameters and fixed sampling seeds, so the two sweeps compare
    let sweep = |params: &ModelParams| -> Result<f64> {
        let mut sum = 0.0;
        for &k in &usable {
            let seed = mix(cfg.seed ^ 0x5a3e, k as u64);
            let out = with_inputs(&cache, &pairs[k], &positives[k], cfg, |inputs| pair_loss(params, inputs, &cfg.loss, seed))?;
            sum += out.report.total;
        }
        Ok(sum / usable.len() as f64)
    };
    log.initial_loss = sweep(&params).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFiniteLoss { step: 0 },
        e => e,
    })?;

    let mut velocity = Gradients::zeros_for(&params);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order = usable.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64)));
        let mut epoch_sum = 0.0;
        for &k in &order {
            let p = &pairs[k];
            let seed = mix(cfg.seed ^ 0x5eed, step as u64);
            let out = match with_inputs(&cache, p, &positives[k], cfg, |inputs| pair_loss(&params, inputs, &cfg.loss, seed)) {
                Ok(o) => o,
                Err(Error::NonFinite(_)) => return Err(Error::NonFiniteLoss { step }),
                Err(e) => return Err(e),
            };
            for (v, g) in velocity.0.tensors_mut().into_iter().zip(out.grads.0.tensors()) {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = cfg.momentum * *vi + gi;
                }
            }
            for (w, v) in params.tensors_mut().into_iter().zip(velocity.0.tensors()) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= lr * vi;
                }
            }
            if params.tensors().iter().any(|t| t.iter().any(|x| !x.is_finite())) {
                return Err(Error::NonFiniteLoss { step });
            }
            epoch_sum += out.report.total;
            log.steps.push(StepRecord {
                epoch,
                step,
                i: p.i,
                j: p.j,
                report: out.report,
            });
            step += 1;
        }
        let (inlier_ratio, recall) = match val {
            Some(v) => {
                let (ir, rr) = validation_metrics(&params.encoder, v)?;
                (Some(ir), rr)
            }
            None => (None, None),
        };
        log.epochs.push(EpochRecord {
            epoch,
            mean_total: epoch_sum / order.len() as f64,
            inlier_ratio,
            recall,
        });
    }
    log.final_loss = sweep(&params).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFiniteLoss { step },
        e => e,
    })?;
    Ok(Trained { params, log })
}

fn with_inputs<T>(
    cache: &PairCache<'_>,
    p: &DistilledPair,
    positives: &Correspondences,
    cfg: &TrainConfig,
    f: impl FnOnce(&PairInputs<'_>) -> Result<T>,
) -> Result<T> {
    let a = cache.first().input(p.i, &cfg.input, cfg.seed);
    let b = cache.second().input(p.j, &cfg.input, cfg.seed);
    if cfg.loss.metric_only() {
        // the metric-only arm never reads the reconstruction targets
        let placeholder = NeighborIndex::build(a)?;
        return f(&PairInputs {
            a,
            b,
            apc_a: &placeholder,
            apc_b: &placeholder,
            positives,
        });
    }
    let (x, y) = rayon::join(
        || cache.first().apc(p.i, &cfg.apg, cfg.n_disturb, cfg.seed),
        || cache.second().apc(p.j, &cfg.apg, cfg.n_disturb, cfg.seed),
    );
    f(&PairInputs {
        a,
        b,
        apc_a: &x?.index,
        apc_b: &y?.index,
        positives,
    })
}

/// Pre-train on `[5, 20]`, then fine-tune on `[5, d2]` when `d2 ≥ 30`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSpec {
    pub pretrain: (f64, f64),
    pub d2: f64,
}

impl CurriculumSpec {
    pub const FINETUNE_MIN_D2: f64 = 30.0;

    pub fn new(d2: f64) -> Self {
        Self {
            pretrain: (5.0, 20.0),
            d2,
        }
    }

    pub fn finetune_active(&self) -> bool {
        self.d2 >= Self::FINETUNE_MIN_D2
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.pretrain;
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::InvalidConfig("pre-training bin is empty".into()));
        }
        if self.finetune_active() && !(self.d2 > lo) {
            return Err(Error::InvalidConfig("fine-tuning bin must extend past its lower edge".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub params: ModelParams,
    /// One log per phase that ran.
    pub phases: Vec<TrainLog>,
}

pub fn train_curriculum(
    source: PairSource<'_>,
    cfg: &TrainConfig,
    spec: &CurriculumSpec,
    val: Option<&Validation<'_>>,
) -> Result<CurriculumOutcome> {
    spec.validate()?;
    let hi = if spec.finetune_active() { spec.d2.max(spec.pretrain.1) } else { spec.pretrain.1 };
    let all = distill_pairs(
        source,
        &PairSpec::new(spec.pretrain.0, hi, cfg.pairs.overlap_max)?,
        cfg.overlap_tau,
    )?;
    train_curriculum_on_pairs(source, &all, cfg, spec, val)
}

/// As [`train_curriculum`], drawing each phase's pairs from `pairs` by
/// distance instead of distilling.
pub fn train_curriculum_on_pairs(
    source: PairSource<'_>,
    pairs: &[DistilledPair],
    cfg: &TrainConfig,
    spec: &CurriculumSpec,
    val: Option<&Validation<'_>>,
) -> Result<CurriculumOutcome> {
    spec.validate()?;
    cfg.validate()?;
    let within = |lo: f64, hi: f64| -> Vec<DistilledPair> {
        pairs.iter().filter(|p| lo <= p.distance && p.distance <= hi).copied().collect()
    };
    let (lo, hi) = spec.pretrain;
    let first = train_on_pairs(init_params(cfg.seed, &cfg.dims)?, source, &within(lo, hi), cfg, val)?;
    let mut phases = vec![first.log];
    let mut params = first.params;
    if spec.finetune_active() {
        let second = train_on_pairs(params, source, &within(lo, spec.d2), cfg, val)?;
        phases.push(second.log);
        params = second.params;
    }
    Ok(CurriculumOutcome { params, phases })
}
