//! Training loop and experiment protocols.
//!
//! Evaluation goes through [`register_pair`], which takes encoder parameters
//! only: no decoder or aggregated cloud is reachable at inference.

mod data;
mod eval;
mod train;

pub use data::{gt_correspondences, prepare_input, prepare_pairs, subsample, InputConfig, PreparedPair};
pub use eval::{
    downsample_pairs, eval_density, eval_distance_bins, eval_disturb, evaluate_pairs,
    match_inlier_ratio, mean_inlier_ratio, pair_inlier_ratio, recall_of, register_pair, BinResult,
    DensityArm, DisturbArm, EvalConfig,
};
pub use train::{
    pair_loss, train, train_curriculum, train_curriculum_on_pairs, train_from, train_on_pairs, CurriculumOutcome,
    CurriculumSpec, EpochRecord, PairInputs, StepOutcome, StepRecord, TrainConfig, TrainLog,
    Trained, Validation,
};
