#![allow(dead_code)]

pub mod oracle;

use apr_core::apg::ApgConfig;
use apr_core::dataio::{FrameSequence, LidarConfig, PairSpec, TwoLaneScenario};
use apr_core::loss::LossConfig;
use apr_core::model::{DecoderDims, DecoderVariant, EncoderDims, ModelDims};
use apr_core::pipeline::{InputConfig, TrainConfig};

/// A 20 m world with a coarse sensor: seconds to simulate and train on.
pub fn small_scenario(seed: u64) -> TwoLaneScenario {
    TwoLaneScenario {
        seed,
        extent: 20.0,
        obstacles: 40,
        lidar: LidarConfig::with_rings(256, 16, -2.0, 18.0),
        ..TwoLaneScenario::default()
    }
}

pub fn small_sequences(seed: u64) -> (FrameSequence, FrameSequence) {
    small_scenario(seed).sequences().unwrap()
}

pub fn small_dims() -> ModelDims {
    ModelDims {
        encoder: EncoderDims {
            k: 8,
            stage1: vec![16, 32],
            stage2_hidden: vec![32],
            l: 16,
            normalize: true,
        },
        decoder: DecoderDims {
            variant: DecoderVariant::Asymmetric,
            hidden: vec![32, 16],
            phi: 2,
        },
    }
}

/// Small-model APR configuration over the first `pairs` pairs of `[2, 10]`.
pub fn small_train_config(epochs: usize, pairs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 0.05,
        seed: 3,
        pairs: PairSpec::new(2.0, 10.0, 1.0).unwrap(),
        max_pairs: Some(pairs),
        apg: ApgConfig {
            alpha: 3.0,
            voxel_size: 0.75,
            ..ApgConfig::default()
        },
        loss: LossConfig {
            lambda1: 0.1,
            lambda2: 0.01,
            ..LossConfig::default()
        },
        dims: small_dims(),
        input: InputConfig {
            voxel_size: 0.75,
            ..InputConfig::default()
        },
        ..TrainConfig::default()
    }
}

pub fn metric_only(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        loss: LossConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..cfg.loss.clone()
        },
        ..cfg.clone()
    }
}
