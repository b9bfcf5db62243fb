//! Autoencoder: neighborhood encoder, offset decoders, fusion, exact gradients.
//!
//! Activations are row-batched matrices (one row per point or per neighbor).

mod block;
mod checkpoint;
mod forward;
mod nn;
mod params;
mod types;

pub use block::NeighborhoodNet;
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use forward::{
    backward, decoder_forward, encoder_forward, forward_train, LossGrads, Neighborhoods, Tape,
};
pub use nn::{Dense, Mlp};
pub use params::{
    init_params, DecoderBody, DecoderDims, DecoderParams, DecoderVariant, EncoderDims,
    EncoderParams, Gradients, ModelDims, ModelParams,
};
pub(crate) use types::feature_dist_sq;
pub use types::{fuse, FeatureMap, OffsetSet, ReconstructedCloud};
