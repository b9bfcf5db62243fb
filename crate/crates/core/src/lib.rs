//! Aggregated point cloud reconstruction (APR) for distant LiDAR registration.
//!
//! The crate trains a per-point feature encoder with an autoencoder whose
//! decoder must reconstruct a dense multi-frame aggregate of the scene, then
//! uses the encoder alone for online feature-based registration.
//!
//! Module map:
//! - [`geom`]: clouds, rigid transforms, kd-tree, voxel grid, Kabsch, error metrics
//! - [`dataio`]: KITTI-format I/O, LiDAR simulator, pair distillation
//! - [`apg`]: aggregated point cloud generation (the reconstruction target)
//! - [`model`]: encoder, decoders, fusion, exact backward pass, checkpoints
//! - [`loss`]: Chamfer, offset regularization, hardest-contrastive, weighted total
//! - [`reg`]: feature matching, RANSAC, success criteria, recall
//! - [`pipeline`]: training loop, curriculum and evaluation protocols

pub mod apg;
pub mod dataio;
mod error;
pub mod geom;
pub mod loss;
pub mod model;
pub mod pipeline;
pub mod reg;

pub use error::{Error, Result};
