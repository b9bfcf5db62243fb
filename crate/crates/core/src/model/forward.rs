use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use super::block::BlockCache;
use super::nn::MlpCache;
use super::params::{DecoderBody, DecoderParams, EncoderParams, Gradients, ModelParams};
use super::types::{FeatureMap, OffsetSet};
use crate::error::{Error, Result};
use crate::geom::{NeighborIndex, PointCloud};

const NORM_EPS: f64 = 1e-12;

/// The `k` nearest neighbors of every point (itself included), nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    k: usize,
    indices: Vec<usize>,
}

impl Neighborhoods {
    pub fn build(cloud: &PointCloud, k: usize) -> Result<Self> {
        if k == 0 || cloud.len() < k {
            return Err(Error::TooFewPoints {
                count: cloud.len(),
                k,
            });
        }
        let index = NeighborIndex::build(cloud)?;
        let indices = cloud
            .points()
            .par_iter()
            .flat_map_iter(|p| index.knn(p, k).into_iter().map(|n| n.index))
            .collect();
        Ok(Self { k, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Debug, Clone)]
struct EncoderCache {
    neighbors: Neighborhoods,
    block: BlockCache,
    raw: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum DecoderCache {
    Asymmetric(MlpCache),
    Symmetric(BlockCache, Neighborhoods),
}

/// Activations recorded by [`forward_train`] for [`backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    encoder: Option<EncoderCache>,
    decoder: Option<DecoderCache>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Smallest distance of any recorded activation to a non-differentiable
    /// point (ReLU at zero, max-pool tie); infinite for an empty tape.
    pub fn kink_margin(&self) -> f64 {
        let enc = self.encoder.as_ref().map_or(f64::INFINITY, |c| c.block.margin);
        let dec = match &self.decoder {
            Some(DecoderCache::Asymmetric(c)) => c.margin,
            Some(DecoderCache::Symmetric(c, _)) => c.margin,
            None => f64::INFINITY,
        };
        enc.min(dec)
    }

    /// Hash of every discrete choice made in the forward pass (ReLU states,
    /// max-pool winners, neighbor lists). Two parameter settings with equal
    /// signatures lie on the same smooth piece of the network.
    pub fn activation_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        if let Some(e) = &self.encoder {
            e.neighbors.indices.hash(&mut h);
            e.block.hash_pattern(&mut h);
        }
        match &self.decoder {
            Some(DecoderCache::Asymmetric(c)) => c.hash_pattern(&mut h),
            Some(DecoderCache::Symmetric(c, _)) => c.hash_pattern(&mut h),
            None => {}
        }
        h.finish()
    }

    pub fn neighbors(&self) -> Option<&Neighborhoods> {
        self.encoder.as_ref().map(|c| &c.neighbors)
    }
}

/// Upstream gradients of the scalar loss.
#[derive(Debug, Clone)]
pub struct LossGrads {
    /// `N × l`.
    pub features: DMatrix<f64>,
    /// `N·φ` offsets, source-major; `None` when the decoder is not in the loss.
    pub offsets: Option<Vec<Vector3<f64>>>,
}

fn encoder_inputs(cloud: &PointCloud, nb: &Neighborhoods) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, k) = (cloud.len(), nb.k());
    let mut neigh = DMatrix::zeros(n * k, 3);
    let mut own = DMatrix::zeros(n, 3);
    let inv_k = 1.0 / k as f64;
    for i in 0..n {
        let p = cloud[i];
        let mut sum = Vector3::zeros();
        for (m, &j) in nb.of(i).iter().enumerate() {
            let rel = cloud[j] - p;
            sum += rel;
            for c in 0..3 {
                neigh[(i * k + m, c)] = rel[c];
            }
        }
        // point relative to its neighborhood centroid, from relative coordinates only
        for c in 0..3 {
            own[(i, c)] = -sum[c] * inv_k;
        }
    }
    (neigh, own)
}

fn normalize_rows(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = raw.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm().max(NORM_EPS);
        row /= norm;
    }
    out
}

fn normalize_backward(raw: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<f64> {
    let mut dx = dy.clone();
    for r in 0..raw.nrows() {
        let x = raw.row(r);
        let norm = x.norm();
        if norm <= NORM_EPS {
            dx.row_mut(r).scale_mut(1.0 / NORM_EPS);
            continue;
        }
        let y = x / norm;
        let g = dy.row(r);
        let proj = y.dot(&g);
        dx.row_mut(r).copy_from(&((g - y * proj) / norm));
    }
    dx
}

fn encode(cloud: &PointCloud, params: &EncoderParams) -> Result<(FeatureMap, EncoderCache)> {
    let neighbors = Neighborhoods::build(cloud, params.k)?;
    let (neigh, own) = encoder_inputs(cloud, &neighbors);
    let (raw, block) = params.net.forward(&neigh, &own, params.k);
    let out = if params.normalize {
        normalize_rows(&raw)
    } else {
        raw.clone()
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder output"));
    }
    let fm = FeatureMap::from_matrix(&out);
    Ok((
        fm,
        EncoderCache {
            neighbors,
            block,
            raw,
        },
    ))
}

/// Per-point features of a single cloud.
pub fn encoder_forward(cloud: &PointCloud, params: &EncoderParams) -> Result<FeatureMap> {
    encode(cloud, params).map(|(fm, _)| fm)
}

fn symmetric_inputs(f: &DMatrix<f64>, nb: &Neighborhoods) -> DMatrix<f64> {
    let (n, k, l) = (f.nrows(), nb.k(), f.ncols());
    let mut neigh = DMatrix::zeros(n * k, l);
    for i in 0..n {
        for (m, &j) in nb.of(i).iter().enumerate() {
            neigh.row_mut(i * k + m).copy_from(&f.row(j));
        }
    }
    neigh
}

fn decode(
    fm: &FeatureMap,
    params: &DecoderParams,
    neighbors: Option<&Neighborhoods>,
) -> Result<(OffsetSet, DecoderCache)> {
    if fm.dim() != params.in_dim() {
        return Err(Error::ShapeMismatch(format!(
            "features of width {} into decoder expecting {}",
            fm.dim(),
            params.in_dim()
        )));
    }
    let f = fm.to_matrix();
    let (out, cache) = match &params.body {
        DecoderBody::Asymmetric(mlp) => {
            let (out, c) = mlp.forward_cached(f);
            (out, DecoderCache::Asymmetric(c))
        }
        DecoderBody::Symmetric(net) => {
            let nb = neighbors.ok_or_else(|| {
                Error::ShapeMismatch("symmetric decoder needs the cloud's neighborhoods".into())
            })?;
            if nb.len() != fm.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} neighborhoods for {} features",
                    nb.len(),
                    fm.len()
                )));
            }
            let neigh = symmetric_inputs(&f, nb);
            let (out, c) = net.forward(&neigh, &f, nb.k());
            (out, DecoderCache::Symmetric(c, nb.clone()))
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoder output"));
    }
    Ok((OffsetSet::from_matrix(&out, params.phi), cache))
}

/// Offsets for every feature row. The symmetric variant needs the source
/// cloud's neighborhoods; the asymmetric one ignores them.
pub fn decoder_forward(
    fm: &FeatureMap,
    params: &DecoderParams,
    neighbors: Option<&Neighborhoods>,
) -> Result<OffsetSet> {
    decode(fm, params, neighbors).map(|(o, _)| o)
}

/// Forward pass recording activations; the decoder runs only if `with_decoder`.
pub fn forward_train(
    params: &ModelParams,
    cloud: &PointCloud,
    with_decoder: bool,
    tape: &mut Tape,
) -> Result<(FeatureMap, Option<OffsetSet>)> {
    let (fm, enc) = encode(cloud, &params.encoder)?;
    let offsets = if with_decoder {
        let (o, dec) = decode(&fm, &params.decoder, Some(&enc.neighbors))?;
        tape.decoder = Some(dec);
        Some(o)
    } else {
        tape.decoder = None;
        None
    };
    tape.encoder = Some(enc);
    Ok((fm, offsets))
}

/// Exact reverse-mode gradients of the loss through decoder and encoder.
pub fn backward(params: &ModelParams, tape: &Tape, grads: &LossGrads) -> Result<Gradients> {
    let enc = tape.encoder.as_ref().ok_or(Error::MissingCache)?;
    let n = enc.raw.nrows();
    let l = params.encoder.l();
    if grads.features.shape() != (n, l) {
        return Err(Error::ShapeMismatch(format!(
            "feature gradient {:?}, expected ({n}, {l})",
            grads.features.shape()
        )));
    }
    let mut g = Gradients::zeros_for(params);
    let mut df = grads.features.clone();

    if let Some(d_off) = &grads.offsets {
        let dec = tape.decoder.as_ref().ok_or(Error::MissingCache)?;
        let phi = params.decoder.phi;
        if d_off.len() != n * phi {
            return Err(Error::ShapeMismatch(format!(
                "{} offset gradients, expected {}",
                d_off.len(),
                n * phi
            )));
        }
        let dy = DMatrix::from_fn(n, 3 * phi, |i, c| d_off[i * phi + c / 3][c % 3]);
        match (&params.decoder.body, dec, &mut g.0.decoder.body) {
            (DecoderBody::Asymmetric(mlp), DecoderCache::Asymmetric(c), DecoderBody::Asymmetric(gm)) => {
                df += mlp.backward(c, dy, gm);
            }
            (DecoderBody::Symmetric(net), DecoderCache::Symmetric(c, nb), DecoderBody::Symmetric(gn)) => {
                let (dneigh, down) = net.backward(c, dy, gn);
                df += down;
                let k = nb.k();
                for i in 0..n {
                    for (m, &j) in nb.of(i).iter().enumerate() {
                        let row = dneigh.row(i * k + m).into_owned();
                        let mut target = df.row_mut(j);
                        target += row;
                    }
                }
            }
            _ => return Err(Error::MissingCache),
        }
    }

    let draw = if params.encoder.normalize {
        normalize_backward(&enc.raw, &df)
    } else {
        df
    };
    params.encoder.net.backward(&enc.block, draw, &mut g.0.encoder.net);
    if !g.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    Ok(g)
}
