use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::block::NeighborhoodNet;
use super::nn::{Dense, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderVariant {
    /// Row-wise MLP on each feature.
    Asymmetric,
    /// Mirror of the encoder's neighborhood network over feature space.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDims {
    pub k: usize,
    pub stage1: Vec<usize>,
    pub stage2_hidden: Vec<usize>,
    pub l: usize,
    pub normalize: bool,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            k: 16,
            stage1: vec![32, 64],
            stage2_hidden: vec![64],
            l: 32,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderDims {
    pub variant: DecoderVariant,
    /// Hidden widths of the asymmetric decoder; ignored by the symmetric one.
    pub hidden: Vec<usize>,
    pub phi: usize,
}

impl Default for DecoderDims {
    fn default() -> Self {
        Self {
            variant: DecoderVariant::Asymmetric,
            hidden: vec![512, 256],
            phi: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelDims {
    pub encoder: EncoderDims,
    pub decoder: DecoderDims,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let zero = |v: &[usize]| v.contains(&0);
        if e.k == 0 || e.l == 0 || e.stage1.is_empty() || zero(&e.stage1) || zero(&e.stage2_hidden) {
            return Err(Error::InvalidConfig("encoder dimensions must be positive".into()));
        }
        let d = &self.decoder;
        if d.phi == 0 || zero(&d.hidden) {
            return Err(Error::InvalidConfig("decoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub k: usize,
    pub normalize: bool,
    pub net: NeighborhoodNet,
}

impl EncoderParams {
    pub fn l(&self) -> usize {
        self.net.out_dim()
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            k: self.k,
            stage1: self.net.stage1.layers.iter().map(Dense::fan_out).collect(),
            stage2_hidden: hidden_widths(&self.net.stage2),
            l: self.l(),
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderBody {
    Asymmetric(Mlp),
    Symmetric(NeighborhoodNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub phi: usize,
    pub body: DecoderBody,
}

impl DecoderParams {
    pub fn variant(&self) -> DecoderVariant {
        match self.body {
            DecoderBody::Asymmetric(_) => DecoderVariant::Asymmetric,
            DecoderBody::Symmetric(_) => DecoderVariant::Symmetric,
        }
    }

    pub fn in_dim(&self) -> usize {
        match &self.body {
            DecoderBody::Asymmetric(m) => m.in_dim(),
            DecoderBody::Symmetric(n) => n.in_dim(),
        }
    }

    fn hidden(&self) -> Vec<usize> {
        match &self.body {
            DecoderBody::Asymmetric(m) => hidden_widths(m),
            DecoderBody::Symmetric(_) => Vec::new(),
        }
    }

    fn zeros_like(&self) -> Self {
        let body = match &self.body {
            DecoderBody::Asymmetric(m) => DecoderBody::Asymmetric(m.zeros_like()),
            DecoderBody::Symmetric(n) => DecoderBody::Symmetric(n.zeros_like()),
        };
        Self { phi: self.phi, body }
    }
}

fn hidden_widths(m: &Mlp) -> Vec<usize> {
    let n = m.layers.len();
    m.layers[..n - 1].iter().map(Dense::fan_out).collect()
}

/// Encoder and decoder trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

/// Parameter gradients, shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl ModelParams {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            encoder: self.encoder.dims(),
            decoder: DecoderDims {
                variant: self.decoder.variant(),
                hidden: self.decoder.hidden(),
                phi: self.decoder.phi,
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: EncoderParams {
                k: self.encoder.k,
                normalize: self.encoder.normalize,
                net: self.encoder.net.zeros_like(),
            },
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Every dense layer in declaration order.
    pub(crate) fn layers(&self) -> Vec<&Dense> {
        let mut out: Vec<&Dense> = Vec::new();
        push_net(&mut out, &self.encoder.net);
        match &self.decoder.body {
            DecoderBody::Asymmetric(m) => out.extend(&m.layers),
            DecoderBody::Symmetric(n) => push_net(&mut out, n),
        }
        out
    }

    pub(crate) fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = Vec::new();
        out.extend(&mut self.encoder.net.stage1.layers);
        out.extend(&mut self.encoder.net.stage2.layers);
        match &mut self.decoder.body {
            DecoderBody::Asymmetric(m) => out.extend(&mut m.layers),
            DecoderBody::Symmetric(n) => {
                out.extend(&mut n.stage1.layers);
                out.extend(&mut n.stage2.layers);
            }
        }
        out
    }

    /// Mutable views of every tensor (weight then bias per layer), declaration order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.layers_mut() {
            let Dense { weight, bias } = layer;
            out.push(weight.as_mut_slice());
            out.push(bias.as_mut_slice());
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.layers() {
            out.push(layer.weight.as_slice());
            out.push(layer.bias.as_slice());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn push_net<'a>(out: &mut Vec<&'a Dense>, net: &'a NeighborhoodNet) {
    out.extend(&net.stage1.layers);
    out.extend(&net.stage2.layers);
}

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.0.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn init_dense(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Dense {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let weight = DMatrix::from_fn(fan_in, fan_out, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    });
    Dense {
        weight,
        bias: DVector::zeros(fan_out),
    }
}

fn init_mlp(rng: &mut ChaCha8Rng, widths: &[usize], relu_last: bool) -> Mlp {
    let layers = widths
        .windows(2)
        .map(|w| init_dense(rng, w[0], w[1]))
        .collect();
    Mlp { layers, relu_last }
}

fn init_net(rng: &mut ChaCha8Rng, din: usize, e: &EncoderDims, dout: usize) -> NeighborhoodNet {
    let mut w1 = vec![din];
    w1.extend(&e.stage1);
    let h = *e.stage1.last().expect("validated non-empty");
    let mut w2 = vec![2 * h];
    w2.extend(&e.stage2_hidden);
    w2.push(dout);
    NeighborhoodNet {
        stage1: init_mlp(rng, &w1, true),
        stage2: init_mlp(rng, &w2, false),
    }
}

/// Weights `N(0, 1/fan_in)`, biases zero, deterministic in `seed`.
pub fn init_params(seed: u64, dims: &ModelDims) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = &dims.encoder;
    let encoder = EncoderParams {
        k: e.k,
        normalize: e.normalize,
        net: init_net(&mut rng, 3, e, e.l),
    };
    let d = &dims.decoder;
    let body = match d.variant {
        DecoderVariant::Asymmetric => {
            let mut widths = vec![e.l];
            widths.extend(&d.hidden);
            widths.push(3 * d.phi);
            DecoderBody::Asymmetric(init_mlp(&mut rng, &widths, false))
        }
        DecoderVariant::Symmetric => DecoderBody::Symmetric(init_net(&mut rng, e.l, e, 3 * d.phi)),
    };
    Ok(ModelParams {
        encoder,
        decoder: DecoderParams { phi: d.phi, body },
    })
}
