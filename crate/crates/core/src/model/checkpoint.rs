//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `APRCKPT\0`, u32 version, u32 k, u8 normalize,
//! u8 variant, u32 l, u32 φ, then three u32-counted width lists (encoder stage 1,
//! encoder stage-2 hidden, decoder hidden), then every tensor as f64 in
//! declaration order, weights row-major `in × out` followed by the bias.

use std::path::Path;

use super::params::{init_params, DecoderDims, DecoderVariant, EncoderDims, ModelDims, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_LIST: usize = 64;
const MAX_WIDTH: usize = 1 << 16;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(64 + 8 * params.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, dims.encoder.k as u32);
    out.push(dims.encoder.normalize as u8);
    out.push(match dims.decoder.variant {
        DecoderVariant::Asymmetric => 0,
        DecoderVariant::Symmetric => 1,
    });
    put_u32(&mut out, dims.encoder.l as u32);
    put_u32(&mut out, dims.decoder.phi as u32);
    for list in [&dims.encoder.stage1, &dims.encoder.stage2_hidden, &dims.decoder.hidden] {
        put_u32(&mut out, list.len() as u32);
        for &w in list {
            put_u32(&mut out, w as u32);
        }
    }
    for layer in params.layers() {
        for r in 0..layer.fan_in() {
            for c in 0..layer.fan_out() {
                out.extend_from_slice(&layer.weight[(r, c)].to_le_bytes());
            }
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::MalformedFile("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn width(&mut self) -> Result<usize> {
        let w = self.u32()?;
        if w == 0 || w > MAX_WIDTH {
            return Err(Error::MalformedFile(format!("layer width {w} out of range")));
        }
        Ok(w)
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if n > MAX_LIST {
            return Err(Error::MalformedFile(format!("{n} layers is too many")));
        }
        (0..n).map(|_| self.width()).collect()
    }
}

fn flag(v: u8) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::MalformedFile(format!("bad flag byte {v}"))),
    }
}

fn expected_values(dims: &ModelDims) -> Option<usize> {
    let e = &dims.encoder;
    let d = &dims.decoder;
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let net = |din: usize, dout: usize| {
        let mut s1 = vec![din];
        s1.extend(&e.stage1);
        let mut s2 = vec![2 * e.stage1.last().copied().unwrap_or(0)];
        s2.extend(&e.stage2_hidden);
        s2.push(dout);
        [s1, s2]
    };
    chains.extend(net(3, e.l));
    match d.variant {
        DecoderVariant::Asymmetric => {
            let mut c = vec![e.l];
            c.extend(&d.hidden);
            c.push(3 * d.phi);
            chains.push(c);
        }
        DecoderVariant::Symmetric => chains.extend(net(e.l, 3 * d.phi)),
    }
    let mut total = 0usize;
    for c in &chains {
        for w in c.windows(2) {
            total = total.checked_add(w[0].checked_mul(w[1])?.checked_add(w[1])?)?;
        }
    }
    Some(total)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::MalformedFile("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::MalformedFile(format!("unsupported checkpoint version {version}")));
    }
    let k = r.width()?;
    let normalize = flag(r.u8()?)?;
    let variant = match r.u8()? {
        0 => DecoderVariant::Asymmetric,
        1 => DecoderVariant::Symmetric,
        v => return Err(Error::MalformedFile(format!("unknown decoder variant {v}"))),
    };
    let l = r.width()?;
    let phi = r.width()?;
    let dims = ModelDims {
        encoder: EncoderDims {
            k,
            stage1: r.list()?,
            stage2_hidden: r.list()?,
            l,
            normalize,
        },
        decoder: DecoderDims {
            variant,
            hidden: r.list()?,
            phi,
        },
    };
    if dims.encoder.stage1.is_empty() {
        return Err(Error::MalformedFile("encoder has no first-stage layers".into()));
    }
    if variant == DecoderVariant::Symmetric && !dims.decoder.hidden.is_empty() {
        return Err(Error::MalformedFile("symmetric decoder lists hidden widths".into()));
    }
    let n_values = expected_values(&dims)
        .ok_or_else(|| Error::MalformedFile("checkpoint dimensions overflow".into()))?;
    let remaining = bytes.len() - r.pos;
    if n_values.checked_mul(8) != Some(remaining) {
        return Err(Error::MalformedFile(format!(
            "expected {n_values} parameters, found {remaining} bytes"
        )));
    }
    let mut params = init_params(0, &dims)?;
    for layer in params.layers_mut() {
        for row in 0..layer.fan_in() {
            for col in 0..layer.fan_out() {
                layer.weight[(row, col)] = read_f64(&mut r)?;
            }
        }
        for b in layer.bias.iter_mut() {
            *b = read_f64(&mut r)?;
        }
    }
    Ok(params)
}

fn read_f64(r: &mut Reader<'_>) -> Result<f64> {
    let b = r.take(8)?;
    let v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
    if !v.is_finite() {
        return Err(Error::MalformedFile("non-finite parameter".into()));
    }
    Ok(v)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelDims {
        ModelDims {
            encoder: EncoderDims {
                k: 4,
                stage1: vec![8, 16],
                stage2_hidden: vec![16],
                l: 8,
                normalize: true,
            },
            decoder: DecoderDims {
                variant: DecoderVariant::Asymmetric,
                hidden: vec![16, 8],
                phi: 2,
            },
        }
    }

    #[test]
    fn round_trip_both_variants() {
        let mut d = small();
        let p = init_params(5, &d).unwrap();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&p)).unwrap(), p);
        d.decoder.variant = DecoderVariant::Symmetric;
        d.decoder.hidden.clear();
        let p = init_params(5, &d).unwrap();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&p)).unwrap(), p);
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let bytes = encode_checkpoint(&init_params(1, &small()).unwrap());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_checkpoint(&longer).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }

    #[test]
    fn huge_header_does_not_allocate() {
        let mut bytes = CHECKPOINT_MAGIC.to_vec();
        for v in [1u32, 4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[1, 0]);
        for v in [65536u32, 65536, 1, 65536, 1, 65536, 1, 65536] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::MalformedFile(_))));
    }
}
