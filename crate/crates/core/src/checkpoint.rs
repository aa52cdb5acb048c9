//! `MGMD` model checkpoints.
//!
//! Layout (little-endian): magic `MGMD`, version `u16`, layer count `u16`,
//! input rank `u8` and extents `u32[rank]`, then per layer a kind byte
//! followed, for dense and conv layers, by the weight and bias tensors (each
//! as rank `u8`, extents `u32[rank]`, row-major `f32` values). A CRC32 of all
//! preceding bytes closes the file.

use std::fs;
use std::path::Path;

use crate::codec::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{DiffModel, Layer, LayerKind};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MGMD";
pub const VERSION: u16 = 1;
const KIND: &str = "checkpoint";

pub fn encode(model: &DiffModel) -> Vec<u8> {
    let mut w = Writer::new(MAGIC);
    w.u16(VERSION);
    w.u16(model.layers().len() as u16);
    put_shape(&mut w, model.input_shape());
    for layer in model.layers() {
        w.u8(layer.kind() as u8);
        if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } = layer {
            put_tensor(&mut w, weight);
            put_tensor(&mut w, bias);
        }
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<DiffModel> {
    let mut r = Reader::open(KIND, MAGIC, bytes)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(
            KIND,
            format!("unsupported version {version}"),
        ));
    }
    let count = r.u16()? as usize;
    let input_shape = get_shape(&mut r)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let code = r.u8()?;
        let kind = LayerKind::from_u8(code)
            .ok_or_else(|| Error::format(KIND, format!("unknown layer kind {code}")))?;
        layers.push(match kind {
            LayerKind::Dense => Layer::Dense {
                weight: get_tensor(&mut r)?,
                bias: get_tensor(&mut r)?,
            },
            LayerKind::Conv2d => Layer::Conv2d {
                weight: get_tensor(&mut r)?,
                bias: get_tensor(&mut r)?,
            },
            LayerKind::Relu => Layer::Relu,
            LayerKind::Tanh => Layer::Tanh,
            LayerKind::MaxPool2 => Layer::MaxPool2,
            LayerKind::Flatten => Layer::Flatten,
        });
    }
    r.finish()?;
    DiffModel::new(input_shape, layers)
}

pub fn save(model: &DiffModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model))
}

pub fn load(path: &Path) -> Result<DiffModel> {
    decode(&fs::read(path)?)
}

fn put_shape(w: &mut Writer, shape: &[usize]) {
    w.u8(shape.len() as u8);
    for &e in shape {
        w.u32(e as u32);
    }
}

fn get_shape(r: &mut Reader<'_>) -> Result<Vec<usize>> {
    let rank = r.u8()? as usize;
    (0..rank).map(|_| r.u32().map(|e| e as usize)).collect()
}

fn put_tensor(w: &mut Writer, t: &Tensor) {
    put_shape(w, t.shape());
    w.f32s(t.data());
}

fn get_tensor(r: &mut Reader<'_>) -> Result<Tensor> {
    let shape = get_shape(r)?;
    let n = shape.iter().product();
    Tensor::new(shape, r.f32s(n)?).map_err(|e| Error::format(KIND, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ArchSpec};
    use crate::rng::Rng;

    #[test]
    fn cnn_checkpoint_round_trips() {
        let arch = ArchSpec::Cnn {
            input_shape: vec![8, 8, 1],
            channels: vec![2],
            kernel: 3,
            hidden: 4,
            outputs: 3,
            activation: Activation::Relu,
        };
        let m = arch.init(&mut Rng::new(5)).unwrap();
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn flipped_bit_rejected() {
        let m = ArchSpec::mlp(vec![3], vec![2], 2, Activation::Tanh)
            .init(&mut Rng::new(1))
            .unwrap();
        let mut bytes = encode(&m);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(decode(&bytes).is_err());
    }
}
