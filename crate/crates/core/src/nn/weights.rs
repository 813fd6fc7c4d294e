//! Binary weight file.
//!
//! ```text
//! "G9W1"  u16 version  u16 layer_count
//! per layer:  u8 kind  then each of the layer's tensors as
//!             u8 rank  rank × u32 dims  product(dims) × f32 payload
//! ```
//!
//! All integers and floats are little-endian. Conv layers carry
//! (weights, bias), batch-norm layers (gamma, beta, running_mean,
//! running_var, [epsilon, momentum]), linear layers (weights, bias).

use std::io::{Read, Write};

use super::{BatchNormParams, Conv2dParams, LinearParams, NnError, Tensor};

pub const MAGIC: &[u8; 4] = b"G9W1";
pub const VERSION: u16 = 1;

const TAG_CONV: u8 = 1;
const TAG_BATCHNORM: u8 = 2;
const TAG_LINEAR: u8 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv2d(Conv2dParams<f32>),
    BatchNorm(BatchNormParams<f32>),
    Linear(LinearParams<f32>),
}

impl LayerParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerParams::Conv2d(_) => "conv2d",
            LayerParams::BatchNorm(_) => "batchnorm",
            LayerParams::Linear(_) => "linear",
        }
    }
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor<f32>) -> Result<(), NnError> {
    w.write_all(&[t.rank() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_layers<W: Write>(mut w: W, layers: &[LayerParams]) -> Result<(), NnError> {
    let count = u16::try_from(layers.len())
        .map_err(|_| NnError::ShapeTable(format!("{} layers exceed the u16 count", layers.len())))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for layer in layers {
        match layer {
            LayerParams::Conv2d(p) => {
                w.write_all(&[TAG_CONV])?;
                write_tensor(&mut w, &p.weights)?;
                write_tensor(&mut w, &p.bias)?;
            }
            LayerParams::BatchNorm(p) => {
                w.write_all(&[TAG_BATCHNORM])?;
                for t in [&p.gamma, &p.beta, &p.running_mean, &p.running_var] {
                    write_tensor(&mut w, t)?;
                }
                let hyper = Tensor::new(vec![2], vec![p.epsilon, p.momentum])?;
                write_tensor(&mut w, &hyper)?;
            }
            LayerParams::Linear(p) => {
                w.write_all(&[TAG_LINEAR])?;
                write_tensor(&mut w, &p.weights)?;
                write_tensor(&mut w, &p.bias)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.bytes.len() - self.pos < n {
            return Err(NnError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, NnError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, what: &str) -> Result<Tensor<f32>, NnError> {
        let rank = self.u8(what)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32(what)? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| NnError::ShapeTable(format!("{what} dims {shape:?} overflow")))?;
        let payload = self.take(count, what)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }
}

fn shape_table<T>(result: Result<T, NnError>, layer: usize) -> Result<T, NnError> {
    result.map_err(|e| match e {
        NnError::Shape(msg) => NnError::ShapeTable(format!("layer {layer}: {msg}")),
        other => other,
    })
}

pub fn read_layers<R: Read>(mut r: R) -> Result<Vec<LayerParams>, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() {
        return Err(NnError::Truncated("file shorter than the magic bytes".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(NnError::BadMagic);
    }
    let mut cur = Cursor { bytes: &bytes, pos: 4 };
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let count = cur.u16("layer count")?;
    let mut layers = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let layer = match cur.u8("layer kind")? {
            TAG_CONV => {
                let weights = cur.tensor("conv weights")?;
                let bias = cur.tensor("conv bias")?;
                LayerParams::Conv2d(shape_table(Conv2dParams::new(weights, bias), i)?)
            }
            TAG_BATCHNORM => {
                let gamma = cur.tensor("batch-norm gamma")?;
                let beta = cur.tensor("batch-norm beta")?;
                let running_mean = cur.tensor("batch-norm running mean")?;
                let running_var = cur.tensor("batch-norm running variance")?;
                let hyper = cur.tensor("batch-norm hyperparameters")?;
                if hyper.shape() != [2] {
                    return Err(NnError::ShapeTable(format!(
                        "layer {i}: batch-norm hyperparameters must have shape [2], got {:?}",
                        hyper.shape()
                    )));
                }
                let p = BatchNormParams {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    epsilon: hyper.data()[0],
                    momentum: hyper.data()[1],
                };
                shape_table(p.validate(), i)?;
                LayerParams::BatchNorm(p)
            }
            TAG_LINEAR => {
                let weights = cur.tensor("linear weights")?;
                let bias = cur.tensor("linear bias")?;
                LayerParams::Linear(shape_table(LinearParams::new(weights, bias), i)?)
            }
            other => return Err(NnError::UnknownLayerKind(other)),
        };
        layers.push(layer);
    }
    if cur.pos != bytes.len() {
        return Err(NnError::ShapeTable(format!(
            "{} trailing bytes after {count} layers",
            bytes.len() - cur.pos
        )));
    }
    Ok(layers)
}
