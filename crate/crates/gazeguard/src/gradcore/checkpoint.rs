//! Checkpoint format: magic `GGCK`, version u16, layer count u32, then per
//! layer a kind tag, a shape header, and little-endian 32-bit floats; the file
//! ends with a CRC32 of everything before it. All integers little-endian, so
//! files are bit-exact across platforms.

use std::path::Path;

use super::graph::LayerGraph;
use super::layers::{ConcatAux, Conv2d, Dense, Flatten, Layer, MaxPool2d, Relu, Softmax};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::util::atomic_write;

pub const MAGIC: &[u8; 4] = b"GGCK";
pub const VERSION: u16 = 1;

const TAG_CONV2D: u8 = 1;
const TAG_MAXPOOL2D: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_CONCAT_AUX: u8 = 6;
const TAG_SOFTMAX: u8 = 7;

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(buf: &mut Vec<u8>, values: &Tensor) {
    for &v in values.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes a graph to checkpoint bytes.
pub fn to_bytes(graph: &LayerGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u16(&mut buf, VERSION);
    push_u32(&mut buf, graph.layer_count() as u32);
    for layer in graph.layers() {
        match layer {
            Layer::Conv2d(l) => {
                buf.push(TAG_CONV2D);
                push_u32(&mut buf, l.out_ch as u32);
                push_u32(&mut buf, l.in_ch as u32);
                push_u32(&mut buf, l.kh as u32);
                push_u32(&mut buf, l.kw as u32);
                push_f32s(&mut buf, &l.weight);
                push_f32s(&mut buf, &l.bias);
            }
            Layer::MaxPool2d(_) => buf.push(TAG_MAXPOOL2D),
            Layer::Relu(_) => buf.push(TAG_RELU),
            Layer::Flatten(_) => buf.push(TAG_FLATTEN),
            Layer::Dense(l) => {
                buf.push(TAG_DENSE);
                push_u32(&mut buf, l.in_dim as u32);
                push_u32(&mut buf, l.out_dim as u32);
                push_f32s(&mut buf, &l.weight);
                push_f32s(&mut buf, &l.bias);
            }
            Layer::ConcatAux(l) => {
                buf.push(TAG_CONCAT_AUX);
                push_u32(&mut buf, l.aux_dim as u32);
            }
            Layer::Softmax(_) => buf.push(TAG_SOFTMAX),
        }
    }
    let crc = crc32fast::hash(&buf);
    push_u32(&mut buf, crc);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Tensor::from_vec(shape, data)
    }
}

/// Parses checkpoint bytes back into a graph (all layers trainable).
pub fn from_bytes(bytes: &[u8]) -> Result<LayerGraph> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 4 {
        return Err(Error::Data("checkpoint too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Data(format!(
            "CRC mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Data("bad magic, not a checkpoint".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = r.u8()?;
        let layer = match tag {
            TAG_CONV2D => {
                let out = r.u32()? as usize;
                let inc = r.u32()? as usize;
                let kh = r.u32()? as usize;
                let kw = r.u32()? as usize;
                let weight = r.f32s(&[out, inc, kh, kw])?;
                let bias = r.f32s(&[out])?;
                Layer::Conv2d(Conv2d::from_params(weight, bias)?)
            }
            TAG_MAXPOOL2D => Layer::MaxPool2d(MaxPool2d::new()),
            TAG_RELU => Layer::Relu(Relu::new()),
            TAG_FLATTEN => Layer::Flatten(Flatten::new()),
            TAG_DENSE => {
                let in_dim = r.u32()? as usize;
                let out_dim = r.u32()? as usize;
                let weight = r.f32s(&[in_dim, out_dim])?;
                let bias = r.f32s(&[out_dim])?;
                Layer::Dense(Dense::from_params(weight, bias)?)
            }
            TAG_CONCAT_AUX => Layer::ConcatAux(ConcatAux::new(r.u32()? as usize)),
            TAG_SOFTMAX => Layer::Softmax(Softmax::new()),
            other => return Err(Error::Data(format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != body.len() {
        return Err(Error::Data("trailing bytes after last layer".into()));
    }
    LayerGraph::new(layers)
}

pub fn save(graph: &LayerGraph, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(graph))
}

pub fn load(path: &Path) -> Result<LayerGraph> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
