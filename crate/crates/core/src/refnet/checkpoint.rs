//! Versioned binary checkpoint: magic, version, init seed, architecture
//! descriptor, then per-layer little-endian f64 tensors in declaration
//! order. Round-trips are byte-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::arch::{CnnArchitecture, LayerSpec};
use super::net::{CnnParameters, LayerParams};

const MAGIC: &[u8; 8] = b"HPNETCKP";
const VERSION: u32 = 1;

const TAG_CONV: u32 = 0;
const TAG_RELU: u32 = 1;
const TAG_POOL: u32 = 2;
const TAG_FC: u32 = 3;

fn layer_entry(layer: &LayerSpec) -> (u32, u32, u32) {
    match *layer {
        LayerSpec::Conv {
            kernel,
            out_channels,
        } => (TAG_CONV, kernel as u32, out_channels as u32),
        LayerSpec::Relu => (TAG_RELU, 0, 0),
        LayerSpec::MaxPool { size, stride } => (TAG_POOL, size as u32, stride as u32),
        LayerSpec::FullyConnected { units } => (TAG_FC, units as u32, 0),
    }
}

pub fn encode(params: &CnnParameters) -> Vec<u8> {
    let arch = params.arch();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.seed().to_le_bytes());
    out.extend_from_slice(&(arch.input_side() as u32).to_le_bytes());
    out.extend_from_slice(&(arch.layers().len() as u32).to_le_bytes());
    for layer in arch.layers() {
        let (tag, p0, p1) = layer_entry(layer);
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&p0.to_le_bytes());
        out.extend_from_slice(&p1.to_le_bytes());
    }
    for lp in params.layers() {
        out.extend_from_slice(&(lp.weights.len() as u64).to_le_bytes());
        for w in &lp.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&(lp.biases.len() as u64).to_le_bytes());
        for b in &lp.biases {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedFile {
                offset: self.pos,
                reason: format!("checkpoint truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<CnnParameters> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::MalformedFile {
            offset: 0,
            reason: "bad checkpoint magic".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedFormat {
            reason: format!("checkpoint version {version}, this build reads {VERSION}"),
        });
    }
    let seed = r.u64("seed")?;
    let input_side = r.u32("input side")? as usize;
    let n_layers = r.u32("layer count")? as usize;
    if n_layers > 1024 {
        return Err(Error::MalformedFile {
            offset: r.pos,
            reason: format!("implausible layer count {n_layers}"),
        });
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let tag = r.u32("layer tag")?;
        let p0 = r.u32("layer param 0")? as usize;
        let p1 = r.u32("layer param 1")? as usize;
        layers.push(match tag {
            TAG_CONV => LayerSpec::Conv {
                kernel: p0,
                out_channels: p1,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_POOL => LayerSpec::MaxPool {
                size: p0,
                stride: p1,
            },
            TAG_FC => LayerSpec::FullyConnected { units: p0 },
            other => {
                return Err(Error::MalformedFile {
                    offset: r.pos - 12,
                    reason: format!("unknown layer tag {other} at layer {i}"),
                })
            }
        });
    }
    let arch = CnnArchitecture::new(input_side, layers)?;
    let mut tensors = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let (wlen, blen) = arch.param_lens(i);
        let stored_w = r.u64("weight length")? as usize;
        if stored_w != wlen {
            return Err(Error::MalformedFile {
                offset: r.pos - 8,
                reason: format!("layer {i}: stored weight length {stored_w}, expected {wlen}"),
            });
        }
        let weights = r.f64_vec(wlen, "weights")?;
        let stored_b = r.u64("bias length")? as usize;
        if stored_b != blen {
            return Err(Error::MalformedFile {
                offset: r.pos - 8,
                reason: format!("layer {i}: stored bias length {stored_b}, expected {blen}"),
            });
        }
        let biases = r.f64_vec(blen, "biases")?;
        tensors.push(LayerParams { weights, biases });
    }
    if r.pos != bytes.len() {
        return Err(Error::MalformedFile {
            offset: r.pos,
            reason: format!("{} trailing bytes after checkpoint payload", bytes.len() - r.pos),
        });
    }
    CnnParameters::from_parts(arch, seed, tensors)
}

pub fn save(params: &CnnParameters, path: &Path) -> Result<()> {
    fs::write(path, encode(params))
        .map_err(|e| Error::io(format!("writing checkpoint '{}'", path.display()), e))
}

pub fn load(path: &Path) -> Result<CnnParameters> {
    let bytes = fs::read(path)
        .map_err(|e| Error::io(format!("reading checkpoint '{}'", path.display()), e))?;
    decode(&bytes)
}
