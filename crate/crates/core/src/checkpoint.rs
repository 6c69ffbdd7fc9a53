//! Binary checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "C2V1"
//! config  u32 layer count + 1, u32 channels…, u32 kernel, u32 sequence length,
//!         u8 pooling, u8 location markers, u32 hidden, u32 output,
//!         f64 dropout, f64 bn momentum, f64 bn epsilon,
//!         u8 branch flags (1 schema, 2 semantics, 4 fc)
//! loss    f64 alpha, f64 beta, f64 margin, u8 objective flags (1 interpolation, 2 triplet)
//! payload u64 scalar count, then every tensor as f64 in `EncoderParams::tensors` order
//! ```

use crate::encoder::{EncoderConfig, EncoderError, EncoderParams};
use crate::loss::{LossWeights, Objectives};
use crate::scalar::Scalar;
use crate::semantics::{PoolingMode, SemanticLayout};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"C2V1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint or unsupported version (magic {0:?})")]
    Version([u8; 4]),
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<EncoderError> for CheckpointError {
    fn from(e: EncoderError) -> Self {
        CheckpointError::Shape(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: EncoderParams<T>,
    pub loss: LossWeights,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes<T: Scalar>(ck: &Checkpoint<T>) -> Vec<u8> {
    let cfg = &ck.params.config;
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, cfg.conv_channels.len());
    for &c in &cfg.conv_channels {
        put_u32(&mut out, c);
    }
    put_u32(&mut out, cfg.kernel);
    put_u32(&mut out, cfg.sequence_length);
    out.push(cfg.semantic.pooling.code());
    out.push(cfg.semantic.location_markers as u8);
    put_u32(&mut out, cfg.hidden_dim);
    put_u32(&mut out, cfg.output_dim);
    put_f64(&mut out, cfg.dropout);
    put_f64(&mut out, cfg.bn_momentum);
    put_f64(&mut out, cfg.bn_epsilon);
    out.push(cfg.use_schema as u8 | (cfg.use_semantics as u8) << 1 | (cfg.use_fc as u8) << 2);
    let l = &ck.loss;
    put_f64(&mut out, l.alpha);
    put_f64(&mut out, l.beta);
    put_f64(&mut out, l.margin);
    out.push(l.objectives.interpolation as u8 | (l.objectives.triplet as u8) << 1);
    let tensors = ck.params.tensors();
    let count: usize = tensors.iter().map(|t| t.data.len()).sum();
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for t in tensors {
        for v in t.data {
            put_f64(&mut out, v.as_f64());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        if self.bytes.len() < N {
            return Err(CheckpointError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "checkpoint is truncated",
            )));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().unwrap())
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, CheckpointError> {
    let mut c = Cursor { bytes };
    let magic = c.take::<4>()?;
    if &magic != MAGIC {
        return Err(CheckpointError::Version(magic));
    }
    let layers = c.u32()?;
    if layers > 64 {
        return Err(CheckpointError::Shape(format!("{layers} channel entries")));
    }
    let conv_channels = (0..layers).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
    let kernel = c.u32()?;
    let sequence_length = c.u32()?;
    let code = c.u8()?;
    let pooling =
        PoolingMode::from_code(code).ok_or_else(|| CheckpointError::Shape(format!("unknown pooling code {code}")))?;
    let location_markers = c.u8()? != 0;
    let hidden_dim = c.u32()?;
    let output_dim = c.u32()?;
    let dropout = c.f64()?;
    let bn_momentum = c.f64()?;
    let bn_epsilon = c.f64()?;
    let flags = c.u8()?;
    let config = EncoderConfig {
        conv_channels,
        kernel,
        sequence_length,
        semantic: SemanticLayout {
            pooling,
            location_markers,
        },
        hidden_dim,
        output_dim,
        dropout,
        bn_momentum,
        bn_epsilon,
        use_schema: flags & 1 != 0,
        use_semantics: flags & 2 != 0,
        use_fc: flags & 4 != 0,
    };
    config.validate()?;
    let alpha = c.f64()?;
    let beta = c.f64()?;
    let margin = c.f64()?;
    let obj = c.u8()?;
    let loss = LossWeights {
        alpha,
        beta,
        margin,
        objectives: Objectives {
            interpolation: obj & 1 != 0,
            triplet: obj & 2 != 0,
        },
    };
    let mut params = EncoderParams::<T>::zeros(&config);
    let expected = params.scalar_count() as u64;
    let count = c.u64()?;
    if count != expected {
        return Err(CheckpointError::Shape(format!(
            "payload holds {count} values, configuration needs {expected}"
        )));
    }
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = T::lit(c.f64()?);
        }
    }
    if !c.bytes.is_empty() {
        return Err(CheckpointError::Shape(format!("{} trailing bytes", c.bytes.len())));
    }
    Ok(Checkpoint { params, loss })
}

pub fn write_checkpoint<T: Scalar>(ck: &Checkpoint<T>, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(&to_bytes(ck))?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(mut r: impl Read) -> Result<Checkpoint<T>, CheckpointError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn save<T: Scalar>(ck: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(ck))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}
