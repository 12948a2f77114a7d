//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TSE1"  u32 version
//! u64 len, config text (UTF-8)
//! u64 iteration
//! u64 input_dim, u64 depth, depth × (u64 units, u8 activation)
//! depth × (array weights, array bias)
//! u64 adam step, array [rate, beta1, beta2, epsilon, clip_norm or 0], array m, array v
//! array generator state
//! array metric summary
//! ```
//!
//! where `array` is a `u64` count followed by that many `f64`.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::network::{Activation, Layer, NetworkParams};
use crate::numerics::Matrix;
use crate::optimizer::{AdamSettings, AdamState};

pub const MAGIC: &[u8; 4] = b"TSE1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub iteration: u64,
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Data generator state needed to continue the training stream.
    pub generator_state: Vec<f64>,
    /// Running metrics: last f_ts, f_e, f_total, best f_total, elapsed seconds.
    pub summary: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        let text = self.config.to_text();
        w.u64(text.len() as u64);
        w.0.extend_from_slice(text.as_bytes());
        w.u64(self.iteration);
        w.u64(self.params.input_dim as u64);
        w.u64(self.params.depth() as u64);
        for l in &self.params.layers {
            w.u64(l.units() as u64);
            w.0.push(l.activation.code());
        }
        for l in &self.params.layers {
            w.array(l.weights.as_slice());
            w.array(&l.bias);
        }
        let s = &self.adam.settings;
        w.u64(self.adam.step);
        w.array(&[
            s.rate,
            s.beta1,
            s.beta2,
            s.epsilon,
            s.clip_norm.unwrap_or(0.0),
        ]);
        w.array(&self.adam.m);
        w.array(&self.adam.v);
        w.array(&self.generator_state);
        w.array(&self.summary);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.len()?;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
        let config = ExperimentConfig::parse(text)?;
        let iteration = r.u64()?;
        let input_dim = r.len()?;
        let depth = r.len()?;
        let mut shapes = Vec::with_capacity(depth.min(1024));
        for _ in 0..depth {
            let units = r.len()?;
            let act = Activation::from_code(r.take(1)?[0])
                .ok_or_else(|| Error::Checkpoint("unknown activation code".into()))?;
            shapes.push((units, act));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut fan_in = input_dim;
        for (units, activation) in shapes {
            let weights = Matrix::from_vec(units, fan_in, r.array()?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = r.array()?;
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
            fan_in = units;
        }
        let params =
            NetworkParams::new(input_dim, layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let step = r.u64()?;
        let s = r.array()?;
        if s.len() != 5 {
            return Err(Error::Checkpoint("optimizer settings block".into()));
        }
        let settings = AdamSettings {
            rate: s[0],
            beta1: s[1],
            beta2: s[2],
            epsilon: s[3],
            clip_norm: (s[4] > 0.0).then_some(s[4]),
        };
        let m = r.array()?;
        let v = r.array()?;
        if m.len() != params.param_count() || v.len() != params.param_count() {
            return Err(Error::Checkpoint(
                "optimizer moments do not match parameters".into(),
            ));
        }
        let generator_state = r.array()?;
        let summary = r.array()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            iteration,
            params,
            adam: AdamState {
                settings,
                step,
                m,
                v,
            },
            generator_state,
            summary,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn array(&mut self, values: &[f64]) {
        self.u64(values.len() as u64);
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    fn array(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
