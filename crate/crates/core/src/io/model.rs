//! `DREM` model container, version 1.
//!
//! ```text
//! "DREM" | version: u32 | sections... | crc32: u32
//! section = tag: [u8; 4] | length: u64 | payload
//! ```
//!
//! All integers and floats are little-endian; every float is stored as an
//! `f64`. Sections appear in the order `SPEC`, `PARM`, `CONF`, `NORM`. The
//! trailing CRC-32 covers every preceding byte.

use std::fs;
use std::path::Path;

use super::{write_atomic, NormMode, Normalization};
use crate::error::{DreError, Result};
use crate::nn::{BatchNorm, LayerParams, NetworkParams, NetworkSpec, Tap};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"DREM";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to project new data: network, normalization fitted on
/// the training rows, and an echo of the training configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact<T> {
    pub params: NetworkParams<T>,
    pub normalization: Normalization<T>,
    pub config: Vec<(String, String)>,
}

impl<T: Scalar> ModelArtifact<T> {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn floats<T: Scalar>(&mut self, xs: &[T]) {
        for &x in xs {
            self.f64(x.as_f64());
        }
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: &[u8; 4], payload: Writer) {
        self.buf.extend_from_slice(tag);
        self.u64(payload.buf.len() as u64);
        self.buf.extend_from_slice(&payload.buf);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            DreError::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| DreError::Format(format!("count {v} too large")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn floats<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        if n > self.bytes.len() / 8 {
            return Err(DreError::Format(format!("float count {n} exceeds file size")));
        }
        (0..n).map(|_| self.f64().map(T::lit)).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| DreError::Format("string is not UTF-8".into()))
    }
    fn section(&mut self, tag: &[u8; 4]) -> Result<Reader<'a>> {
        let got = self.take(4)?;
        if got != tag {
            return Err(DreError::Format(format!(
                "expected section {}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(got)
            )));
        }
        let n = self.usize()?;
        Ok(Reader {
            bytes: self.take(n)?,
            pos: 0,
        })
    }
    fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(DreError::Format(format!("{} unread bytes in {what}", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_model<T: Scalar>(model: &ModelArtifact<T>) -> Result<Vec<u8>> {
    model.params.validate()?;
    let spec = &model.params.spec;
    let mut out = Writer::default();
    out.buf.extend_from_slice(MODEL_MAGIC);
    out.buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());

    let mut s = Writer::default();
    s.u64(spec.input_dim as u64);
    s.u64(spec.hidden_dims.len() as u64);
    for &h in &spec.hidden_dims {
        s.u64(h as u64);
    }
    s.u64(spec.output_dim as u64);
    s.u64(spec.taps.len() as u64);
    for tap in &spec.taps {
        s.str(&tap.name);
        s.u64(tap.layer as u64);
    }
    s.f64(spec.bn_momentum);
    s.f64(spec.bn_epsilon);
    out.section(b"SPEC", s);

    let mut p = Writer::default();
    for layer in &model.params.layers {
        p.floats(layer.weights.as_slice());
        p.floats(&layer.bias);
        if let Some(bn) = &layer.norm {
            p.floats(&bn.gamma);
            p.floats(&bn.beta);
            p.floats(&bn.running_mean);
            p.floats(&bn.running_var);
        }
    }
    out.section(b"PARM", p);

    let mut c = Writer::default();
    c.u64(model.config.len() as u64);
    for (k, v) in &model.config {
        c.str(k);
        c.str(v);
    }
    out.section(b"CONF", c);

    let norm = &model.normalization;
    let mut n = Writer::default();
    n.buf.push(norm.mode.code());
    n.u64(norm.dim as u64);
    n.u64(norm.offset.len() as u64);
    n.floats(&norm.offset);
    n.floats(&norm.factor);
    out.section(b"NORM", n);

    let crc = crc32fast::hash(&out.buf);
    out.buf.extend_from_slice(&crc.to_le_bytes());
    Ok(out.buf)
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<ModelArtifact<T>> {
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(DreError::Format("not a DREM model file (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(DreError::Checksum { stored, computed });
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(DreError::UnsupportedVersion(version));
    }
    let mut r = Reader { bytes: body, pos: 8 };

    let mut s = r.section(b"SPEC")?;
    let input_dim = s.usize()?;
    let n_hidden = s.usize()?;
    let hidden_dims = (0..n_hidden).map(|_| s.usize()).collect::<Result<Vec<_>>>()?;
    let output_dim = s.usize()?;
    let n_taps = s.usize()?;
    let mut taps = Vec::new();
    for _ in 0..n_taps {
        let name = s.str()?;
        taps.push(Tap::new(name, s.usize()?));
    }
    let bn_momentum = s.f64()?;
    let bn_epsilon = s.f64()?;
    s.finish("SPEC")?;
    let spec = NetworkSpec {
        input_dim,
        hidden_dims,
        taps,
        output_dim,
        bn_momentum,
        bn_epsilon,
    };
    spec.validate()?;

    let mut p = r.section(b"PARM")?;
    let mut layers = Vec::new();
    for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let weights = Matrix::from_vec(fan_in, fan_out, p.floats(fan_in * fan_out)?)?;
        let bias = p.floats(fan_out)?;
        let norm = if l < spec.hidden_dims.len() {
            Some(BatchNorm {
                gamma: p.floats(fan_out)?,
                beta: p.floats(fan_out)?,
                running_mean: p.floats(fan_out)?,
                running_var: p.floats(fan_out)?,
                momentum: T::lit(spec.bn_momentum),
                epsilon: T::lit(spec.bn_epsilon),
            })
        } else {
            None
        };
        layers.push(LayerParams { weights, bias, norm });
    }
    p.finish("PARM")?;
    let params = NetworkParams { spec, layers };
    params.validate()?;

    let mut c = r.section(b"CONF")?;
    let n_conf = c.usize()?;
    let mut config = Vec::new();
    for _ in 0..n_conf {
        let k = c.str()?;
        config.push((k, c.str()?));
    }
    c.finish("CONF")?;

    let mut n = r.section(b"NORM")?;
    let mode = NormMode::from_code(n.take(1)?[0]).ok_or_else(|| DreError::Format("unknown normalization mode".into()))?;
    let dim = n.usize()?;
    let len = n.usize()?;
    let offset = n.floats(len)?;
    let factor = n.floats(len)?;
    n.finish("NORM")?;
    let expected_len = if mode == NormMode::None { 0 } else { dim };
    if len != expected_len || dim != params.spec.input_dim {
        return Err(DreError::Format(format!("normalization of width {dim}/{len} for input width {}", params.spec.input_dim)));
    }
    r.finish("model body")?;

    Ok(ModelArtifact {
        params,
        normalization: Normalization { mode, dim, offset, factor },
        config,
    })
}

pub fn save_model<T: Scalar>(path: &Path, model: &ModelArtifact<T>) -> Result<()> {
    write_atomic(path, &encode_model(model)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ModelArtifact<T>> {
    decode_model(&fs::read(path)?)
}
