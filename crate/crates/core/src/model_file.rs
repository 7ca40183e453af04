//! PKFC model container.
//!
//! Little-endian layout:
//!
//! ```text
//! "PKFC"                      4 bytes
//! format_version              u16
//! feature_layout_version      u16
//! precision                   u8   (0 = f64, 1 = f16)
//! model_type                  u8   (0 = lstm, 1 = linear)
//! layer_count                 u16
//! input_size                  u32
//! output_size                 u32
//! seq_len                     u32
//! parameter_count             u64
//! per layer: input_size u32, hidden_size u32
//! per layer: W_f U_f b_f W_i U_i b_i W_o U_o b_o W_c U_c b_c   (row-major)
//! head W (output × head_in), head b
//! normalization: demand min/max, temp min/max, humidity min/max (f64)
//! linear only: ridge_lambda (f64)
//! ```
//!
//! A linear model has no layers; its head input is `seq_len × input_size`.

use std::fmt;
use std::fs;
use std::path::Path;

use half::f16;
use thiserror::Error;

use crate::baselines::{predict_linreg, LinRegModel, FLAT_INPUTS};
use crate::features::{FeatureVector, NormalizationParams, FEATURE_DIM, FEATURE_LAYOUT_VERSION, INPUT_HOURS, TARGET_HOURS};
use crate::lstm::{predict_day, DenseHead, Gate, LstmLayerParams, ModelParams, StackWeights};

pub const MAGIC: &[u8; 4] = b"PKFC";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a PKFC model file")]
    BadMagic,
    #[error("unsupported {what} version {found} (expected {expected})")]
    VersionMismatch { what: &'static str, found: u16, expected: u16 },
    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    TruncatedFile { offset: usize, needed: usize, available: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid model file: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Full,
    Half,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::Full => 0,
            Precision::Half => 1,
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            Precision::Full => 8,
            Precision::Half => 2,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Full => "f64",
            Precision::Half => "f16",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelType {
    Lstm,
    Linear,
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelType::Lstm => "lstm",
            ModelType::Linear => "linreg",
        })
    }
}

/// Any forecaster the container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Lstm(ModelParams),
    Linear(LinRegModel),
}

impl StoredModel {
    pub fn model_type(&self) -> ModelType {
        match self {
            StoredModel::Lstm(_) => ModelType::Lstm,
            StoredModel::Linear(_) => ModelType::Linear,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            StoredModel::Lstm(m) => m.parameter_count(),
            StoredModel::Linear(m) => m.parameter_count(),
        }
    }

    pub fn normalization(&self) -> &NormalizationParams {
        match self {
            StoredModel::Lstm(m) => &m.normalization,
            StoredModel::Linear(m) => &m.normalization,
        }
    }

    /// Next-day demand in kW.
    pub fn predict_day(&self, inputs: &[FeatureVector]) -> Result<[f64; TARGET_HOURS], String> {
        match self {
            StoredModel::Lstm(m) => predict_day(m, inputs).map_err(|e| e.to_string()),
            StoredModel::Linear(m) => predict_linreg(m, inputs).map_err(|e| e.to_string()),
        }
    }
}

/// Header fields, readable without decoding the weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHeader {
    pub format_version: u16,
    pub feature_layout_version: u16,
    pub precision: Precision,
    pub model_type: ModelType,
    pub input_size: usize,
    pub output_size: usize,
    pub seq_len: usize,
    pub parameter_count: u64,
    /// `(input_size, hidden_size)` per layer.
    pub layers: Vec<(usize, usize)>,
}

struct Writer {
    buf: Vec<u8>,
    precision: Precision,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &[f64]) {
        match self.precision {
            Precision::Full => t.iter().for_each(|v| self.f64(*v)),
            Precision::Half => t
                .iter()
                .for_each(|v| self.buf.extend_from_slice(&f16::from_f64(*v).to_le_bytes())),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ModelFileError::TruncatedFile {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor(&mut self, out: &mut [f64], precision: Precision) -> Result<(), ModelFileError> {
        let raw = self.take(out.len() * precision.bytes_per_value())?;
        match precision {
            Precision::Full => {
                for (o, c) in out.iter_mut().zip(raw.chunks_exact(8)) {
                    *o = f64::from_le_bytes(c.try_into().unwrap());
                }
            }
            Precision::Half => {
                for (o, c) in out.iter_mut().zip(raw.chunks_exact(2)) {
                    *o = f16::from_le_bytes([c[0], c[1]]).to_f64();
                }
            }
        }
        Ok(())
    }
}

fn write_norm(w: &mut Writer, n: &NormalizationParams) {
    for v in [n.demand_min, n.demand_max, n.temp_min, n.temp_max, n.humidity_min, n.humidity_max] {
        w.f64(v);
    }
}

fn read_norm(r: &mut Reader) -> Result<NormalizationParams, ModelFileError> {
    let n = NormalizationParams {
        demand_min: r.f64()?,
        demand_max: r.f64()?,
        temp_min: r.f64()?,
        temp_max: r.f64()?,
        humidity_min: r.f64()?,
        humidity_max: r.f64()?,
    };
    n.validate().map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    Ok(n)
}

pub fn serialize(model: &StoredModel, precision: Precision) -> Vec<u8> {
    let mut w = Writer {
        buf: Vec::with_capacity(64 + model.parameter_count() * precision.bytes_per_value()),
        precision,
    };
    w.buf.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    match model {
        StoredModel::Lstm(m) => {
            let sw = &m.weights;
            w.u16(m.feature_layout_version);
            w.u8(precision.tag());
            w.u8(0);
            w.u16(sw.layers.len() as u16);
            w.u32(sw.input_size());
            w.u32(sw.output_size());
            w.u32(INPUT_HOURS);
            w.u64(sw.parameter_count() as u64);
            for l in &sw.layers {
                w.u32(l.input_size);
                w.u32(l.hidden_size);
            }
            for l in &sw.layers {
                for g in Gate::ORDER {
                    w.tensor(l.gate_w(g));
                    w.tensor(l.gate_u(g));
                    w.tensor(l.gate_b(g));
                }
            }
            w.tensor(&sw.head.w);
            w.tensor(&sw.head.b);
            write_norm(&mut w, &m.normalization);
        }
        StoredModel::Linear(m) => {
            w.u16(FEATURE_LAYOUT_VERSION);
            w.u8(precision.tag());
            w.u8(1);
            w.u16(0);
            w.u32(FEATURE_DIM);
            w.u32(TARGET_HOURS);
            w.u32(INPUT_HOURS);
            w.u64(m.parameter_count() as u64);
            w.tensor(&m.weights);
            w.tensor(&m.intercept);
            write_norm(&mut w, &m.normalization);
            w.f64(m.ridge_lambda);
        }
    }
    w.buf
}

fn read_header(r: &mut Reader) -> Result<ModelHeader, ModelFileError> {
    if r.take(4).map_err(|_| ModelFileError::BadMagic)? != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let format_version = r.u16()?;
    if format_version != FORMAT_VERSION {
        return Err(ModelFileError::VersionMismatch {
            what: "format",
            found: format_version,
            expected: FORMAT_VERSION,
        });
    }
    let feature_layout_version = r.u16()?;
    if feature_layout_version != FEATURE_LAYOUT_VERSION {
        return Err(ModelFileError::VersionMismatch {
            what: "feature layout",
            found: feature_layout_version,
            expected: FEATURE_LAYOUT_VERSION,
        });
    }
    let precision = match r.u8()? {
        0 => Precision::Full,
        1 => Precision::Half,
        t => return Err(ModelFileError::Invalid(format!("unknown precision tag {t}"))),
    };
    let model_type = match r.u8()? {
        0 => ModelType::Lstm,
        1 => ModelType::Linear,
        t => return Err(ModelFileError::Invalid(format!("unknown model type tag {t}"))),
    };
    let layer_count = r.u16()? as usize;
    let input_size = r.u32()?;
    let output_size = r.u32()?;
    let seq_len = r.u32()?;
    let parameter_count = r.u64()?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push((r.u32()?, r.u32()?));
    }
    Ok(ModelHeader {
        format_version,
        feature_layout_version,
        precision,
        model_type,
        input_size,
        output_size,
        seq_len,
        parameter_count,
        layers,
    })
}

pub fn peek_header(bytes: &[u8]) -> Result<ModelHeader, ModelFileError> {
    read_header(&mut Reader { bytes, pos: 0 })
}

pub fn deserialize(bytes: &[u8]) -> Result<(StoredModel, Precision), ModelFileError> {
    let mut r = Reader { bytes, pos: 0 };
    let h = read_header(&mut r)?;
    let invalid = |m: String| Err(ModelFileError::Invalid(m));
    if h.input_size != FEATURE_DIM || h.output_size != TARGET_HOURS || h.seq_len != INPUT_HOURS {
        return invalid(format!(
            "dimensions {}x{} -> {} do not match the {INPUT_HOURS}x{FEATURE_DIM} -> {TARGET_HOURS} layout",
            h.seq_len, h.input_size, h.output_size
        ));
    }
    // Bound allocations by what the file can actually hold.
    let budget = (bytes.len() / h.precision.bytes_per_value()) as u64;
    if h.parameter_count > budget {
        return Err(ModelFileError::TruncatedFile {
            offset: r.pos,
            needed: (h.parameter_count as usize).saturating_mul(h.precision.bytes_per_value()),
            available: bytes.len() - r.pos,
        });
    }
    let model = match h.model_type {
        ModelType::Lstm => {
            if h.layers.is_empty() {
                return invalid("lstm model without layers".into());
            }
            let mut fan_in = h.input_size;
            let mut layers = Vec::with_capacity(h.layers.len());
            for (i, &(input_size, hidden_size)) in h.layers.iter().enumerate() {
                if input_size != fan_in || hidden_size == 0 {
                    return invalid(format!("layer {i} has dims {input_size}x{hidden_size}, expected input {fan_in}"));
                }
                layers.push(LstmLayerParams::zeros(input_size, hidden_size));
                fan_in = hidden_size;
            }
            let mut weights = StackWeights {
                layers,
                head: DenseHead::zeros(fan_in, h.output_size),
            };
            if weights.parameter_count() as u64 != h.parameter_count {
                return invalid(format!(
                    "header declares {} parameters, dimensions imply {}",
                    h.parameter_count,
                    weights.parameter_count()
                ));
            }
            for l in &mut weights.layers {
                let (hh, n_in) = (l.hidden_size, l.input_size);
                for g in Gate::ORDER {
                    let gi = g as usize;
                    r.tensor(&mut l.w[gi * hh * n_in..(gi + 1) * hh * n_in], h.precision)?;
                    r.tensor(&mut l.u[gi * hh * hh..(gi + 1) * hh * hh], h.precision)?;
                    r.tensor(&mut l.b[gi * hh..(gi + 1) * hh], h.precision)?;
                }
            }
            r.tensor(&mut weights.head.w, h.precision)?;
            r.tensor(&mut weights.head.b, h.precision)?;
            let normalization = read_norm(&mut r)?;
            StoredModel::Lstm(ModelParams {
                weights,
                normalization,
                feature_layout_version: h.feature_layout_version,
            })
        }
        ModelType::Linear => {
            if !h.layers.is_empty() {
                return invalid("linear model with recurrent layers".into());
            }
            let expected = (TARGET_HOURS * FLAT_INPUTS + TARGET_HOURS) as u64;
            if h.parameter_count != expected {
                return invalid(format!("linear model declares {} parameters, expected {expected}", h.parameter_count));
            }
            let mut weights = vec![0.0; TARGET_HOURS * FLAT_INPUTS];
            let mut intercept = [0.0; TARGET_HOURS];
            r.tensor(&mut weights, h.precision)?;
            r.tensor(&mut intercept, h.precision)?;
            let normalization = read_norm(&mut r)?;
            let ridge_lambda = r.f64()?;
            StoredModel::Linear(LinRegModel {
                weights,
                intercept,
                ridge_lambda,
                normalization,
            })
        }
    };
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(ModelFileError::TrailingBytes(rest));
    }
    Ok((model, h.precision))
}

pub fn save(model: &StoredModel, precision: Precision, path: &Path) -> Result<usize, ModelFileError> {
    let bytes = serialize(model, precision);
    fs::write(path, &bytes).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes.len())
}

pub fn load(path: &Path) -> Result<(StoredModel, Precision), ModelFileError> {
    let bytes = fs::read(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    deserialize(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::DEFAULT_HIDDEN;

    fn norm() -> NormalizationParams {
        NormalizationParams {
            demand_min: 9934.0,
            demand_max: 26219.0,
            temp_min: -9.5,
            temp_max: 97.0,
            humidity_min: 10.0,
            humidity_max: 100.0,
        }
    }

    fn small_lstm() -> StoredModel {
        StoredModel::Lstm(ModelParams::new(&[5, 3], norm(), 11).unwrap())
    }

    #[test]
    fn full_round_trip_is_exact() {
        let m = small_lstm();
        let bytes = serialize(&m, Precision::Full);
        let (back, p) = deserialize(&bytes).unwrap();
        assert_eq!(p, Precision::Full);
        assert_eq!(back, m);
    }

    #[test]
    fn default_size() {
        let m = StoredModel::Lstm(ModelParams::new(&DEFAULT_HIDDEN, norm(), 0).unwrap());
        let header = 4 + 2 + 2 + 1 + 1 + 2 + 4 + 4 + 4 + 8 + 4 * 8;
        assert_eq!(serialize(&m, Precision::Full).len(), header + 223_464 * 8 + 48);
        assert_eq!(serialize(&m, Precision::Half).len(), header + 223_464 * 2 + 48);
        let h = peek_header(&serialize(&m, Precision::Half)).unwrap();
        assert_eq!(h.parameter_count, 223_464);
        assert_eq!(h.layers, vec![(39, 100), (100, 90), (90, 80), (80, 70)]);
    }

    #[test]
    fn gate_blocks_are_interleaved() {
        let mut m = ModelParams::new(&[2], norm(), 0).unwrap();
        for (i, v) in m.weights.layers[0].b.iter_mut().enumerate() {
            *v = i as f64;
        }
        let bytes = serialize(&StoredModel::Lstm(m), Precision::Full);
        // b_f follows W_f (2×39) and U_f (2×2) after the 40-byte header.
        let off = 40 + (2 * 39 + 2 * 2) * 8;
        let b0 = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let b1 = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
        assert_eq!((b0, b1), (0.0, 1.0));
    }

    #[test]
    fn half_round_trip_is_close() {
        let m = small_lstm();
        let (back, p) = deserialize(&serialize(&m, Precision::Half)).unwrap();
        assert_eq!(p, Precision::Half);
        let (StoredModel::Lstm(a), StoredModel::Lstm(b)) = (&m, &back) else {
            panic!("wrong type")
        };
        for (x, y) in a.weights.tensors().iter().zip(b.weights.tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() <= u.abs() * 1e-3 + 1e-7);
            }
        }
        assert_eq!(a.normalization, b.normalization);
    }

    #[test]
    fn linear_round_trip() {
        let m = StoredModel::Linear(LinRegModel {
            weights: (0..TARGET_HOURS * FLAT_INPUTS).map(|i| (i as f64).sin()).collect(),
            intercept: [0.25; TARGET_HOURS],
            ridge_lambda: 1e-6,
            normalization: norm(),
        });
        let (back, _) = deserialize(&serialize(&m, Precision::Full)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_files() {
        let bytes = serialize(&small_lstm(), Precision::Full);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(ModelFileError::BadMagic)));
        assert!(matches!(deserialize(b"PK"), Err(ModelFileError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            deserialize(&bad),
            Err(ModelFileError::VersionMismatch { what: "format", found: 9, .. })
        ));
        for cut in [10, 40, bytes.len() - 1] {
            assert!(matches!(deserialize(&bytes[..cut]), Err(ModelFileError::TruncatedFile { .. })));
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(deserialize(&long), Err(ModelFileError::TrailingBytes(1))));
    }
}
