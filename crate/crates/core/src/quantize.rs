//! Post-training quantization of tensor archives.
//!
//! Two schemes:
//!
//! * per-tensor affine INT8, `q = clamp(round(x / s) + z, -128, 127)` with a
//!   min-max calibrated scale `s` and zero point `z`;
//! * FP16, round-to-nearest-even with overflow clamped to ±65504.
//!
//! [`QuantPolicy`] assigns INT8 to fully connected (rank-2 or name-matched)
//! tensors and FP16 to everything else.
//!
//! The calibration range is widened to contain zero so the zero point always
//! fits in `[-128, 127]`, and the scale keeps only [`SCALE_MANTISSA_BITS`]
//! significant bits. With that, `s · 255` and `s · (q - z)` are exact in f64,
//! so quantizing a dequantized tensor reproduces its payload, scale and zero
//! point bit for bit.

use serde::Serialize;

use crate::archive::{to_f16, ArchiveTensor, Payload, TensorArchive};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SCALE_MANTISSA_BITS: u32 = 44;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AffineInt8,
    Fp16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    shape: Vec<usize>,
    payload: Payload,
}

impl QuantizedTensor {
    pub fn new(shape: Vec<usize>, payload: Payload) -> Result<Self> {
        if matches!(payload, Payload::Fp32(_)) {
            return Err(Error::invalid("fp32 payload is not quantized"));
        }
        let t = ArchiveTensor::new("", shape, payload)?;
        Ok(QuantizedTensor {
            shape: t.shape,
            payload: t.payload,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn into_payload(self) -> Payload {
        self.payload
    }

    pub fn scheme(&self) -> Scheme {
        match self.payload {
            Payload::Int8 { .. } => Scheme::AffineInt8,
            _ => Scheme::Fp16,
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match self.payload {
            Payload::Int8 { scale, .. } => Some(scale),
            _ => None,
        }
    }

    pub fn zero_point(&self) -> Option<i8> {
        match self.payload {
            Payload::Int8 { zero_point, .. } => Some(zero_point),
            _ => None,
        }
    }
}

fn trim_mantissa(x: f64) -> f64 {
    let drop = 52 - SCALE_MANTISSA_BITS;
    f64::from_bits(x.to_bits() & !((1u64 << drop) - 1))
}

/// Min-max calibrated `(scale, zero_point)` for `values`.
pub fn affine_params(values: &[f64]) -> Result<(f64, i8)> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("quantization input"));
    }
    let lo = values.iter().copied().fold(0.0f64, f64::min);
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    let scale = trim_mantissa((hi - lo) / 255.0);
    if !scale.is_normal() {
        return Ok((1.0, 0));
    }
    let zp = (-128.0 - lo / scale).round_ties_even().clamp(-128.0, 127.0);
    Ok((scale, zp as i8))
}

fn quantize_value(x: f64, scale: f64, zero_point: i8) -> i8 {
    ((x / scale).round_ties_even() + zero_point as f64).clamp(-128.0, 127.0) as i8
}

pub fn quantize_affine(t: &Tensor) -> Result<QuantizedTensor> {
    let (scale, zero_point) = affine_params(t.data())?;
    let values = t.data().iter().map(|&x| quantize_value(x, scale, zero_point)).collect();
    QuantizedTensor::new(
        t.shape().to_vec(),
        Payload::Int8 {
            values,
            scale,
            zero_point,
        },
    )
}

pub fn quantize_fp16(t: &Tensor) -> Result<QuantizedTensor> {
    if !t.is_finite() {
        return Err(Error::NonFinite("quantization input"));
    }
    QuantizedTensor::new(t.shape().to_vec(), Payload::Fp16(t.data().iter().map(|&x| to_f16(x)).collect()))
}

pub fn quantize(t: &Tensor, scheme: Scheme) -> Result<QuantizedTensor> {
    match scheme {
        Scheme::AffineInt8 => quantize_affine(t),
        Scheme::Fp16 => quantize_fp16(t),
    }
}

pub fn dequantize(q: &QuantizedTensor) -> Result<Tensor> {
    Tensor::new(q.shape.clone(), q.payload.to_f64())
}

/// Which tensors count as fully connected.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantPolicy {
    /// Rank-2 tensors get INT8.
    pub rank2_is_fc: bool,
    /// Tensors whose name contains any of these also get INT8.
    pub fc_name_patterns: Vec<String>,
}

impl Default for QuantPolicy {
    fn default() -> Self {
        QuantPolicy {
            rank2_is_fc: true,
            fc_name_patterns: Vec::new(),
        }
    }
}

impl QuantPolicy {
    /// Parses a policy name; only `fc-int8-rest-fp16` is defined.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "fc-int8-rest-fp16" => Ok(QuantPolicy::default()),
            other => Err(Error::invalid(format!("unknown quantization policy {other}"))),
        }
    }

    pub fn scheme_for(&self, name: &str, shape: &[usize]) -> Scheme {
        let fc = (self.rank2_is_fc && shape.len() == 2) || self.fc_name_patterns.iter().any(|p| name.contains(p.as_str()));
        if fc {
            Scheme::AffineInt8
        } else {
            Scheme::Fp16
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorQuantReport {
    pub name: String,
    pub dtype: &'static str,
    pub shape: Vec<usize>,
    pub elements: u64,
    pub fp32_bytes: u64,
    pub payload_bytes: u64,
    pub metadata_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantReport {
    pub tensors: Vec<TensorQuantReport>,
    pub fp32_bytes: u64,
    pub payload_bytes: u64,
    pub metadata_bytes: u64,
    /// fp32 bytes / quantized payload bytes.
    pub payload_ratio: f64,
    /// fp32 bytes / (payload + scale and zero-point bytes).
    pub total_ratio: f64,
    /// Size of the same archive stored entirely as fp32.
    pub fp32_file_bytes: u64,
    /// Size of the quantized archive file.
    pub file_bytes: u64,
    pub file_ratio: f64,
}

/// Quantizes every fp32 tensor per `policy`; already quantized tensors pass
/// through unchanged.
pub fn archive_quantize(archive: &TensorArchive, policy: &QuantPolicy) -> Result<(TensorArchive, QuantReport)> {
    if archive.is_empty() {
        return Err(Error::invalid("tensor archive is empty"));
    }
    let mut out = Vec::with_capacity(archive.len());
    let mut rows = Vec::with_capacity(archive.len());
    let mut fp32_file_bytes = 12;
    for t in archive.tensors() {
        let quantized = match &t.payload {
            Payload::Fp32(_) => {
                let q = quantize(&t.to_tensor()?, policy.scheme_for(&t.name, &t.shape))?;
                ArchiveTensor::new(t.name.clone(), t.shape.clone(), q.into_payload())?
            }
            _ => t.clone(),
        };
        let elements = t.payload.len() as u64;
        fp32_file_bytes += t.encoded_len() - t.payload.payload_bytes() - t.payload.metadata_bytes() + 4 * elements;
        rows.push(TensorQuantReport {
            name: t.name.clone(),
            dtype: quantized.payload.dtype_name(),
            shape: t.shape.clone(),
            elements,
            fp32_bytes: 4 * elements,
            payload_bytes: quantized.payload.payload_bytes(),
            metadata_bytes: quantized.payload.metadata_bytes(),
        });
        out.push(quantized);
    }
    let out = TensorArchive::new(out)?;
    let fp32_bytes: u64 = rows.iter().map(|r| r.fp32_bytes).sum();
    let payload_bytes: u64 = rows.iter().map(|r| r.payload_bytes).sum();
    let metadata_bytes: u64 = rows.iter().map(|r| r.metadata_bytes).sum();
    let file_bytes = out.encoded_len();
    let report = QuantReport {
        tensors: rows,
        fp32_bytes,
        payload_bytes,
        metadata_bytes,
        payload_ratio: fp32_bytes as f64 / payload_bytes as f64,
        total_ratio: fp32_bytes as f64 / (payload_bytes + metadata_bytes) as f64,
        fp32_file_bytes,
        file_bytes,
        file_ratio: fp32_file_bytes as f64 / file_bytes as f64,
    };
    Ok((out, report))
}
