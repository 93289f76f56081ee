//! `LVTA` named tensor archives.
//!
//! Header: `b"LVTA"`, u32 version = 1, u32 tensor count. Each record:
//!
//! | field          | type                                   |
//! |----------------|----------------------------------------|
//! | name           | u32 len + UTF-8                        |
//! | dtype          | u8: 0 fp32, 1 fp16, 2 int8 (affine)    |
//! | order          | u8                                     |
//! | extents        | u32 × order                            |
//! | scale, zero pt | f64, i8 (int8 only)                    |
//! | payload length | u64, bytes                             |
//! | payload        | little-endian elements                 |
//! | checksum       | u32 CRC32 of the record up to here     |

use std::collections::HashSet;
use std::path::Path;

use half::f16;

use crate::archive::{checked_count, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LVTA";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 12;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Fp32(Vec<f32>),
    Fp16(Vec<f16>),
    Int8 { values: Vec<i8>, scale: f64, zero_point: i8 },
}

impl Payload {
    pub fn dtype_code(&self) -> u8 {
        match self {
            Payload::Fp32(_) => 0,
            Payload::Fp16(_) => 1,
            Payload::Int8 { .. } => 2,
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            Payload::Fp32(_) => "fp32",
            Payload::Fp16(_) => "fp16",
            Payload::Int8 { .. } => "int8",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Fp32(v) => v.len(),
            Payload::Fp16(v) => v.len(),
            Payload::Int8 { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element_size(&self) -> u64 {
        match self {
            Payload::Fp32(_) => 4,
            Payload::Fp16(_) => 2,
            Payload::Int8 { .. } => 1,
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        self.element_size() * self.len() as u64
    }

    /// Quantization metadata stored alongside the payload.
    pub fn metadata_bytes(&self) -> u64 {
        match self {
            Payload::Int8 { .. } => 9,
            _ => 0,
        }
    }

    /// Values widened to f64; int8 payloads are dequantized.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Payload::Fp32(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::Fp16(v) => v.iter().map(|x| x.to_f64()).collect(),
            Payload::Int8 {
                values,
                scale,
                zero_point,
            } => values
                .iter()
                .map(|&q| scale * (q as f64 - *zero_point as f64))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl ArchiveTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, payload: Payload) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() || shape.contains(&0) || u8::try_from(shape.len()).is_err() {
            return Err(Error::shape(format!("invalid shape {shape:?} for tensor {name}")));
        }
        let n: usize = shape.iter().product();
        if n != payload.len() {
            return Err(Error::shape(format!(
                "tensor {name} has shape {shape:?} but {} values",
                payload.len()
            )));
        }
        if let Payload::Int8 { scale, .. } = payload {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::invalid(format!("tensor {name} has invalid scale {scale}")));
            }
        }
        Ok(ArchiveTensor { name, shape, payload })
    }

    /// fp32 tensor from f64 values.
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Result<Self> {
        let values = t.data().iter().map(|&x| x as f32).collect();
        ArchiveTensor::new(name, t.shape().to_vec(), Payload::Fp32(values))
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.payload.to_f64())
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn encoded_len(&self) -> u64 {
        4 + self.name.len() as u64
            + 2
            + 4 * self.order() as u64
            + self.payload.metadata_bytes()
            + 8
            + self.payload.payload_bytes()
            + 4
    }

    fn encode(&self, w: &mut ByteWriter) -> Result<()> {
        let start = w.buf.len();
        w.str(&self.name)?;
        w.u8(self.payload.dtype_code());
        w.u8(self.order() as u8);
        for &d in &self.shape {
            w.len_u32(d)?;
        }
        if let Payload::Int8 { scale, zero_point, .. } = self.payload {
            w.f64(scale);
            w.i8(zero_point);
        }
        w.u64(self.payload.payload_bytes());
        match &self.payload {
            Payload::Fp32(v) => v.iter().for_each(|&x| w.f32(x)),
            Payload::Fp16(v) => v.iter().for_each(|&x| w.f16(x)),
            Payload::Int8 { values, .. } => values.iter().for_each(|&x| w.i8(x)),
        }
        let crc = crc32fast::hash(&w.buf[start..]);
        w.u32(crc);
        Ok(())
    }

    fn decode(r: &mut ByteReader, bytes: &[u8]) -> Result<Self> {
        let start = r.pos();
        let name = r.str("tensor name")?;
        let dtype = r.u8("tensor dtype")?;
        if dtype > 2 {
            return Err(Error::UnknownDtype(dtype));
        }
        let order = r.u8("tensor order")? as usize;
        if order == 0 {
            return Err(Error::Corrupt(format!("tensor {name} has order zero")));
        }
        let shape = r.extents(order, "tensor extents")?;
        let meta = if dtype == 2 {
            Some((r.f64("quantization scale")?, r.i8("zero point")?))
        } else {
            None
        };
        let declared = r.u64("payload length")?;
        let n = checked_count(&shape, r.remaining())?;
        let elem = [4u64, 2, 1][dtype as usize];
        let expected = n as u64 * elem;
        if declared != expected {
            return Err(Error::LengthMismatch {
                declared,
                actual: expected,
            });
        }
        let raw = r.take(expected as usize, "tensor payload")?;
        let end = r.pos();
        let stored = r.u32("tensor checksum")?;
        if crc32fast::hash(&bytes[start..end]) != stored {
            return Err(Error::Integrity(format!("checksum mismatch in tensor {name}")));
        }
        let payload = match meta {
            None if dtype == 0 => Payload::Fp32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect(),
            ),
            None => Payload::Fp16(
                raw.chunks_exact(2)
                    .map(|c| f16::from_le_bytes(c.try_into().expect("chunk of 2")))
                    .collect(),
            ),
            Some((scale, zero_point)) => Payload::Int8 {
                values: raw.iter().map(|&b| b as i8).collect(),
                scale,
                zero_point,
            },
        };
        ArchiveTensor::new(name, shape, payload).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    tensors: Vec<ArchiveTensor>,
}

impl TensorArchive {
    pub fn new(tensors: Vec<ArchiveTensor>) -> Result<Self> {
        let mut names = HashSet::new();
        for t in &tensors {
            if !names.insert(t.name.as_str()) {
                return Err(Error::invalid(format!("duplicate tensor name {}", t.name)));
            }
        }
        Ok(TensorArchive { tensors })
    }

    pub fn tensors(&self) -> &[ArchiveTensor] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<ArchiveTensor> {
        self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn encoded_len(&self) -> u64 {
        HEADER_LEN + self.tensors.iter().map(ArchiveTensor::encoded_len).sum::<u64>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.len_u32(self.tensors.len())?;
        for t in &self.tensors {
            t.encode(&mut w)?;
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(r.remaining()));
        for _ in 0..count {
            tensors.push(ArchiveTensor::decode(&mut r, bytes)?);
        }
        r.finish()?;
        TensorArchive::new(tensors).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

pub fn write_tensor_archive(path: impl AsRef<Path>, a: &TensorArchive) -> Result<()> {
    write_file(path.as_ref(), &a.to_bytes()?)
}

pub fn read_tensor_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    TensorArchive::from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TensorArchive {
        TensorArchive::new(vec![
            ArchiveTensor::new("fc.weight", vec![2, 3], Payload::Fp32(vec![0.5, -1.0, 2.0, 3.5, 0.0, -0.25])).unwrap(),
            ArchiveTensor::new(
                "conv.weight",
                vec![2, 1, 2],
                Payload::Fp16([1.0, -2.5, 65504.0, 1e-3].iter().map(|&x| f16::from_f64(x)).collect()),
            )
            .unwrap(),
            ArchiveTensor::new(
                "proj",
                vec![3],
                Payload::Int8 {
                    values: vec![-128, 0, 127],
                    scale: 0.0123456789,
                    zero_point: -7,
                },
            )
            .unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn all_dtypes_round_trip_exactly() {
        let a = sample();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(bytes.len() as u64, a.encoded_len());
        let back = TensorArchive::from_bytes(&bytes).unwrap();
        assert_eq!(back, a);
        match &back.get("conv.weight").unwrap().payload {
            Payload::Fp16(v) => {
                let orig = match &a.get("conv.weight").unwrap().payload {
                    Payload::Fp16(o) => o.clone(),
                    _ => unreachable!(),
                };
                assert!(v.iter().zip(&orig).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            _ => panic!("dtype changed"),
        }
        match back.get("proj").unwrap().payload {
            Payload::Int8 { scale, zero_point, .. } => {
                assert_eq!(scale.to_bits(), 0.0123456789f64.to_bits());
                assert_eq!(zero_point, -7);
            }
            _ => panic!("dtype changed"),
        }
    }

    #[test]
    fn empty_archive_round_trips() {
        let a = TensorArchive::default();
        assert_eq!(TensorArchive::from_bytes(&a.to_bytes().unwrap()).unwrap(), a);
    }

    #[test]
    fn typed_errors() {
        let bytes = sample().to_bytes().unwrap();
        // dtype byte of the first record: 12 header + 4 + len("fc.weight")
        let dtype_at = 12 + 4 + 9;
        let mut bad = bytes.clone();
        bad[dtype_at] = 9;
        assert!(matches!(TensorArchive::from_bytes(&bad), Err(Error::UnknownDtype(9))));

        let len_at = dtype_at + 2 + 8;
        let mut bad = bytes.clone();
        bad[len_at] += 4;
        assert!(matches!(TensorArchive::from_bytes(&bad), Err(Error::LengthMismatch { .. })));

        let mut bad = bytes.clone();
        bad[len_at + 8] ^= 1;
        assert!(matches!(TensorArchive::from_bytes(&bad), Err(Error::Integrity(_))));

        assert!(matches!(
            TensorArchive::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn rejects_duplicates_and_bad_metadata() {
        let t = ArchiveTensor::new("a", vec![1], Payload::Fp32(vec![1.0])).unwrap();
        assert!(TensorArchive::new(vec![t.clone(), t]).is_err());
        assert!(ArchiveTensor::new("a", vec![2], Payload::Fp32(vec![1.0])).is_err());
        assert!(ArchiveTensor::new(
            "q",
            vec![1],
            Payload::Int8 {
                values: vec![0],
                scale: 0.0,
                zero_point: 0
            }
        )
        .is_err());
    }
}
