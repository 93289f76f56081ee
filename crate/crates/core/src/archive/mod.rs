//! Little-endian binary containers.
//!
//! Three formats share the same conventions: a 4-byte magic, a `u32`
//! version, fixed-width little-endian integers, IEEE floats, and strings as
//! `u32` length + UTF-8 bytes. Nothing is padded, so every file size is a
//! closed-form function of its contents.
//!
//! * `LVDD`: latent datasets ([`latent`])
//! * `LVDA`: distilled archives ([`distilled`])
//! * `LVTA`: named tensor archives, optionally quantized ([`tensor_archive`])

use std::fs;
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};

pub mod distilled;
pub mod latent;
pub mod tensor_archive;

pub use distilled::{
    read_distilled, write_distilled, Accounting, ArchiveConfig, ClassSection, DistilledArchive, SectionData,
};
pub use latent::{read_latent_dataset, write_latent_dataset, LatentDataset, LatentItem};
pub use tensor_archive::{read_tensor_archive, write_tensor_archive, ArchiveTensor, Payload, TensorArchive};

/// 1 MB = 2²⁰ bytes throughout.
pub const MB: u64 = 1 << 20;

/// Converts a megabyte count to bytes, rounding to the nearest byte.
pub fn mb_to_bytes(mb: f64) -> u64 {
    (mb * MB as f64).round() as u64
}

pub fn bytes_to_mb(bytes: u64) -> f64 {
    bytes as f64 / MB as f64
}

/// Storage precision of floating-point payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Fp32,
    Fp16,
}

impl Precision {
    pub fn element_size(self) -> u64 {
        match self {
            Precision::Fp32 => 4,
            Precision::Fp16 => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Precision::Fp32 => 0,
            Precision::Fp16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Precision::Fp32),
            1 => Ok(Precision::Fp16),
            c => Err(Error::UnknownDtype(c)),
        }
    }

    /// The value a write/read cycle at this precision yields.
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::Fp32 => x as f32 as f64,
            Precision::Fp16 => to_f16(x).to_f64(),
        }
    }
}

/// Round-to-nearest-even conversion with overflow clamped to ±65504.
pub fn to_f16(x: f64) -> f16 {
    let max = f16::MAX.to_f64();
    f16::from_f64(x.clamp(-max, max))
}

/// Fixed per-section byte costs, shared by the storage arithmetic and the
/// serializer.
pub mod layout {
    /// kind, precision, order, reserved
    pub const SECTION_PREFIX: u64 = 4;
    pub const CHECKSUM: u64 = 4;

    /// prefix + dims + ranks + checksum
    pub fn hosvd_section_overhead(order: usize) -> u64 {
        SECTION_PREFIX + 8 * order as u64 + CHECKSUM
    }

    /// prefix + dims + rank + checksum
    pub fn svd_section_overhead(order: usize) -> u64 {
        SECTION_PREFIX + 4 * order as u64 + 4 + CHECKSUM
    }

    /// prefix + dims + checksum
    pub fn raw_section_overhead(order: usize) -> u64 {
        SECTION_PREFIX + 4 * order as u64 + CHECKSUM
    }
}

#[derive(Default)]
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f16(&mut self, v: f16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn len_u32(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::invalid(format!("length {n} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len())?;
        self.bytes(s.as_bytes());
        Ok(())
    }

    /// Writes `x` at `precision`, failing if it does not stay finite.
    pub fn float(&mut self, x: f64, precision: Precision) -> Result<()> {
        match precision {
            Precision::Fp32 => {
                let v = x as f32;
                if !v.is_finite() {
                    return Err(Error::NonFinite("fp32 payload"));
                }
                self.f32(v);
            }
            Precision::Fp16 => {
                if !x.is_finite() {
                    return Err(Error::NonFinite("fp16 payload"));
                }
                self.f16(to_f16(x));
            }
        }
        Ok(())
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn i8(&mut self, what: &'static str) -> Result<i8> {
        Ok(self.u8(what)? as i8)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    pub fn f32(&mut self, what: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }

    pub fn f16(&mut self, what: &'static str) -> Result<f16> {
        Ok(f16::from_le_bytes(self.array(what)?))
    }

    pub fn str(&mut self, what: &'static str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Corrupt(format!("{what} is not valid UTF-8")))
    }

    pub fn float(&mut self, precision: Precision, what: &'static str) -> Result<f64> {
        Ok(match precision {
            Precision::Fp32 => self.f32(what)? as f64,
            Precision::Fp16 => self.f16(what)?.to_f64(),
        })
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.array("magic")?;
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("version")?;
        if found != expected {
            return Err(Error::VersionMismatch { expected, found });
        }
        Ok(())
    }

    /// Reads `order` extents, each at least 1.
    pub fn extents(&mut self, order: usize, what: &'static str) -> Result<Vec<usize>> {
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            let d = self.u32(what)? as usize;
            if d == 0 {
                return Err(Error::Corrupt(format!("{what} has a zero extent")));
            }
            shape.push(d);
        }
        Ok(shape)
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Element count of `shape`, failing on overflow or when it exceeds `limit`.
pub(crate) fn checked_count(shape: &[usize], limit: usize) -> Result<usize> {
    let mut n: usize = 1;
    for &d in shape {
        n = n
            .checked_mul(d)
            .filter(|&n| n <= limit)
            .ok_or_else(|| Error::Corrupt("declared shape exceeds the file size".into()))?;
    }
    Ok(n)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(fs::write(path, bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_rounding() {
        assert_eq!(Precision::Fp32.round(0.1), 0.1f32 as f64);
        assert_eq!(Precision::Fp16.round(1.0 + 1.0 / 4096.0), 1.0); // ties to even
        assert_eq!(Precision::Fp16.round(1e6), 65504.0);
        assert_eq!(Precision::Fp16.round(-1e6), -65504.0);
        assert_eq!(Precision::from_code(7).unwrap_err().to_string(), "unknown dtype code 7");
    }

    #[test]
    fn reader_reports_truncation_and_trailing_bytes() {
        let mut w = ByteWriter::new();
        w.u32(7);
        w.str("abc").unwrap();
        let mut r = ByteReader::new(&w.buf);
        assert_eq!(r.u32("a").unwrap(), 7);
        assert_eq!(r.str("b").unwrap(), "abc");
        r.finish().unwrap();
        assert!(matches!(r.u8("c"), Err(Error::Truncated("c"))));

        let mut r = ByteReader::new(&w.buf[..5]);
        r.u32("a").unwrap();
        assert!(matches!(r.str("b"), Err(Error::Truncated("b"))));
    }

    #[test]
    fn megabytes() {
        assert_eq!(mb_to_bytes(1.0), 1_048_576);
        assert_eq!(mb_to_bytes(80.0), 83_886_080);
        assert_eq!(bytes_to_mb(MB * 115), 115.0);
    }
}
