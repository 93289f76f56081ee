//! `LVDA` distilled archives.
//!
//! Layout, all little-endian:
//!
//! | block      | fields                                                                 |
//! |------------|------------------------------------------------------------------------|
//! | header     | `b"LVDA"`, u32 version = 1                                             |
//! | config     | f64 ratio, u8 method, u8 σ policy, f64 σ, u64 seed, u8 precision, u8 flags |
//! | accounting | u64 budget, u64 model bytes, u64 total bytes, u8 within budget         |
//! | shape      | u8 order, u32 × order latent extents, u32 m, u32 class count           |
//! | manifest   | per class: u32 class, u32 count, u8 kind, u64 section length, f64 log-prob, ids |
//! | checksum   | u32 CRC32 of everything above                                          |
//! | sections   | one per class, in manifest order                                       |
//!
//! Every section starts with u8 kind (0 raw, 1 HOSVD, 2 flattened SVD), u8
//! precision, u8 order, u8 reserved and ends with a u32 CRC32 of its own
//! bytes. Section bodies:
//!
//! * HOSVD: u32 × order extents, u32 × order ranks, core, then each factor
//!   (`d_i × r_i`, row-major).
//! * SVD: u32 × order extents, u32 rank, `u` (`m × r`), singular values, `v` (`n × r`).
//! * raw: u32 × order extents, values.
//!
//! `total bytes` equals the file size. On read the accounting is recomputed
//! from the parsed contents and must match the stored block.

use std::path::Path;

use crate::archive::{checked_count, read_file, write_file, ByteReader, ByteWriter, Precision};
use crate::dpp::{SelectionMethod, SigmaPolicy};
use crate::error::{Error, Result};
use crate::hosvd::{hosvd_storage_bytes, raw_storage_bytes, HosvdFactorization, SvdFactorization};
use crate::tensor::{Matrix, Tensor};

pub const MAGIC: [u8; 4] = *b"LVDA";
pub const VERSION: u32 = 1;

const KIND_RAW: u8 = 0;
const KIND_HOSVD: u8 = 1;
const KIND_SVD: u8 = 2;

const FLAG_TRUNCATE_INSTANCE_MODE: u8 = 1;
const FLAG_STANDARDIZE: u8 = 2;
const FLAG_COMPRESS: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveConfig {
    pub ratio: f64,
    pub method: SelectionMethod,
    pub sigma: SigmaPolicy,
    pub seed: u64,
    pub precision: Precision,
    pub truncate_instance_mode: bool,
    pub standardize: bool,
    pub compress: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Accounting {
    pub budget_bytes: u64,
    pub model_bytes: u64,
    pub total_bytes: u64,
    pub within_budget: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SectionData {
    Hosvd(HosvdFactorization),
    Svd(SvdFactorization),
    Raw(Tensor),
}

impl SectionData {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SectionData::Hosvd(_) => "hosvd",
            SectionData::Svd(_) => "svd",
            SectionData::Raw(_) => "raw",
        }
    }

    fn kind(&self) -> u8 {
        match self {
            SectionData::Hosvd(_) => KIND_HOSVD,
            SectionData::Svd(_) => KIND_SVD,
            SectionData::Raw(_) => KIND_RAW,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            SectionData::Hosvd(f) => f.original_shape(),
            SectionData::Svd(f) => f.original_shape(),
            SectionData::Raw(t) => t.shape(),
        }
    }

    pub fn storage_bytes(&self, precision: Precision) -> u64 {
        match self {
            SectionData::Hosvd(f) => f.storage_bytes(precision),
            SectionData::Svd(f) => f.storage_bytes(precision),
            SectionData::Raw(t) => raw_storage_bytes(t.shape(), precision),
        }
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        match self {
            SectionData::Hosvd(f) => f.reconstruct(),
            SectionData::Svd(f) => f.reconstruct(),
            SectionData::Raw(t) => Ok(t.clone()),
        }
    }

    fn encode(&self, precision: Precision, w: &mut ByteWriter) -> Result<()> {
        let start = w.buf.len();
        let shape = self.shape();
        w.u8(self.kind());
        w.u8(precision.code());
        w.u8(u8::try_from(shape.len()).map_err(|_| Error::invalid("tensor order above 255"))?);
        w.u8(0);
        for &d in shape {
            w.len_u32(d)?;
        }
        let floats = |xs: &[f64], w: &mut ByteWriter| xs.iter().try_for_each(|&x| w.float(x, precision));
        match self {
            SectionData::Hosvd(f) => {
                for &r in f.ranks() {
                    w.len_u32(r)?;
                }
                floats(f.core().data(), w)?;
                for u in f.factors() {
                    floats(u.data(), w)?;
                }
            }
            SectionData::Svd(f) => {
                w.len_u32(f.rank())?;
                floats(f.u().data(), w)?;
                floats(f.singular_values(), w)?;
                floats(f.v().data(), w)?;
            }
            SectionData::Raw(t) => floats(t.data(), w)?,
        }
        let crc = crc32fast::hash(&w.buf[start..]);
        w.u32(crc);
        Ok(())
    }

    fn decode(bytes: &[u8], precision: Precision, ratio: f64) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated("section"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Integrity("section checksum mismatch".into()));
        }
        let mut r = ByteReader::new(body);
        let kind = r.u8("section kind")?;
        let p = Precision::from_code(r.u8("section precision")?)?;
        if p != precision {
            return Err(Error::Corrupt("section precision differs from the archive".into()));
        }
        let order = r.u8("section order")? as usize;
        r.u8("section reserved")?;
        if order == 0 {
            return Err(Error::Corrupt("section order is zero".into()));
        }
        let shape = r.extents(order, "section extents")?;
        let limit = r.remaining() / precision.element_size() as usize;
        let floats = |n: usize, r: &mut ByteReader| -> Result<Vec<f64>> {
            (0..n).map(|_| r.float(precision, "section payload")).collect()
        };
        let data = match kind {
            KIND_HOSVD => {
                let ranks = r.extents(order, "section ranks")?;
                let core_len = checked_count(&ranks, limit)?;
                let core = Tensor::new(ranks.clone(), floats(core_len, &mut r)?)?;
                let mut factors = Vec::with_capacity(order);
                for (&d, &k) in shape.iter().zip(&ranks) {
                    let n = checked_count(&[d, k], limit)?;
                    factors.push(Matrix::from_vec(d, k, floats(n, &mut r)?)?);
                }
                SectionData::Hosvd(HosvdFactorization::new(core, factors, shape, ratio)?)
            }
            KIND_SVD => {
                let rank = r.u32("section rank")? as usize;
                let m = shape[0];
                let n = checked_count(&shape[1..], limit)?;
                if rank == 0 || rank > m.min(n) {
                    return Err(Error::Corrupt(format!("SVD rank {rank} out of range")));
                }
                let u = Matrix::from_vec(m, rank, floats(checked_count(&[m, rank], limit)?, &mut r)?)?;
                let s = floats(rank, &mut r)?;
                let v = Matrix::from_vec(n, rank, floats(checked_count(&[n, rank], limit)?, &mut r)?)?;
                SectionData::Svd(SvdFactorization::new(u, s, v, shape)?)
            }
            KIND_RAW => {
                let n = checked_count(&shape, limit)?;
                SectionData::Raw(Tensor::new(shape, floats(n, &mut r)?)?)
            }
            k => return Err(Error::Corrupt(format!("unknown section kind {k}"))),
        };
        r.finish()?;
        Ok(data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSection {
    pub class_id: u32,
    /// Ids of the stacked instances, in stacking order.
    pub item_ids: Vec<String>,
    pub log_prob: Option<f64>,
    pub data: SectionData,
}

impl ClassSection {
    pub fn count(&self) -> usize {
        self.item_ids.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistilledArchive {
    config: ArchiveConfig,
    latent_shape: Vec<usize>,
    instances_per_class: usize,
    budget_bytes: u64,
    model_bytes: u64,
    classes: Vec<ClassSection>,
}

impl DistilledArchive {
    pub fn new(
        config: ArchiveConfig,
        latent_shape: Vec<usize>,
        instances_per_class: usize,
        budget_bytes: u64,
        model_bytes: u64,
        classes: Vec<ClassSection>,
    ) -> Result<Self> {
        if latent_shape.is_empty() || latent_shape.contains(&0) {
            return Err(Error::shape(format!("invalid latent shape {latent_shape:?}")));
        }
        for c in &classes {
            let shape = c.data.shape();
            if shape.len() != latent_shape.len() + 1 || shape[1..] != latent_shape[..] || shape[0] != c.count() {
                return Err(Error::shape(format!(
                    "class {} section has shape {shape:?} for {} items of shape {latent_shape:?}",
                    c.class_id,
                    c.count()
                )));
            }
        }
        Ok(DistilledArchive {
            config,
            latent_shape,
            instances_per_class,
            budget_bytes,
            model_bytes,
            classes,
        })
    }

    pub fn config(&self) -> &ArchiveConfig {
        &self.config
    }

    pub fn latent_shape(&self) -> &[usize] {
        &self.latent_shape
    }

    pub fn instances_per_class(&self) -> usize {
        self.instances_per_class
    }

    pub fn classes(&self) -> &[ClassSection] {
        &self.classes
    }

    pub fn section_bytes(&self) -> Vec<u64> {
        self.classes
            .iter()
            .map(|c| c.data.storage_bytes(self.config.precision))
            .collect()
    }

    /// Bytes before the first section, including the header checksum.
    pub fn header_len(&self) -> u64 {
        header_len(self.latent_shape.len(), self.classes.iter().map(|c| &c.item_ids[..]))
    }

    pub fn total_bytes(&self) -> u64 {
        self.header_len() + self.section_bytes().iter().sum::<u64>()
    }

    pub fn accounting(&self) -> Accounting {
        let total_bytes = self.total_bytes();
        Accounting {
            budget_bytes: self.budget_bytes,
            model_bytes: self.model_bytes,
            total_bytes,
            within_budget: total_bytes + self.model_bytes <= self.budget_bytes,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = &self.config;
        let acc = self.accounting();
        let mut w = ByteWriter::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.f64(cfg.ratio);
        w.u8(cfg.method.code());
        match cfg.sigma {
            SigmaPolicy::Median => {
                w.u8(0);
                w.f64(f64::NAN);
            }
            SigmaPolicy::Fixed(s) => {
                w.u8(1);
                w.f64(s);
            }
        }
        w.u64(cfg.seed);
        w.u8(cfg.precision.code());
        let mut flags = 0;
        if cfg.truncate_instance_mode {
            flags |= FLAG_TRUNCATE_INSTANCE_MODE;
        }
        if cfg.standardize {
            flags |= FLAG_STANDARDIZE;
        }
        if cfg.compress {
            flags |= FLAG_COMPRESS;
        }
        w.u8(flags);
        w.u64(acc.budget_bytes);
        w.u64(acc.model_bytes);
        w.u64(acc.total_bytes);
        w.u8(acc.within_budget as u8);
        w.u8(u8::try_from(self.latent_shape.len()).map_err(|_| Error::invalid("tensor order above 255"))?);
        for &d in &self.latent_shape {
            w.len_u32(d)?;
        }
        w.len_u32(self.instances_per_class)?;
        w.len_u32(self.classes.len())?;
        for (c, len) in self.classes.iter().zip(self.section_bytes()) {
            w.u32(c.class_id);
            w.len_u32(c.count())?;
            w.u8(c.data.kind());
            w.u64(len);
            w.f64(c.log_prob.unwrap_or(f64::NAN));
            for id in &c.item_ids {
                w.str(id)?;
            }
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        for c in &self.classes {
            c.data.encode(cfg.precision, &mut w)?;
        }
        debug_assert_eq!(w.buf.len() as u64, acc.total_bytes);
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let ratio = r.f64("ratio")?;
        let method = SelectionMethod::from_code(r.u8("method")?)
            .ok_or_else(|| Error::Corrupt("unknown selection method".into()))?;
        let sigma_code = r.u8("sigma policy")?;
        let sigma_value = r.f64("sigma")?;
        let sigma = match sigma_code {
            0 => SigmaPolicy::Median,
            1 => SigmaPolicy::Fixed(sigma_value),
            _ => return Err(Error::Corrupt("unknown sigma policy".into())),
        };
        let seed = r.u64("seed")?;
        let precision = Precision::from_code(r.u8("precision")?)?;
        let flags = r.u8("flags")?;
        let stored = Accounting {
            budget_bytes: r.u64("budget")?,
            model_bytes: r.u64("model bytes")?,
            total_bytes: r.u64("total bytes")?,
            within_budget: r.u8("within budget")? != 0,
        };
        let order = r.u8("latent order")? as usize;
        if order == 0 {
            return Err(Error::Corrupt("latent order is zero".into()));
        }
        let latent_shape = r.extents(order, "latent extents")?;
        let m = r.u32("instances per class")? as usize;
        let class_count = r.u32("class count")? as usize;
        let mut manifest = Vec::with_capacity(class_count.min(r.remaining()));
        for _ in 0..class_count {
            let class_id = r.u32("class id")?;
            let count = r.u32("item count")? as usize;
            let kind = r.u8("section kind")?;
            let len = r.u64("section length")?;
            let lp = r.f64("log probability")?;
            let mut ids = Vec::with_capacity(count.min(r.remaining()));
            for _ in 0..count {
                ids.push(r.str("item id")?);
            }
            manifest.push((class_id, kind, len, (!lp.is_nan()).then_some(lp), ids));
        }
        let header_end = r.pos();
        let crc = r.u32("header checksum")?;
        if crc32fast::hash(&bytes[..header_end]) != crc {
            return Err(Error::Integrity("header checksum mismatch".into()));
        }
        if stored.total_bytes != bytes.len() as u64 {
            return Err(Error::Integrity(format!(
                "header declares {} bytes but the file has {}",
                stored.total_bytes,
                bytes.len()
            )));
        }
        let config = ArchiveConfig {
            ratio,
            method,
            sigma,
            seed,
            precision,
            truncate_instance_mode: flags & FLAG_TRUNCATE_INSTANCE_MODE != 0,
            standardize: flags & FLAG_STANDARDIZE != 0,
            compress: flags & FLAG_COMPRESS != 0,
        };
        let mut classes = Vec::with_capacity(manifest.len());
        for (class_id, kind, len, log_prob, item_ids) in manifest {
            let len = usize::try_from(len).map_err(|_| Error::Corrupt("section length overflows".into()))?;
            let body = r.take(len, "section")?;
            let data = SectionData::decode(body, precision, ratio).map_err(|e| {
                if e.is_integrity() {
                    e
                } else {
                    Error::Corrupt(format!("class {class_id}: {e}"))
                }
            })?;
            if data.kind() != kind {
                return Err(Error::Corrupt(format!("class {class_id} section kind differs from manifest")));
            }
            classes.push(ClassSection {
                class_id,
                item_ids,
                log_prob,
                data,
            });
        }
        r.finish()?;
        let archive = DistilledArchive::new(
            config,
            latent_shape,
            m,
            stored.budget_bytes,
            stored.model_bytes,
            classes,
        )
        .map_err(|e| Error::Corrupt(e.to_string()))?;
        let recomputed = archive.accounting();
        if recomputed != stored {
            return Err(Error::Integrity(format!(
                "stored accounting {stored:?} does not match recomputed {recomputed:?}"
            )));
        }
        Ok(archive)
    }
}

/// Header length for the given latent order and per-class id lists.
pub fn header_len<'a>(order: usize, classes: impl IntoIterator<Item = &'a [String]>) -> u64 {
    let fixed = 8 + 28 + 25 + 1 + 4 * order as u64 + 8 + 4;
    let manifest: u64 = classes
        .into_iter()
        .map(|ids| 25 + ids.iter().map(|s| 4 + s.len() as u64).sum::<u64>())
        .sum();
    fixed + manifest
}

/// Upper bound on a section of `count` stacked instances, for budget search.
pub fn section_bytes_for(
    latent_shape: &[usize],
    count: usize,
    ratio: f64,
    truncate_instance_mode: bool,
    compress: bool,
    precision: Precision,
) -> Result<u64> {
    let mut shape = vec![count];
    shape.extend_from_slice(latent_shape);
    let raw = raw_storage_bytes(&shape, precision);
    if !compress {
        return Ok(raw);
    }
    let mut ranks = crate::hosvd::ranks_for_ratio(&shape, ratio)?;
    if !truncate_instance_mode {
        ranks[0] = count;
    }
    Ok(raw.min(hosvd_storage_bytes(&shape, &ranks, precision)))
}

pub fn write_distilled(path: impl AsRef<Path>, a: &DistilledArchive) -> Result<()> {
    write_file(path.as_ref(), &a.to_bytes()?)
}

pub fn read_distilled(path: impl AsRef<Path>) -> Result<DistilledArchive> {
    DistilledArchive::from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hosvd::{hosvd_decompose, svd_compress};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(precision: Precision) -> ArchiveConfig {
        ArchiveConfig {
            ratio: 0.5,
            method: SelectionMethod::GreedyMap,
            sigma: SigmaPolicy::Fixed(1.5),
            seed: 42,
            precision,
            truncate_instance_mode: true,
            standardize: false,
            compress: true,
        }
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn sample(precision: Precision) -> DistilledArchive {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut f = hosvd_decompose(&random_tensor(&mut rng, &[3, 4, 5]), 0.5).unwrap();
        f.round_to(precision);
        let mut s = svd_compress(&random_tensor(&mut rng, &[2, 4, 5]), 1).unwrap();
        s = {
            let r = |m: &Matrix| {
                Matrix::from_vec(m.rows(), m.cols(), m.data().iter().map(|&x| precision.round(x)).collect()).unwrap()
            };
            SvdFactorization::new(
                r(s.u()),
                s.singular_values().iter().map(|&x| precision.round(x)).collect(),
                r(s.v()),
                s.original_shape().to_vec(),
            )
            .unwrap()
        };
        let raw = random_tensor(&mut rng, &[1, 4, 5]);
        let raw = Tensor::new(vec![1, 4, 5], raw.data().iter().map(|&x| precision.round(x)).collect()).unwrap();
        DistilledArchive::new(
            config(precision),
            vec![4, 5],
            3,
            1 << 20,
            1000,
            vec![
                ClassSection {
                    class_id: 0,
                    item_ids: ids("a", 3),
                    log_prob: Some(-2.5),
                    data: SectionData::Hosvd(f),
                },
                ClassSection {
                    class_id: 1,
                    item_ids: ids("b", 2),
                    log_prob: None,
                    data: SectionData::Svd(s),
                },
                ClassSection {
                    class_id: 2,
                    item_ids: ids("c", 1),
                    log_prob: Some(f64::NEG_INFINITY),
                    data: SectionData::Raw(raw),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_both_precisions() {
        for p in [Precision::Fp32, Precision::Fp16] {
            let a = sample(p);
            let bytes = a.to_bytes().unwrap();
            assert_eq!(bytes.len() as u64, a.total_bytes());
            assert_eq!(DistilledArchive::from_bytes(&bytes).unwrap(), a);
        }
    }

    #[test]
    fn single_class_size_is_header_plus_storage() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut f = hosvd_decompose(&random_tensor(&mut rng, &[2, 3, 3]), 1.0).unwrap();
        f.round_to(Precision::Fp32);
        let storage = f.storage_bytes(Precision::Fp32);
        let item_ids = ids("x", 2);
        let a = DistilledArchive::new(
            config(Precision::Fp32),
            vec![3, 3],
            2,
            1 << 20,
            0,
            vec![ClassSection {
                class_id: 0,
                item_ids: item_ids.clone(),
                log_prob: None,
                data: SectionData::Hosvd(f),
            }],
        )
        .unwrap();
        let expected = header_len(2, [&item_ids[..]]) + storage;
        assert_eq!(a.to_bytes().unwrap().len() as u64, expected);
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let bytes = sample(Precision::Fp32).to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x5a;
            let err = DistilledArchive::from_bytes(&bad).unwrap_err();
            assert!(err.is_integrity(), "byte {i}: {err}");
        }
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample(Precision::Fp32).to_bytes().unwrap();
        for cut in [0, 3, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(DistilledArchive::from_bytes(&bytes[..cut]).unwrap_err().is_integrity());
        }
    }

    #[test]
    fn accounting_mismatch_is_integrity_error() {
        let a = sample(Precision::Fp32);
        let mut bytes = a.to_bytes().unwrap();
        // flip the within-budget flag and re-seal the header checksum
        let within_at = 8 + 28 + 24;
        bytes[within_at] ^= 1;
        let header_end = a.header_len() as usize - 4;
        let crc = crc32fast::hash(&bytes[..header_end]);
        bytes[header_end..header_end + 4].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(DistilledArchive::from_bytes(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn shape_validation() {
        let a = sample(Precision::Fp32);
        let mut classes = a.classes().to_vec();
        classes[0].item_ids.pop();
        assert!(DistilledArchive::new(config(Precision::Fp32), vec![4, 5], 3, 0, 0, classes).is_err());
    }
}
