//! End-to-end distillation: per-class selection, HOSVD compression and
//! budget-constrained packing, plus decoding, metrics and ratio sweeps.
//!
//! Every class is handled independently with its own RNG stream, seeded by
//! [`class_seed`]; sections are emitted in class-id order, so the archive is
//! a pure function of the dataset and the configuration.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::archive::distilled::{header_len, section_bytes_for};
use crate::archive::{
    Accounting, ArchiveConfig, ClassSection, DistilledArchive, LatentDataset, LatentItem, Precision, SectionData,
};
use crate::dpp::{greedy_map, rbf_kernel, sample_kdpp, subset_log_prob, SelectionMethod, SigmaPolicy};
use crate::error::{Error, Result};
use crate::hosvd::{
    check_ratio, hosvd_decompose_with_ranks, hosvd_storage_bytes, ranks_for_ratio, raw_storage_bytes, DEFAULT_RATIO,
};
use crate::tensor::Tensor;

pub mod synth;

pub use synth::{generate_synthetic, SynthSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstancesPerClass {
    Fixed(usize),
    /// Largest uniform count that fits the budget, capped at the largest
    /// class population.
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub budget_bytes: u64,
    /// Declared size of the external decoder, counted against the budget.
    pub model_bytes: u64,
    pub ratio: f64,
    pub method: SelectionMethod,
    pub sigma: SigmaPolicy,
    pub master_seed: u64,
    pub instances_per_class: InstancesPerClass,
    pub precision: Precision,
    /// Truncate the instance mode along with the latent modes.
    pub truncate_instance_mode: bool,
    /// Standardize features within each class before selection.
    pub standardize: bool,
    /// Use HOSVD where it is smaller than raw storage; when off, every
    /// section is raw.
    pub compress: bool,
}

impl DistillConfig {
    pub fn new(budget_bytes: u64, model_bytes: u64) -> Self {
        DistillConfig {
            budget_bytes,
            model_bytes,
            ratio: DEFAULT_RATIO,
            method: SelectionMethod::ExactKdpp,
            sigma: SigmaPolicy::Median,
            master_seed: 0,
            instances_per_class: InstancesPerClass::Auto,
            precision: Precision::Fp32,
            truncate_instance_mode: true,
            standardize: false,
            compress: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_ratio(self.ratio)?;
        if self.budget_bytes <= self.model_bytes {
            return Err(Error::invalid(format!(
                "budget ({} bytes) must exceed the model size ({} bytes)",
                self.budget_bytes, self.model_bytes
            )));
        }
        if self.instances_per_class == InstancesPerClass::Fixed(0) {
            return Err(Error::invalid("instances per class must be positive"));
        }
        if let SigmaPolicy::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn archive_config(&self) -> ArchiveConfig {
        ArchiveConfig {
            ratio: self.ratio,
            method: self.method,
            sigma: self.sigma,
            seed: self.master_seed,
            precision: self.precision,
            truncate_instance_mode: self.truncate_instance_mode,
            standardize: self.standardize,
            compress: self.compress,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-class RNG seed: `splitmix64(master ⊕ splitmix64(class_id))`.
pub fn class_seed(master_seed: u64, class_id: u32) -> u64 {
    splitmix64(master_seed ^ splitmix64(class_id as u64))
}

#[derive(Clone, Debug)]
pub struct DistillOutput {
    pub archive: DistilledArchive,
    pub warnings: Vec<String>,
}

struct ClassChoice {
    class_id: u32,
    /// Indices into the dataset's items, ascending.
    items: Vec<usize>,
    log_prob: Option<f64>,
}

fn standardized(points: &mut [Vec<f64>]) {
    let n = points.len() as f64;
    let dim = points[0].len();
    for f in 0..dim {
        let mean = points.iter().map(|p| p[f]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[f] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        points.iter_mut().for_each(|p| p[f] = (p[f] - mean) / sd);
    }
}

fn select_class(
    d: &LatentDataset,
    cfg: &DistillConfig,
    class_id: u32,
    members: &[usize],
    m: usize,
    warnings: &mut Vec<String>,
) -> Result<ClassChoice> {
    let mut points: Vec<Vec<f64>> = members.iter().map(|&i| d.items()[i].tensor.data().to_vec()).collect();
    if cfg.standardize {
        standardized(&mut points);
    }
    if members.len() <= m {
        if members.len() < m {
            let msg = format!(
                "class {class_id} has {} items, fewer than the requested {m}; taking all of them",
                members.len()
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        let log_prob = if members.len() >= 2 {
            let sigma = cfg.sigma.resolve(&points);
            match sigma {
                Ok(sigma) => {
                    let kernel = rbf_kernel(&points, sigma)?;
                    Some(subset_log_prob(&kernel, &(0..members.len()).collect::<Vec<_>>())?)
                }
                Err(_) => None,
            }
        } else {
            None
        };
        return Ok(ClassChoice {
            class_id,
            items: members.to_vec(),
            log_prob,
        });
    }
    let sigma = cfg.sigma.resolve(&points)?;
    let kernel = rbf_kernel(&points, sigma)?;
    let selection = match cfg.method {
        SelectionMethod::ExactKdpp => {
            let mut rng = ChaCha8Rng::seed_from_u64(class_seed(cfg.master_seed, class_id));
            match sample_kdpp(&kernel, m, &mut rng) {
                Err(Error::InfeasibleSize { size, rank }) => {
                    let msg = format!(
                        "class {class_id}: kernel rank {rank} is below {size}; using greedy selection"
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                    greedy_map(&kernel, m)?
                }
                other => other?,
            }
        }
        SelectionMethod::GreedyMap => greedy_map(&kernel, m)?,
    };
    let log_prob = subset_log_prob(&kernel, &selection.indices)?;
    Ok(ClassChoice {
        class_id,
        items: selection.indices.iter().map(|&i| members[i]).collect(),
        log_prob: Some(log_prob),
    })
}

fn select_all(d: &LatentDataset, cfg: &DistillConfig, m: usize, warnings: &mut Vec<String>) -> Result<Vec<ClassChoice>> {
    let mut out = Vec::new();
    for (c, members) in d.class_members().iter().enumerate() {
        if members.is_empty() {
            let msg = format!("class {c} has no items and is left out of the archive");
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        out.push(select_class(d, cfg, c as u32, members, m, warnings)?);
    }
    Ok(out)
}

fn stack(d: &LatentDataset, items: &[usize]) -> Result<Tensor> {
    let mut shape = vec![items.len()];
    shape.extend_from_slice(d.latent_shape());
    let mut data = Vec::with_capacity(items.len() * d.item_values());
    for &i in items {
        data.extend_from_slice(d.items()[i].tensor.data());
    }
    Tensor::new(shape, data)
}

fn compress_section(z: &Tensor, cfg: &DistillConfig, ratio: f64) -> Result<SectionData> {
    let precision = cfg.precision;
    let raw_bytes = raw_storage_bytes(z.shape(), precision);
    if cfg.compress {
        let mut ranks = ranks_for_ratio(z.shape(), ratio)?;
        if !cfg.truncate_instance_mode {
            ranks[0] = z.shape()[0];
        }
        if z.order() >= 2 && hosvd_storage_bytes(z.shape(), &ranks, precision) <= raw_bytes {
            let mut f = hosvd_decompose_with_ranks(z, &ranks, ratio)?;
            f.round_to(precision);
            return Ok(SectionData::Hosvd(f));
        }
    }
    let data = z.data().iter().map(|&x| precision.round(x)).collect();
    Ok(SectionData::Raw(Tensor::new(z.shape().to_vec(), data)?))
}

fn build_archive(
    d: &LatentDataset,
    cfg: &DistillConfig,
    m: usize,
    choices: &[ClassChoice],
    ratio: f64,
) -> Result<DistilledArchive> {
    let mut classes = Vec::with_capacity(choices.len());
    for ch in choices {
        let z = stack(d, &ch.items)?;
        classes.push(ClassSection {
            class_id: ch.class_id,
            item_ids: ch.items.iter().map(|&i| d.items()[i].id.clone()).collect(),
            log_prob: ch.log_prob,
            data: compress_section(&z, cfg, ratio)?,
        });
    }
    let mut acfg = cfg.archive_config();
    acfg.ratio = ratio;
    DistilledArchive::new(acfg, d.latent_shape().to_vec(), m, cfg.budget_bytes, cfg.model_bytes, classes)
}

/// Upper bound on the archive size for a uniform count `m`, exact except
/// that ids are assumed to be the longest of each class.
pub fn archive_bytes_bound(d: &LatentDataset, cfg: &DistillConfig, m: usize) -> Result<u64> {
    let mut longest = Vec::new();
    let mut sections = 0u64;
    for members in d.class_members() {
        if members.is_empty() {
            continue;
        }
        let k = members.len().min(m);
        let mut lens: Vec<usize> = members.iter().map(|&i| d.items()[i].id.len()).collect();
        lens.sort_unstable_by(|a, b| b.cmp(a));
        longest.push(lens[..k].iter().map(|&l| "x".repeat(l)).collect::<Vec<_>>());
        sections += section_bytes_for(
            d.latent_shape(),
            k,
            cfg.ratio,
            cfg.truncate_instance_mode,
            cfg.compress,
            cfg.precision,
        )?;
    }
    Ok(header_len(d.latent_shape().len(), longest.iter().map(|v| &v[..])) + sections)
}

/// Largest `m` in `1..=max population` whose archive fits the budget.
pub fn auto_instances_per_class(d: &LatentDataset, cfg: &DistillConfig) -> Result<usize> {
    let max_pop = d.class_members().iter().map(Vec::len).max().unwrap_or(0);
    if max_pop == 0 {
        return Err(Error::invalid("dataset has no items"));
    }
    let fits = |m: usize| -> Result<bool> { Ok(archive_bytes_bound(d, cfg, m)? + cfg.model_bytes <= cfg.budget_bytes) };
    if !fits(1)? {
        return Err(Error::InfeasibleBudget {
            budget_bytes: cfg.budget_bytes,
            minimal_budget: archive_bytes_bound(d, cfg, 1)? + cfg.model_bytes,
        });
    }
    let (mut lo, mut hi) = (1, max_pop);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

pub fn distill(d: &LatentDataset, cfg: &DistillConfig) -> Result<DistillOutput> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::invalid("dataset has no items"));
    }
    let m = match cfg.instances_per_class {
        InstancesPerClass::Fixed(m) => m,
        InstancesPerClass::Auto => auto_instances_per_class(d, cfg)?,
    };
    let mut warnings = Vec::new();
    let choices = select_all(d, cfg, m, &mut warnings)?;
    let archive = build_archive(d, cfg, m, &choices, cfg.ratio)?;
    let acc = archive.accounting();
    if !acc.within_budget {
        return Err(Error::InfeasibleBudget {
            budget_bytes: cfg.budget_bytes,
            minimal_budget: acc.total_bytes + cfg.model_bytes,
        });
    }
    Ok(DistillOutput { archive, warnings })
}

/// Reconstructs every stored instance with its id and class.
pub fn decode(a: &DistilledArchive) -> Result<LatentDataset> {
    let latent = a.latent_shape().to_vec();
    let per_item: usize = latent.iter().product();
    let num_classes = a.classes().iter().map(|c| c.class_id as usize + 1).max().unwrap_or(0);
    let mut items = Vec::new();
    for c in a.classes() {
        let z = c.data.reconstruct()?;
        for (k, id) in c.item_ids.iter().enumerate() {
            let data = z.data()[k * per_item..(k + 1) * per_item].to_vec();
            items.push(LatentItem {
                id: id.clone(),
                class_id: c.class_id,
                tensor: Tensor::new(latent.clone(), data)?,
            });
        }
    }
    LatentDataset::new(latent, num_classes, Vec::new(), items)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemMetrics {
    pub id: String,
    pub class_id: u32,
    pub mse: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    /// Instances stored for this class.
    pub instances: usize,
    pub mse: f64,
    /// Relative Frobenius error of the stacked class tensor.
    pub relative_error: f64,
    pub section_kind: Option<&'static str>,
    pub section_bytes: Option<u64>,
    pub log_prob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub items: usize,
    pub mse: f64,
    pub relative_error: f64,
    pub classes: Vec<ClassMetrics>,
    pub per_item: Vec<ItemMetrics>,
    /// Bytes the decoded items occupy as raw fp32 values.
    pub raw_fp32_bytes: u64,
    pub accounting: Option<Accounting>,
    /// `raw_fp32_bytes / total_bytes`, when an archive is given.
    pub compression_ratio: Option<f64>,
    pub instances_per_class: Option<usize>,
}

struct Acc {
    sq_err: f64,
    sq_norm: f64,
    values: usize,
    items: usize,
}

/// Compares decoded items with the originals of the same id.
pub fn evaluate(
    original: &LatentDataset,
    decoded: &LatentDataset,
    archive: Option<&DistilledArchive>,
) -> Result<MetricsReport> {
    let index: std::collections::HashMap<&str, &LatentItem> =
        original.items().iter().map(|it| (it.id.as_str(), it)).collect();
    let mut per_item = Vec::with_capacity(decoded.len());
    let mut by_class: std::collections::BTreeMap<u32, Acc> = Default::default();
    for it in decoded.items() {
        let orig = index
            .get(it.id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("decoded item {} is not in the original dataset", it.id)))?;
        if orig.class_id != it.class_id {
            return Err(Error::IdMismatch(format!(
                "item {} has class {} but {} in the original",
                it.id, it.class_id, orig.class_id
            )));
        }
        let sq = orig.tensor.squared_distance(&it.tensor).map_err(|e| Error::IdMismatch(e.to_string()))?;
        let norm = orig.tensor.frobenius_norm();
        let n = it.tensor.len();
        per_item.push(ItemMetrics {
            id: it.id.clone(),
            class_id: it.class_id,
            mse: sq / n as f64,
            relative_error: if norm > 0.0 { sq.sqrt() / norm } else { sq.sqrt() },
        });
        let acc = by_class.entry(it.class_id).or_insert(Acc {
            sq_err: 0.0,
            sq_norm: 0.0,
            values: 0,
            items: 0,
        });
        acc.sq_err += sq;
        acc.sq_norm += norm * norm;
        acc.values += n;
        acc.items += 1;
    }
    let ratio_of = |a: &Acc| if a.sq_norm > 0.0 { (a.sq_err / a.sq_norm).sqrt() } else { a.sq_err.sqrt() };
    let classes = by_class
        .iter()
        .map(|(&class_id, a)| {
            let section = archive.and_then(|ar| ar.classes().iter().find(|c| c.class_id == class_id));
            ClassMetrics {
                class_id,
                instances: a.items,
                mse: a.sq_err / a.values as f64,
                relative_error: ratio_of(a),
                section_kind: section.map(|s| s.data.kind_name()),
                section_bytes: section
                    .zip(archive)
                    .map(|(s, ar)| s.data.storage_bytes(ar.config().precision)),
                log_prob: section.and_then(|s| s.log_prob),
            }
        })
        .collect();
    let total = by_class.values().fold(
        Acc {
            sq_err: 0.0,
            sq_norm: 0.0,
            values: 0,
            items: 0,
        },
        |t, a| Acc {
            sq_err: t.sq_err + a.sq_err,
            sq_norm: t.sq_norm + a.sq_norm,
            values: t.values + a.values,
            items: t.items + a.items,
        },
    );
    let raw_fp32_bytes = 4 * total.values as u64;
    let accounting = archive.map(DistilledArchive::accounting);
    Ok(MetricsReport {
        items: total.items,
        mse: if total.values > 0 { total.sq_err / total.values as f64 } else { 0.0 },
        relative_error: ratio_of(&total),
        classes,
        per_item,
        raw_fp32_bytes,
        accounting,
        compression_ratio: accounting.map(|a| raw_fp32_bytes as f64 / a.total_bytes as f64),
        instances_per_class: archive.map(DistilledArchive::instances_per_class),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub bytes: u64,
    pub mse: f64,
    pub relative_error: f64,
}

/// Compresses one fixed selection of `m` instances per class at each ratio.
/// The budget in `cfg` is not enforced.
pub fn sweep(d: &LatentDataset, cfg: &DistillConfig, m: usize, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    if m == 0 {
        return Err(Error::invalid("instances per class must be positive"));
    }
    for &r in ratios {
        check_ratio(r)?;
    }
    let mut warnings = Vec::new();
    let choices = select_all(d, cfg, m, &mut warnings)?;
    ratios
        .iter()
        .map(|&ratio| {
            let a = build_archive(d, cfg, m, &choices, ratio)?;
            let report = evaluate(d, &decode(&a)?, Some(&a))?;
            Ok(SweepRow {
                ratio,
                bytes: a.total_bytes(),
                mse: report.mse,
                relative_error: report.relative_error,
            })
        })
        .collect()
}
