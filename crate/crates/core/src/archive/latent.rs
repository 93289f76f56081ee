//! `LVDD` latent dataset files.
//!
//! | field            | type                                  |
//! |------------------|---------------------------------------|
//! | magic            | `b"LVDD"`                             |
//! | version          | u32 = 1                               |
//! | class count      | u32                                   |
//! | item count       | u32                                   |
//! | order            | u8                                    |
//! | extents          | u32 × order                           |
//! | items            | (u32 id len, id, u32 class, f32 × Πd) |
//! | class name count | u32 (0 or class count)                |
//! | class names      | (u32 len, UTF-8) × name count         |

use std::collections::HashSet;
use std::path::Path;

use crate::archive::{checked_count, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LVDD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentItem {
    pub id: String,
    pub class_id: u32,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentDataset {
    latent_shape: Vec<usize>,
    num_classes: usize,
    class_names: Vec<String>,
    items: Vec<LatentItem>,
}

impl LatentDataset {
    /// Validates shapes, class ranges and id uniqueness. `class_names` is
    /// either empty or has one entry per class.
    pub fn new(
        latent_shape: Vec<usize>,
        num_classes: usize,
        class_names: Vec<String>,
        items: Vec<LatentItem>,
    ) -> Result<Self> {
        if latent_shape.is_empty() || latent_shape.contains(&0) {
            return Err(Error::shape(format!("invalid latent shape {latent_shape:?}")));
        }
        if !class_names.is_empty() && class_names.len() != num_classes {
            return Err(Error::invalid(format!(
                "{} class names for {num_classes} classes",
                class_names.len()
            )));
        }
        let mut ids = HashSet::with_capacity(items.len());
        for item in &items {
            if item.tensor.shape() != latent_shape.as_slice() {
                return Err(Error::shape(format!(
                    "item {} has shape {:?}, expected {latent_shape:?}",
                    item.id,
                    item.tensor.shape()
                )));
            }
            if item.class_id as usize >= num_classes {
                return Err(Error::invalid(format!(
                    "item {} has class {} but there are {num_classes} classes",
                    item.id, item.class_id
                )));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::invalid(format!("duplicate item id {}", item.id)));
            }
        }
        Ok(LatentDataset {
            latent_shape,
            num_classes,
            class_names,
            items,
        })
    }

    pub fn latent_shape(&self) -> &[usize] {
        &self.latent_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn items(&self) -> &[LatentItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Indices into `items()` grouped by class, in item order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, item) in self.items.iter().enumerate() {
            out[item.class_id as usize].push(i);
        }
        out
    }

    pub fn item_values(&self) -> usize {
        self.latent_shape.iter().product()
    }

    pub fn encoded_len(&self) -> u64 {
        let order = self.latent_shape.len() as u64;
        let header = 4 + 4 + 4 + 4 + 1 + 4 * order;
        let values = 4 * self.item_values() as u64;
        let items: u64 = self.items.iter().map(|it| 4 + it.id.len() as u64 + 4 + values).sum();
        let names: u64 = 4 + self.class_names.iter().map(|n| 4 + n.len() as u64).sum::<u64>();
        header + items + names
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.len_u32(self.num_classes)?;
        w.len_u32(self.items.len())?;
        let order = u8::try_from(self.latent_shape.len()).map_err(|_| Error::invalid("tensor order above 255"))?;
        w.u8(order);
        for &d in &self.latent_shape {
            w.len_u32(d)?;
        }
        for item in &self.items {
            w.str(&item.id)?;
            w.u32(item.class_id);
            for &x in item.tensor.data() {
                let v = x as f32;
                if !v.is_finite() {
                    return Err(Error::NonFinite("latent item"));
                }
                w.f32(v);
            }
        }
        w.len_u32(self.class_names.len())?;
        for name in &self.class_names {
            w.str(name)?;
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let num_classes = r.u32("class count")? as usize;
        let count = r.u32("item count")? as usize;
        let order = r.u8("tensor order")? as usize;
        if order == 0 {
            return Err(Error::Corrupt("latent order is zero".into()));
        }
        let shape = r.extents(order, "latent extents")?;
        let n = checked_count(&shape, usize::MAX / 4)?;
        let mut items = Vec::with_capacity(count.min(r.remaining()));
        for _ in 0..count {
            let id = r.str("item id")?;
            let class_id = r.u32("item class")?;
            let raw = r.take(4 * n, "item payload")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect();
            items.push(LatentItem {
                id,
                class_id,
                tensor: Tensor::new(shape.clone(), data)?,
            });
        }
        let names = r.u32("class name count")? as usize;
        let mut class_names = Vec::with_capacity(names.min(r.remaining()));
        for _ in 0..names {
            class_names.push(r.str("class name")?);
        }
        r.finish()?;
        LatentDataset::new(shape, num_classes, class_names, items).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

pub fn write_latent_dataset(path: impl AsRef<Path>, d: &LatentDataset) -> Result<()> {
    write_file(path.as_ref(), &d.to_bytes()?)
}

pub fn read_latent_dataset(path: impl AsRef<Path>) -> Result<LatentDataset> {
    LatentDataset::from_bytes(&read_file(path.as_ref())?)
}
