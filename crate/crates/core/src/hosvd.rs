//! Truncated higher-order SVD (Tucker form) and the flattened SVD baseline.
//!
//! A tensor `Z` with shape `(d_1, .., d_n)` is stored as a core `G` with shape
//! `(r_1, .., r_n)` and factors `U_i` (`d_i x r_i`, orthonormal columns) such
//! that `Z ≈ G ×_1 U_1 ×_2 U_2 ... ×_n U_n`. Each `U_i` holds the leading
//! `r_i` left singular vectors of the mode-`i` unfolding of the *original*
//! tensor, and `G = Z ×_1 U_1ᵀ ... ×_n U_nᵀ`.
//!
//! Ranks come from a single compression ratio applied to every mode:
//! `r_i = clamp(round_half_up(ratio · d_i), 1, d_i)`.

use crate::archive::{layout, Precision};
use crate::error::{Error, Result};
use crate::linalg::{left_singular_vectors, svd};
use crate::tensor::{mode_product, unfold, Matrix, Tensor};

/// Ratio used when none is configured.
pub const DEFAULT_RATIO: f64 = 0.75;

pub fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("rank compression ratio must be in (0, 1], got {ratio}")))
    }
}

/// `clamp(round_half_up(ratio · extent), 1, extent)`.
pub fn rank_for_ratio(extent: usize, ratio: f64) -> usize {
    let r = (ratio * extent as f64 + 0.5).floor() as usize;
    r.clamp(1, extent)
}

pub fn ranks_for_ratio(shape: &[usize], ratio: f64) -> Result<Vec<usize>> {
    check_ratio(ratio)?;
    Ok(shape.iter().map(|&d| rank_for_ratio(d, ratio)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HosvdFactorization {
    core: Tensor,
    factors: Vec<Matrix>,
    original_shape: Vec<usize>,
    ratio: f64,
}

impl HosvdFactorization {
    pub fn new(core: Tensor, factors: Vec<Matrix>, original_shape: Vec<usize>, ratio: f64) -> Result<Self> {
        if factors.len() != original_shape.len() || core.order() != original_shape.len() {
            return Err(Error::Corrupt(format!(
                "factorization of order {} has {} factors and a core of order {}",
                original_shape.len(),
                factors.len(),
                core.order()
            )));
        }
        for (i, (f, &d)) in factors.iter().zip(&original_shape).enumerate() {
            let r = core.shape()[i];
            if f.rows() != d || f.cols() != r || r > d {
                return Err(Error::Corrupt(format!(
                    "factor {i} is {}x{}, expected {d}x{r}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        Ok(HosvdFactorization {
            core,
            factors,
            original_shape,
            ratio,
        })
    }

    pub fn core(&self) -> &Tensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn original_shape(&self) -> &[usize] {
        &self.original_shape
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    /// Number of stored scalars: `Π r_i + Σ d_i r_i`.
    pub fn stored_values(&self) -> usize {
        let core: usize = self.ranks().iter().product();
        core + self
            .original_shape
            .iter()
            .zip(self.ranks())
            .map(|(d, r)| d * r)
            .sum::<usize>()
    }

    /// Exact byte size of the serialized section.
    pub fn storage_bytes(&self, precision: Precision) -> u64 {
        hosvd_storage_bytes(&self.original_shape, self.ranks(), precision)
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        hosvd_reconstruct(self)
    }

    /// Rounds every stored value to `precision`, as a write/read cycle would.
    pub fn round_to(&mut self, precision: Precision) {
        let core = std::mem::replace(&mut self.core, Tensor::zeros(vec![1]).expect("valid shape"));
        let shape = core.shape().to_vec();
        let data = core.into_data().into_iter().map(|x| precision.round(x)).collect();
        self.core = Tensor::new(shape, data).expect("shape unchanged");
        for f in &mut self.factors {
            let (r, c) = (f.rows(), f.cols());
            let data = f.data().iter().map(|&x| precision.round(x)).collect();
            *f = Matrix::from_vec(r, c, data).expect("shape unchanged");
        }
    }
}

/// Byte size of a HOSVD section for the given shape and ranks, without
/// building the factorization.
pub fn hosvd_storage_bytes(shape: &[usize], ranks: &[usize], precision: Precision) -> u64 {
    let core: u64 = ranks.iter().map(|&r| r as u64).product();
    let factors: u64 = shape.iter().zip(ranks).map(|(&d, &r)| (d * r) as u64).sum();
    precision.element_size() * (core + factors) + layout::hosvd_section_overhead(shape.len())
}

/// Byte size of an uncompressed section holding a tensor of `shape`.
pub fn raw_storage_bytes(shape: &[usize], precision: Precision) -> u64 {
    let n: u64 = shape.iter().map(|&d| d as u64).product();
    precision.element_size() * n + layout::raw_section_overhead(shape.len())
}

/// Singular values of every mode unfolding.
pub fn mode_spectra(z: &Tensor) -> Result<Vec<Vec<f64>>> {
    (0..z.order())
        .map(|m| Ok(left_singular_vectors(&unfold(z, m)?)?.1))
        .collect()
}

/// `Σ_i Σ_{k >= r_i} σ_k^{(i)}²`, an upper bound on the squared truncation error.
pub fn truncation_bound(spectra: &[Vec<f64>], ranks: &[usize]) -> f64 {
    spectra
        .iter()
        .zip(ranks)
        .map(|(s, &r)| s.iter().skip(r).map(|x| x * x).sum::<f64>())
        .sum()
}

/// Extends `u` (orthonormal columns) to `cols` orthonormal columns.
fn extend_orthonormal(u: Matrix, cols: usize) -> Matrix {
    let (rows, have) = (u.rows(), u.cols());
    if have >= cols {
        return u.leading_columns(cols);
    }
    let mut basis: Vec<Vec<f64>> = (0..have).map(|j| u.column(j)).collect();
    for e in 0..rows {
        if basis.len() == cols {
            break;
        }
        let mut cand = vec![0.0; rows];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = b.iter().zip(&cand).map(|(x, y)| x * y).sum();
                for (c, x) in cand.iter_mut().zip(b) {
                    *c -= p * x;
                }
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.5 {
            cand.iter_mut().for_each(|x| *x /= norm);
            basis.push(cand);
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for (i, x) in b.iter().enumerate() {
            out.set(i, j, *x);
        }
    }
    out
}

pub fn hosvd_decompose(z: &Tensor, ratio: f64) -> Result<HosvdFactorization> {
    let ranks = ranks_for_ratio(z.shape(), ratio)?;
    hosvd_decompose_with_ranks(z, &ranks, ratio)
}

/// Truncated HOSVD with explicit per-mode ranks; `ratio` is only recorded.
pub fn hosvd_decompose_with_ranks(z: &Tensor, ranks: &[usize], ratio: f64) -> Result<HosvdFactorization> {
    if z.order() < 2 {
        return Err(Error::invalid("HOSVD needs a tensor of order at least 2"));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("HOSVD input"));
    }
    if ranks.len() != z.order() {
        return Err(Error::shape(format!(
            "{} ranks given for a tensor of order {}",
            ranks.len(),
            z.order()
        )));
    }
    for (i, (&r, &d)) in ranks.iter().zip(z.shape()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::invalid(format!("rank {r} for mode {i} of extent {d}")));
        }
    }
    let mut factors = Vec::with_capacity(z.order());
    for (m, &r) in ranks.iter().enumerate() {
        let (u, _) = left_singular_vectors(&unfold(z, m)?)?;
        factors.push(extend_orthonormal(u, r));
    }
    let mut core = z.clone();
    for (m, u) in factors.iter().enumerate() {
        core = mode_product(&core, &u.transpose(), m)?;
    }
    HosvdFactorization::new(core, factors, z.shape().to_vec(), ratio)
}

pub fn hosvd_reconstruct(f: &HosvdFactorization) -> Result<Tensor> {
    let mut t = f.core.clone();
    for (m, u) in f.factors.iter().enumerate() {
        if u.cols() != t.shape()[m] {
            return Err(Error::Corrupt(format!("factor {m} does not match the core")));
        }
        t = mode_product(&t, u, m)?;
    }
    if t.shape() != f.original_shape.as_slice() {
        return Err(Error::Corrupt("reconstruction has the wrong shape".into()));
    }
    Ok(t)
}

/// Truncated SVD of the mode-0 flattening (instances as rows).
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactorization {
    u: Matrix,
    singular_values: Vec<f64>,
    v: Matrix,
    original_shape: Vec<usize>,
}

impl SvdFactorization {
    pub fn new(u: Matrix, singular_values: Vec<f64>, v: Matrix, original_shape: Vec<usize>) -> Result<Self> {
        let rows = original_shape.first().copied().unwrap_or(0);
        let cols: usize = original_shape.iter().skip(1).product();
        let r = singular_values.len();
        if u.rows() != rows || v.rows() != cols || u.cols() != r || v.cols() != r || r > rows.min(cols) {
            return Err(Error::Corrupt("SVD factors do not match the declared shape".into()));
        }
        Ok(SvdFactorization {
            u,
            singular_values,
            v,
            original_shape,
        })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn original_shape(&self) -> &[usize] {
        &self.original_shape
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn storage_bytes(&self, precision: Precision) -> u64 {
        svd_storage_bytes(&self.original_shape, self.rank(), precision)
    }

    pub fn reconstruct(&self) -> Result<Tensor> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut data = vec![0.0; m * n];
        for k in 0..self.rank() {
            let s = self.singular_values[k];
            for i in 0..m {
                let a = self.u.get(i, k) * s;
                let row = &mut data[i * n..(i + 1) * n];
                for (j, x) in row.iter_mut().enumerate() {
                    *x += a * self.v.get(j, k);
                }
            }
        }
        Tensor::new(self.original_shape.clone(), data)
    }
}

/// `element_size · (m·r + r + n·r) + overhead` for the flattened baseline.
pub fn svd_storage_bytes(shape: &[usize], rank: usize, precision: Precision) -> u64 {
    let m = shape[0] as u64;
    let n: u64 = shape.iter().skip(1).map(|&d| d as u64).product();
    let r = rank as u64;
    precision.element_size() * (m * r + r + n * r) + layout::svd_section_overhead(shape.len())
}

/// Smallest flattened-SVD rank whose storage reaches `target_bytes`, capped
/// at the maximal rank.
pub fn svd_rank_for_bytes(shape: &[usize], target_bytes: u64, precision: Precision) -> usize {
    let m = shape[0];
    let n: usize = shape.iter().skip(1).product();
    let max_rank = m.min(n);
    (1..=max_rank)
        .find(|&r| svd_storage_bytes(shape, r, precision) >= target_bytes)
        .unwrap_or(max_rank)
}

pub fn svd_compress(z: &Tensor, rank: usize) -> Result<SvdFactorization> {
    if z.order() < 2 {
        return Err(Error::invalid("flattened SVD needs a tensor of order at least 2"));
    }
    let flat = unfold(z, 0)?;
    let max_rank = flat.rows().min(flat.cols());
    if rank == 0 || rank > max_rank {
        return Err(Error::invalid(format!("SVD rank must be in 1..={max_rank}, got {rank}")));
    }
    let full = svd(&flat)?;
    SvdFactorization::new(
        full.u.leading_columns(rank),
        full.singular_values[..rank].to_vec(),
        full.v.leading_columns(rank),
        z.shape().to_vec(),
    )
}
