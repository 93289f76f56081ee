//! Synthetic latent datasets with smooth, class-structured tensors.
//!
//! Each class has a mean field; each item is that mean plus independent
//! noise. Both are white Gaussian fields blurred with a separable Gaussian
//! over every latent axis, channels included, then scaled to a fixed RMS. The blur makes every mode unfolding's spectrum decay, so the
//! tensors compress well under HOSVD.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::archive::{LatentDataset, LatentItem};
use crate::error::{Error, Result};
use crate::pipeline::class_seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub items_per_class: usize,
    pub latent_shape: Vec<usize>,
    /// RMS of each class mean.
    pub mean_scale: f64,
    /// RMS of the within-class noise.
    pub noise_scale: f64,
    /// Gaussian blur width in samples; 0 disables smoothing.
    pub smoothness: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 10,
            items_per_class: 30,
            latent_shape: vec![4, 8, 16, 16],
            mean_scale: 1.0,
            noise_scale: 0.5,
            smoothness: 2.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.items_per_class == 0 {
            return Err(Error::invalid("class and item counts must be positive"));
        }
        if self.latent_shape.is_empty() || self.latent_shape.contains(&0) {
            return Err(Error::invalid(format!("invalid latent shape {:?}", self.latent_shape)));
        }
        if !(self.mean_scale >= 0.0 && self.noise_scale >= 0.0 && self.smoothness >= 0.0) {
            return Err(Error::invalid("scales and smoothness must be non-negative"));
        }
        Ok(())
    }
}

/// Normalized Gaussian taps truncated at 3σ.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Blurs `data` (row-major, `shape`) along `axis` with clamped edges.
fn blur_axis(data: &mut [f64], shape: &[usize], axis: usize, taps: &[f64]) {
    let extent = shape[axis];
    if extent == 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let radius = (taps.len() / 2) as isize;
    let mut line = vec![0.0; extent];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            for (k, x) in line.iter_mut().enumerate() {
                *x = data[base + k * inner];
            }
            for k in 0..extent {
                let mut acc = 0.0;
                for (t, w) in taps.iter().enumerate() {
                    let j = (k as isize + t as isize - radius).clamp(0, extent as isize - 1) as usize;
                    acc += w * line[j];
                }
                data[base + k * inner] = acc;
            }
        }
    }
}

fn smooth_field(shape: &[usize], taps: Option<&[f64]>, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    if let Some(taps) = taps {
        for axis in 0..shape.len() {
            blur_axis(&mut data, shape, axis, taps);
        }
    }
    let current = (data.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    if current > 0.0 {
        let f = rms / current;
        data.iter_mut().for_each(|x| *x *= f);
    }
    data
}

/// Deterministic dataset; values are representable in fp32 so the dataset
/// survives a write/read cycle unchanged. Ids are `c{class:03}_i{item:04}`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<LatentDataset> {
    spec.validate()?;
    let taps = (spec.smoothness > 0.0).then(|| gaussian_taps(spec.smoothness));
    let shape = &spec.latent_shape;
    let mut items = Vec::with_capacity(spec.num_classes * spec.items_per_class);
    for c in 0..spec.num_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(spec.seed, c as u32));
        let mean = smooth_field(shape, taps.as_deref(), spec.mean_scale, &mut rng);
        for i in 0..spec.items_per_class {
            let noise = smooth_field(shape, taps.as_deref(), spec.noise_scale, &mut rng);
            let data = mean.iter().zip(&noise).map(|(m, e)| (m + e) as f32 as f64).collect();
            items.push(LatentItem {
                id: format!("c{c:03}_i{i:04}"),
                class_id: c as u32,
                tensor: Tensor::new(shape.clone(), data)?,
            });
        }
    }
    LatentDataset::new(shape.clone(), spec.num_classes, Vec::new(), items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::left_singular_vectors;
    use crate::tensor::unfold;

    fn small() -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            items_per_class: 6,
            latent_shape: vec![2, 4, 8, 8],
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_and_fp32_exact() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        assert_eq!(a.items()[7].id, "c001_i0001");
        assert!(a.items().iter().all(|it| it.tensor.data().iter().all(|&x| x == x as f32 as f64)));
        assert_eq!(LatentDataset::from_bytes(&a.to_bytes().unwrap()).unwrap(), a);
        let other = generate_synthetic(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(other, a);
    }

    #[test]
    fn taps_are_normalized() {
        let t = gaussian_taps(1.5);
        assert_eq!(t.len(), 11);
        assert!((t.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert!(t.windows(2).take(5).all(|w| w[0] < w[1]));
    }

    fn tail_fraction(s: &[f64]) -> f64 {
        let total: f64 = s.iter().map(|x| x * x).sum();
        let tail: f64 = s[s.len() / 2..].iter().map(|x| x * x).sum();
        tail / total
    }

    #[test]
    fn spectra_decay() {
        let d = generate_synthetic(&SynthSpec {
            num_classes: 1,
            items_per_class: 16,
            ..SynthSpec::default()
        })
        .unwrap();
        let n = d.item_values();
        let mut stacked = Vec::with_capacity(16 * n);
        for it in d.items() {
            stacked.extend_from_slice(it.tensor.data());
        }
        let mut shape = vec![16];
        shape.extend_from_slice(d.latent_shape());
        let t = Tensor::new(shape, stacked).unwrap();
        for mode in 0..t.order() {
            let (_, s) = left_singular_vectors(&unfold(&t, mode).unwrap()).unwrap();
            assert!(s.windows(2).all(|w| w[1] <= w[0]));
            if s.len() >= 4 {
                assert!(tail_fraction(&s) < 0.5, "mode {mode}: {}", tail_fraction(&s));
            }
        }
        // every item on its own decays too
        let item = &d.items()[0].tensor;
        for mode in 0..item.order() {
            let (_, s) = left_singular_vectors(&unfold(item, mode).unwrap()).unwrap();
            assert!(tail_fraction(&s) < 0.5);
        }
    }

    #[test]
    fn classes_are_separated() {
        let d = generate_synthetic(&small()).unwrap();
        let members = d.class_members();
        let dist = |a: usize, b: usize| {
            d.items()[a]
                .tensor
                .squared_distance(&d.items()[b].tensor)
                .unwrap()
        };
        let mut within = 0.0f64;
        let mut between = f64::INFINITY;
        for (c, m) in members.iter().enumerate() {
            for &i in m {
                for &j in m {
                    within = within.max(dist(i, j));
                }
                for other in members.iter().skip(c + 1) {
                    for &j in other {
                        between = between.min(dist(i, j));
                    }
                }
            }
        }
        assert!(between > within, "between {between} within {within}");
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SynthSpec { num_classes: 0, ..small() }).is_err());
        assert!(generate_synthetic(&SynthSpec { latent_shape: vec![2, 0], ..small() }).is_err());
        assert!(generate_synthetic(&SynthSpec { smoothness: -1.0, ..small() }).is_err());
    }
}
