//! Browser bindings for three small demos: DPP selection on 2-D points,
//! HOSVD compression of a smooth frame sequence, and INT8 quantization.

use latent_distill::dpp::{greedy_map, median_heuristic_sigma, rbf_kernel, sample_kdpp};
use latent_distill::hosvd::{hosvd_decompose, raw_storage_bytes};
use latent_distill::pipeline::{generate_synthetic, SynthSpec};
use latent_distill::quantize::{dequantize, quantize_affine};
use latent_distill::archive::Precision;
use latent_distill::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Frames × height × width of the HOSVD demo tensor.
pub const FRAME_SHAPE: [usize; 3] = [8, 32, 32];

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

pub fn select(xs: &[f64], ys: &[f64], k: usize, greedy: bool, seed: u64) -> Result<Vec<u32>, Error> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    let points: Vec<[f64; 2]> = xs.iter().zip(ys).map(|(&x, &y)| [x, y]).collect();
    let sigma = median_heuristic_sigma(&points)?;
    let kernel = rbf_kernel(&points, sigma)?;
    let k = k.min(points.len());
    let sel = if greedy {
        greedy_map(&kernel, k)?
    } else {
        sample_kdpp(&kernel, k, &mut ChaCha8Rng::seed_from_u64(seed))?
    };
    Ok(sel.indices.into_iter().map(|i| i as u32).collect())
}

/// Indices of `k` diverse points, by exact k-DPP sampling or greedy MAP.
#[wasm_bindgen(js_name = selectPoints)]
pub fn select_points(xs: &[f64], ys: &[f64], k: usize, greedy: bool, seed: u64) -> Result<Vec<u32>, JsError> {
    select(xs, ys, k, greedy, seed).map_err(js)
}

#[wasm_bindgen]
pub struct HosvdDemo {
    original: Vec<f64>,
    reconstructed: Vec<f64>,
    relative_error: f64,
    bytes: u64,
    raw_bytes: u64,
    ranks: Vec<u32>,
}

#[wasm_bindgen]
impl HosvdDemo {
    #[wasm_bindgen(getter)]
    pub fn original(&self) -> Vec<f64> {
        self.original.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reconstructed(&self) -> Vec<f64> {
        self.reconstructed.clone()
    }

    #[wasm_bindgen(getter, js_name = relativeError)]
    pub fn relative_error(&self) -> f64 {
        self.relative_error
    }

    #[wasm_bindgen(getter)]
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    #[wasm_bindgen(getter, js_name = rawBytes)]
    pub fn raw_bytes(&self) -> u64 {
        self.raw_bytes
    }

    #[wasm_bindgen(getter)]
    pub fn ranks(&self) -> Vec<u32> {
        self.ranks.clone()
    }
}

pub fn compress_frames(ratio: f64, smoothness: f64, seed: u64) -> Result<HosvdDemo, Error> {
    let d = generate_synthetic(&SynthSpec {
        num_classes: 1,
        items_per_class: 1,
        latent_shape: FRAME_SHAPE.to_vec(),
        noise_scale: 0.0,
        smoothness,
        seed,
        ..SynthSpec::default()
    })?;
    let z: &Tensor = &d.items()[0].tensor;
    let f = hosvd_decompose(z, ratio)?;
    let zh = f.reconstruct()?;
    Ok(HosvdDemo {
        relative_error: z.relative_error(&zh)?,
        bytes: f.storage_bytes(Precision::Fp32),
        raw_bytes: raw_storage_bytes(z.shape(), Precision::Fp32),
        ranks: f.ranks().iter().map(|&r| r as u32).collect(),
        original: z.data().to_vec(),
        reconstructed: zh.into_data(),
    })
}

/// Compresses a smooth `8 × 32 × 32` frame sequence at `ratio`.
#[wasm_bindgen(js_name = compressFrames)]
pub fn compress_frames_js(ratio: f64, smoothness: f64, seed: u64) -> Result<HosvdDemo, JsError> {
    compress_frames(ratio, smoothness, seed).map_err(js)
}

#[wasm_bindgen]
pub struct QuantDemo {
    codes: Vec<i8>,
    dequantized: Vec<f64>,
    scale: f64,
    zero_point: i8,
    max_error: f64,
}

#[wasm_bindgen]
impl QuantDemo {
    #[wasm_bindgen(getter)]
    pub fn codes(&self) -> Vec<i8> {
        self.codes.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn dequantized(&self) -> Vec<f64> {
        self.dequantized.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[wasm_bindgen(getter, js_name = zeroPoint)]
    pub fn zero_point(&self) -> i8 {
        self.zero_point
    }

    #[wasm_bindgen(getter, js_name = maxError)]
    pub fn max_error(&self) -> f64 {
        self.max_error
    }
}

pub fn quantize_values(values: &[f64]) -> Result<QuantDemo, Error> {
    let t = Tensor::new(vec![values.len()], values.to_vec())?;
    let q = quantize_affine(&t)?;
    let back = dequantize(&q)?;
    let max_error = values
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let codes = match q.payload() {
        latent_distill::archive::Payload::Int8 { values, .. } => values.clone(),
        _ => unreachable!("affine quantization yields int8"),
    };
    Ok(QuantDemo {
        codes,
        scale: q.scale().unwrap_or(1.0),
        zero_point: q.zero_point().unwrap_or(0),
        dequantized: back.into_data(),
        max_error,
    })
}

/// Affine INT8 round trip of `values`.
#[wasm_bindgen(js_name = quantizeValues)]
pub fn quantize_values_js(values: &[f64]) -> Result<QuantDemo, JsError> {
    quantize_values(values).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_spreads_over_clusters() {
        // three tight clusters; three picks should hit all of them
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for j in 0..5 {
                xs.push(cx + 0.01 * j as f64);
                ys.push(cy + 0.01 * c as f64);
            }
        }
        for greedy in [true, false] {
            let picked = select(&xs, &ys, 3, greedy, 4).unwrap();
            let mut clusters: Vec<u32> = picked.iter().map(|i| i / 5).collect();
            clusters.dedup();
            assert_eq!(clusters, vec![0, 1, 2], "greedy {greedy}");
        }
        assert!(select(&xs, &ys[1..], 2, true, 0).is_err());
    }

    #[test]
    fn frames_error_shrinks_with_ratio() {
        let low = compress_frames(0.1, 2.0, 1).unwrap();
        let high = compress_frames(0.75, 2.0, 1).unwrap();
        assert_eq!(low.original.len(), FRAME_SHAPE.iter().product::<usize>());
        assert!(high.relative_error < low.relative_error);
        assert!(low.bytes < high.bytes && high.bytes < high.raw_bytes);
        assert!(compress_frames(1.0, 2.0, 1).unwrap().relative_error < 1e-9);
    }

    #[test]
    fn quantization_error_within_half_step() {
        let values: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let q = quantize_values(&values).unwrap();
        assert!(q.max_error <= q.scale / 2.0 + 1e-7);
        assert_eq!(q.codes.len(), 200);
    }
}
