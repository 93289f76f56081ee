use latent_distill::archive::distilled::header_len;
use latent_distill::archive::{
    ArchiveConfig, ArchiveTensor, ClassSection, DistilledArchive, LatentDataset, LatentItem, Payload, Precision,
    SectionData, TensorArchive,
};
use latent_distill::dpp::{rbf_kernel, subset_log_prob, SelectionMethod, SigmaPolicy};
use latent_distill::hosvd::{hosvd_decompose, svd_compress, SvdFactorization};
use latent_distill::linalg::svd;
use latent_distill::quantize::{archive_quantize, dequantize, quantize_affine, QuantPolicy};
use latent_distill::{fold, mode_product, unfold, Matrix, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_extent, 1..=max_order)
}

fn tensor_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = Tensor> {
    shape_strategy(max_order, max_extent).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-10.0f64..10.0, n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(t in tensor_strategy(4, 5), mode in 0usize..4) {
        let mode = mode % t.order();
        let m = unfold(&t, mode).unwrap();
        prop_assert_eq!(m.rows(), t.shape()[mode]);
        prop_assert_eq!(fold(&m, mode, t.shape()).unwrap(), t);
    }

    #[test]
    fn mode_product_matches_unfolded_matmul(t in tensor_strategy(3, 4), mode in 0usize..3, rows in 1usize..4, seed: u64) {
        let mode = mode % t.order();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_vec(
            rows,
            t.shape()[mode],
            (0..rows * t.shape()[mode]).map(|_| rng.random_range(-1.0..1.0)).collect(),
        ).unwrap();
        let lhs = unfold(&mode_product(&t, &a, mode).unwrap(), mode).unwrap();
        let rhs = a.matmul(&unfold(&t, mode).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn svd_reconstructs(rows in 1usize..7, cols in 1usize..7, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let r = svd(&a).unwrap();
        prop_assert!(r.reconstruct(None).max_abs_diff(&a) <= 1e-10 * (1.0 + a.frobenius_norm()));
        prop_assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.u.gram().max_abs_diff(&Matrix::identity(r.u.cols())) <= 1e-10);
        prop_assert!(r.v.gram().max_abs_diff(&Matrix::identity(r.v.cols())) <= 1e-10);
    }

    #[test]
    fn affine_round_trip_bound_and_idempotence(values in prop::collection::vec(-1e3f64..1e3, 1..300)) {
        let t = Tensor::new(vec![values.len()], values).unwrap();
        let q = quantize_affine(&t).unwrap();
        let s = q.scale().unwrap();
        prop_assert!(s > 0.0);
        let d = dequantize(&q).unwrap();
        for (a, b) in t.data().iter().zip(d.data()) {
            prop_assert!((a - b).abs() <= s / 2.0 + 1e-7);
        }
        prop_assert_eq!(quantize_affine(&d).unwrap(), q);
    }

    #[test]
    fn subset_probability_follows_relabeling(seed: u64, n in 2usize..6) {
        // permuting the ground set permutes the subset probabilities
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let rev: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
        let k1 = rbf_kernel(&pts, 1.0).unwrap();
        let k2 = rbf_kernel(&rev, 1.0).unwrap();
        let s = [0usize, n - 1];
        let a = subset_log_prob(&k1, &s).unwrap();
        let b = subset_log_prob(&k2, &[0, n - 1]).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }
}

fn config(precision: Precision) -> ArchiveConfig {
    ArchiveConfig {
        ratio: 0.75,
        method: SelectionMethod::ExactKdpp,
        sigma: SigmaPolicy::Median,
        seed: 0,
        precision,
        truncate_instance_mode: true,
        standardize: false,
        compress: true,
    }
}

/// Bytes the section occupies inside a one-class archive.
fn serialized_section_len(data: SectionData, precision: Precision) -> u64 {
    let shape = data.shape().to_vec();
    let ids: Vec<String> = (0..shape[0]).map(|i| format!("i{i}")).collect();
    let a = DistilledArchive::new(
        config(precision),
        shape[1..].to_vec(),
        shape[0],
        u64::MAX,
        0,
        vec![ClassSection {
            class_id: 0,
            item_ids: ids.clone(),
            log_prob: None,
            data,
        }],
    )
    .unwrap();
    a.to_bytes().unwrap().len() as u64 - header_len(shape.len() - 1, [&ids[..]])
}

#[test]
fn storage_bytes_match_serialized_sections() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..50 {
        let order = rng.random_range(2..=4);
        let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=6)).collect();
        let n: usize = shape.iter().product();
        let z = Tensor::new(shape.clone(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let ratio = [0.1, 0.25, 0.5, 0.75, 1.0][trial % 5];
        let precision = if trial % 2 == 0 { Precision::Fp32 } else { Precision::Fp16 };

        let f = hosvd_decompose(&z, ratio).unwrap();
        let expected = f.storage_bytes(precision);
        assert_eq!(serialized_section_len(SectionData::Hosvd(f), precision), expected, "trial {trial}");

        let cols = n / shape[0];
        let rank = rng.random_range(1..=shape[0].min(cols));
        let s: SvdFactorization = svd_compress(&z, rank).unwrap();
        let expected = s.storage_bytes(precision);
        assert_eq!(serialized_section_len(SectionData::Svd(s), precision), expected, "trial {trial}");
    }
}

#[test]
fn quantized_archive_size_matches_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut tensors = Vec::new();
    for i in 0..12 {
        let shape: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=9)).collect();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        tensors.push(ArchiveTensor::new(format!("layer{i}.weight"), shape, Payload::Fp32(values)).unwrap());
    }
    let a = TensorArchive::new(tensors).unwrap();
    let (q, report) = archive_quantize(&a, &QuantPolicy::default()).unwrap();
    let bytes = q.to_bytes().unwrap();
    assert_eq!(bytes.len() as u64, report.file_bytes);
    assert_eq!(a.to_bytes().unwrap().len() as u64, report.fp32_file_bytes);
    assert_eq!(TensorArchive::from_bytes(&bytes).unwrap(), q);
}

#[test]
fn latent_dataset_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let items = (0..1000)
        .map(|i| LatentItem {
            id: format!("clip-{i:05}"),
            class_id: (i % 10) as u32,
            tensor: Tensor::new(vec![2, 3], (0..6).map(|_| rng.random::<f32>() as f64).collect()).unwrap(),
        })
        .collect();
    let d = LatentDataset::new(vec![2, 3], 10, Vec::new(), items).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.lvdd");
    latent_distill::archive::write_latent_dataset(&path, &d).unwrap();
    let raw = std::fs::read(&path).unwrap();
    assert_eq!(raw.len() as u64, d.encoded_len());
    let back = latent_distill::archive::read_latent_dataset(&path).unwrap();
    assert_eq!(back, d);
    assert_eq!(crc32fast::hash(&back.to_bytes().unwrap()), crc32fast::hash(&raw));
}
