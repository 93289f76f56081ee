//! Diversity-aware subset selection with determinantal point processes.
//!
//! A [`SimilarityKernel`] holds the RBF similarity `L_ij = exp(-|z_i - z_j|² / 2σ²)`
//! over a ground set of vectors. Under the L-ensemble DPP a subset `S` has
//! probability `det(L_S) / det(L + I)`; [`subset_log_prob`] evaluates it.
//!
//! Two selectors are provided:
//!
//! * [`sample_kdpp`] draws an exact sample of fixed size `k`. It
//!   eigendecomposes `L`, picks `k` eigenvectors with probabilities driven by
//!   the elementary symmetric polynomials of the eigenvalues, then samples
//!   items one at a time from the spanned elementary DPP, projecting the
//!   basis after each pick.
//! * [`greedy_map`] grows the subset one item at a time, each time adding the
//!   item with the largest conditional variance (the gain in `log det`),
//!   maintained with incremental Cholesky rows.
//!
//! Ties are broken toward the lowest index everywhere.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{logdet_psd, sym_eig};
use crate::tensor::Matrix;

/// Eigenvalues in `[-PSD_CLAMP_TOL * n, 0)` are treated as zero.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

/// Relative threshold under which an eigenvalue (resp. conditional variance)
/// is considered zero when computing the numerical rank (resp. greedy gains).
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SimilarityKernel {
    l: Matrix,
    sigma: f64,
}

impl SimilarityKernel {
    /// Wraps an arbitrary symmetric PSD matrix; `sigma` is recorded but not used.
    pub fn from_matrix(l: Matrix, sigma: f64) -> Result<Self> {
        if l.rows() != l.cols() {
            return Err(Error::shape("kernel must be square"));
        }
        if !l.is_finite() {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(SimilarityKernel { l, sigma })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.l
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.l.rows()
    }

    /// `log det(L + I)`, the DPP normalizer.
    pub fn log_normalizer(&self) -> Result<f64> {
        let n = self.n();
        let mut shifted = self.l.clone();
        for i in 0..n {
            shifted.set(i, i, shifted.get(i, i) + 1.0);
        }
        logdet_psd(&shifted)
    }

    /// Kernel multiplied by a positive constant.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::invalid("scale factor must be positive"));
        }
        let data = self.l.data().iter().map(|x| x * factor).collect();
        let l = Matrix::from_vec(self.n(), self.n(), data)?;
        Ok(SimilarityKernel { l, sigma: self.sigma })
    }
}

/// How the RBF bandwidth is chosen for a point set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaPolicy {
    Median,
    Fixed(f64),
}

impl SigmaPolicy {
    pub fn resolve<P: AsRef<[f64]>>(self, points: &[P]) -> Result<f64> {
        match self {
            SigmaPolicy::Median => median_heuristic_sigma(points),
            SigmaPolicy::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            SigmaPolicy::Fixed(s) => Err(Error::invalid(format!("bandwidth must be positive, got {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMethod {
    ExactKdpp,
    GreedyMap,
}

impl SelectionMethod {
    pub fn code(self) -> u8 {
        match self {
            SelectionMethod::ExactKdpp => 0,
            SelectionMethod::GreedyMap => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SelectionMethod::ExactKdpp),
            1 => Some(SelectionMethod::GreedyMap),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Strictly increasing indices into the ground set.
    pub indices: Vec<usize>,
    /// `log P(S)` under the unconstrained DPP, when requested.
    pub log_prob: Option<f64>,
    pub method: SelectionMethod,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_log_prob(mut self, kernel: &SimilarityKernel) -> Result<Self> {
        self.log_prob = Some(subset_log_prob(kernel, &self.indices)?);
        Ok(self)
    }
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let dim = points
        .first()
        .map(|p| p.as_ref().len())
        .ok_or_else(|| Error::invalid("point set is empty"))?;
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.as_ref().len() != dim) {
        return Err(Error::shape(format!(
            "point {i} has dimension {}, expected {dim}",
            p.as_ref().len()
        )));
    }
    if points.iter().any(|p| p.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("point set"));
    }
    Ok(dim)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// RBF similarity kernel over `points` with bandwidth `sigma`.
pub fn rbf_kernel<P: AsRef<[f64]>>(points: &[P], sigma: f64) -> Result<SimilarityKernel> {
    check_points(points)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    let n = points.len();
    let denom = 2.0 * sigma * sigma;
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-squared_distance(points[i].as_ref(), points[j].as_ref()) / denom).exp();
            l.set(i, j, v);
            l.set(j, i, v);
        }
    }
    Ok(SimilarityKernel { l, sigma })
}

/// Median of all pairwise Euclidean distances (mean of the two middle values
/// when the count is even).
pub fn median_heuristic_sigma<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    check_points(points)?;
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateBandwidth("need at least two points"));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(squared_distance(points[i].as_ref(), points[j].as_ref()).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    if median > 0.0 {
        Ok(median)
    } else if d.last().copied().unwrap_or(0.0) == 0.0 {
        Err(Error::DegenerateBandwidth("all points are identical"))
    } else {
        Err(Error::DegenerateBandwidth("median pairwise distance is zero"))
    }
}

fn check_indices(n: usize, indices: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::Index {
                what: "ground set",
                index: i,
                len: n,
            });
        }
        if seen[i] {
            return Err(Error::invalid(format!("index {i} repeated in subset")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `log det(A)` for a PSD principal submatrix, or `-inf` when a Cholesky
/// pivot falls to the rounding floor (rank-deficient minor).
fn minor_log_det(a: &Matrix) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    let scale = (0..n).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    let floor = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > floor) {
            return f64::NEG_INFINITY;
        }
        let djj = d.sqrt();
        acc += d.ln();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut x = a.get(i, j);
            for k in 0..j {
                x -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, x / djj);
        }
    }
    acc
}

/// `log det(L_S) - log det(L + I)`; `-inf` when `L_S` is numerically singular.
pub fn subset_log_prob(kernel: &SimilarityKernel, indices: &[usize]) -> Result<f64> {
    check_indices(kernel.n(), indices)?;
    let norm = kernel.log_normalizer()?;
    let minor = kernel.l.principal_submatrix(indices);
    Ok(minor_log_det(&minor) - norm)
}

/// Eigenvalues with small negative noise clamped to zero.
fn clamped_spectrum(kernel: &SimilarityKernel) -> Result<(Vec<f64>, Matrix)> {
    let n = kernel.n();
    let eig = sym_eig(&kernel.l)?;
    let floor = -PSD_CLAMP_TOL * n as f64;
    let top = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let mut lambda = Vec::with_capacity(n);
    for &v in &eig.eigenvalues {
        if v < floor {
            return Err(Error::PsdViolation { eigenvalue: v });
        }
        // below the rank floor the eigenvalue is rounding noise
        lambda.push(if v <= RANK_TOL * top { 0.0 } else { v });
    }
    Ok((lambda, eig.eigenvectors))
}

/// Numerical rank of the kernel (eigenvalues above `RANK_TOL · λ_max`).
pub fn numerical_rank(kernel: &SimilarityKernel) -> Result<usize> {
    Ok(clamped_spectrum(kernel)?.0.iter().filter(|&&v| v > 0.0).count())
}

/// Elementary symmetric polynomials `e[l][m] = e_l(λ_1..λ_m)` for `l <= k`.
///
/// Row `l` is computed by the recurrence
/// `e_l(λ_1..λ_m) = e_l(λ_1..λ_{m-1}) + λ_m · e_{l-1}(λ_1..λ_{m-1})`.
pub fn elementary_symmetric_table(lambda: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = lambda.len();
    let mut e = vec![vec![0.0; n + 1]; k + 1];
    e[0].iter_mut().for_each(|x| *x = 1.0);
    for l in 1..=k {
        for m in 1..=n {
            e[l][m] = e[l][m - 1] + lambda[m - 1] * e[l - 1][m - 1];
        }
    }
    e
}

/// Exact sample from the k-DPP `P(S) ∝ det(L_S)`, `|S| = size`.
pub fn sample_kdpp<R: Rng + ?Sized>(
    kernel: &SimilarityKernel,
    size: usize,
    rng: &mut R,
) -> Result<Selection> {
    let n = kernel.n();
    if size == 0 {
        return Ok(Selection {
            indices: Vec::new(),
            log_prob: None,
            method: SelectionMethod::ExactKdpp,
        });
    }
    let (lambda, vectors) = clamped_spectrum(kernel)?;
    let rank = lambda.iter().filter(|&&v| v > 0.0).count();
    if size > rank {
        return Err(Error::InfeasibleSize { size, rank });
    }

    // Phase 1: choose eigenvectors, scanning from the last.
    let e = elementary_symmetric_table(&lambda, size);
    let mut chosen = Vec::with_capacity(size);
    let mut remaining = size;
    for m in (1..=n).rev() {
        if remaining == 0 {
            break;
        }
        let p = if remaining == m {
            1.0
        } else {
            lambda[m - 1] * e[remaining - 1][m - 1] / e[remaining][m]
        };
        let u: f64 = rng.random();
        if u < p {
            chosen.push(m - 1);
            remaining -= 1;
        }
    }
    debug_assert_eq!(chosen.len(), size);

    // Phase 2: sample from the elementary DPP spanned by the chosen vectors.
    let mut basis: Vec<Vec<f64>> = chosen.iter().map(|&j| vectors.column(j)).collect();
    let mut picked = Vec::with_capacity(size);
    while !basis.is_empty() {
        let weights: Vec<f64> = (0..n)
            .map(|i| basis.iter().map(|v| v[i] * v[i]).sum::<f64>())
            .collect();
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut item = None;
        for (i, w) in weights.iter().enumerate() {
            if *w <= 0.0 || picked.contains(&i) {
                continue;
            }
            acc += w;
            item = Some(i);
            if acc > target {
                break;
            }
        }
        let item = item.ok_or_else(|| Error::invalid("elementary DPP has no mass left"))?;
        picked.push(item);

        // Remove the component along e_item: pivot on the basis vector with
        // the largest entry at `item`, eliminate it from the others, then
        // re-orthonormalize.
        let pivot = (0..basis.len())
            .max_by(|&a, &b| basis[a][item].abs().total_cmp(&basis[b][item].abs()))
            .expect("basis is non-empty");
        let pv = basis.swap_remove(pivot);
        for v in basis.iter_mut() {
            let f = v[item] / pv[item];
            for (x, p) in v.iter_mut().zip(&pv) {
                *x -= f * p;
            }
            v[item] = 0.0;
        }
        gram_schmidt(&mut basis);
    }
    picked.sort_unstable();
    Ok(Selection {
        indices: picked,
        log_prob: None,
        method: SelectionMethod::ExactKdpp,
    })
}

fn gram_schmidt(basis: &mut [Vec<f64>]) {
    for j in 0..basis.len() {
        for _ in 0..2 {
            for k in 0..j {
                let proj: f64 = basis[j].iter().zip(&basis[k]).map(|(a, b)| a * b).sum();
                let (head, tail) = basis.split_at_mut(j);
                for (x, b) in tail[0].iter_mut().zip(&head[k]) {
                    *x -= proj * b;
                }
            }
        }
        let norm = basis[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            basis[j].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Greedy MAP selection; indices in the order they were picked.
///
/// Items whose conditional variance has fallen to `RANK_TOL · max(L_ii)` or
/// below have gain `-inf`; they are only taken once nothing else is left.
pub fn greedy_map_sequence(kernel: &SimilarityKernel, size: usize) -> Result<Vec<usize>> {
    let n = kernel.n();
    if size == 0 || size > n {
        return Err(Error::invalid(format!(
            "greedy selection size must be in 1..={n}, got {size}"
        )));
    }
    let l = &kernel.l;
    let scale = (0..n).map(|i| l.get(i, i)).fold(0.0f64, f64::max);
    let floor = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    // cond[i] = conditional variance of i given the picked set
    let mut cond: Vec<f64> = (0..n).map(|i| l.get(i, i)).collect();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(size); n];
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(size);

    while order.len() < size {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] || !(cond[i] > floor) {
                continue;
            }
            if best.is_none_or(|b| cond[i] > cond[b]) {
                best = Some(i);
            }
        }
        let j = match best {
            Some(j) => j,
            None => (0..n).find(|&i| !taken[i]).expect("size <= n"),
        };
        taken[j] = true;
        order.push(j);
        if order.len() == size {
            break;
        }
        let dj = cond[j];
        if !(dj > floor) {
            continue;
        }
        let sd = dj.sqrt();
        let cj = rows[j].clone();
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let dot: f64 = cj.iter().zip(&rows[i]).map(|(a, b)| a * b).sum();
            let e = (l.get(j, i) - dot) / sd;
            rows[i].push(e);
            cond[i] -= e * e;
        }
    }
    Ok(order)
}

pub fn greedy_map(kernel: &SimilarityKernel, size: usize) -> Result<Selection> {
    let mut indices = greedy_map_sequence(kernel, size)?;
    indices.sort_unstable();
    Ok(Selection {
        indices,
        log_prob: None,
        method: SelectionMethod::GreedyMap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn rbf_basic_values() {
        let k = rbf_kernel(&[vec![1.0, 2.0], vec![1.0, 2.0]], 0.7).unwrap();
        assert_eq!(k.matrix().data(), &[1.0, 1.0, 1.0, 1.0]);
        let k = rbf_kernel(&[vec![0.0, 0.0], vec![2.0, 0.0]], 2f64.sqrt()).unwrap();
        assert!((k.matrix().get(0, 1) - (-1f64).exp()).abs() < 1e-15);
        assert!((k.matrix().get(0, 1) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn rbf_matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 10, 4);
        let sigma = 0.8;
        let k = rbf_kernel(&pts, sigma).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let mut d2 = 0.0;
                for t in 0..4 {
                    d2 += (pts[i][t] - pts[j][t]).powi(2);
                }
                let want = (-d2 / (2.0 * sigma * sigma)).exp();
                assert!((k.matrix().get(i, j) - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn rbf_rejects_bad_input() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(rbf_kernel(&empty, 1.0).is_err());
        assert!(rbf_kernel(&[vec![1.0], vec![1.0, 2.0]], 1.0).is_err());
        assert!(rbf_kernel(&[vec![1.0]], 0.0).is_err());
        assert!(rbf_kernel(&[vec![1.0]], -1.0).is_err());
    }

    #[test]
    fn median_heuristic_cases() {
        let line = [vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(median_heuristic_sigma(&line).unwrap(), 1.0);
        let two = [vec![0.0, 0.0], vec![3.0, 4.0]];
        assert_eq!(median_heuristic_sigma(&two).unwrap(), 5.0);
        let same = [vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            median_heuristic_sigma(&same),
            Err(Error::DegenerateBandwidth(_))
        ));
        assert!(median_heuristic_sigma(&[vec![1.0]]).is_err());
    }

    #[test]
    fn median_matches_sorted_distance_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 50, 3);
        let mut all = Vec::new();
        for i in 0..50 {
            for j in 0..50 {
                if i < j {
                    let d: f64 = (0..3).map(|t| (pts[i][t] - pts[j][t]).powi(2)).sum();
                    all.push(d.sqrt());
                }
            }
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // 1225 distances: odd count, the middle one
        assert_eq!(all.len(), 1225);
        assert_eq!(median_heuristic_sigma(&pts).unwrap(), all[612]);
    }

    #[test]
    fn identity_kernel_probabilities() {
        let k = SimilarityKernel::from_matrix(Matrix::identity(1), 1.0).unwrap();
        assert!((subset_log_prob(&k, &[]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((subset_log_prob(&k, &[0]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_points_have_zero_probability() {
        let pts = [vec![0.0], vec![0.0], vec![1.0]];
        let k = rbf_kernel(&pts, 1.0).unwrap();
        assert_eq!(subset_log_prob(&k, &[0, 1]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(subset_log_prob(&k, &[0, 1, 2]).unwrap(), f64::NEG_INFINITY);
        assert!(subset_log_prob(&k, &[0, 2]).unwrap().is_finite());
        assert!(subset_log_prob(&k, &[0, 0]).is_err());
        assert!(subset_log_prob(&k, &[3]).is_err());
    }

    #[test]
    fn singleton_log_prob_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 6, 2);
        let k = rbf_kernel(&pts, 0.5).unwrap().scaled(2.5).unwrap();
        let norm = k.log_normalizer().unwrap();
        for i in 0..6 {
            let want = k.matrix().get(i, i).ln() - norm;
            assert!((subset_log_prob(&k, &[i]).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one_over_power_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 4, 3);
        let k = rbf_kernel(&pts, 0.9).unwrap();
        let total: f64 = (0u32..16)
            .map(|mask| {
                let s: Vec<usize> = (0..4).filter(|b| mask & (1 << b) != 0).collect();
                subset_log_prob(&k, &s).unwrap().exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn esp_table_small_case() {
        let e = elementary_symmetric_table(&[1.0, 2.0, 3.0], 3);
        assert_eq!(e[1][3], 6.0);
        assert_eq!(e[2][3], 11.0);
        assert_eq!(e[3][3], 6.0);
        assert_eq!(e[2][2], 2.0);
    }

    #[test]
    fn kdpp_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = SimilarityKernel::from_matrix(Matrix::identity(3), 1.0).unwrap();
        let s = sample_kdpp(&k, 0, &mut rng).unwrap();
        assert!(s.is_empty());
        let s = sample_kdpp(&k, 3, &mut rng).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert!(matches!(
            sample_kdpp(&k, 4, &mut rng),
            Err(Error::InfeasibleSize { size: 4, rank: 3 })
        ));
        let dup = rbf_kernel(&[vec![0.0], vec![0.0]], 1.0).unwrap();
        assert!(matches!(
            sample_kdpp(&dup, 2, &mut rng),
            Err(Error::InfeasibleSize { size: 2, rank: 1 })
        ));
    }

    #[test]
    fn kdpp_rejects_indefinite_kernel() {
        let l = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let k = SimilarityKernel::from_matrix(l, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            sample_kdpp(&k, 1, &mut rng),
            Err(Error::PsdViolation { .. })
        ));
    }

    #[test]
    fn kdpp_identity_kernel_is_uniform_over_pairs() {
        let k = SimilarityKernel::from_matrix(Matrix::identity(3), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let s = sample_kdpp(&k, 2, &mut rng).unwrap();
            let slot = match s.indices.as_slice() {
                [0, 1] => 0,
                [0, 2] => 1,
                [1, 2] => 2,
                other => panic!("unexpected {other:?}"),
            };
            counts[slot] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn kdpp_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = random_points(&mut rng, 12, 3);
        let k = rbf_kernel(&pts, 0.6).unwrap();
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_kdpp(&k, 4, &mut r).unwrap().indices).collect::<Vec<_>>()
        };
        assert_eq!(draw(99), draw(99));
    }

    #[test]
    fn greedy_size_one_takes_first_max_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 5, 2);
        let k = rbf_kernel(&pts, 1.0).unwrap();
        assert_eq!(greedy_map(&k, 1).unwrap().indices, vec![0]);
        let l = Matrix::diag(&[1.0, 3.0, 3.0, 2.0]);
        let k = SimilarityKernel::from_matrix(l, 1.0).unwrap();
        assert_eq!(greedy_map(&k, 1).unwrap().indices, vec![1]);
        assert!(greedy_map(&k, 0).is_err());
        assert!(greedy_map(&k, 5).is_err());
    }

    #[test]
    fn greedy_never_repeats_a_duplicate_while_alternatives_remain() {
        // points 0 and 2 coincide
        let pts = [vec![0.0, 0.0], vec![1.0, 0.3], vec![0.0, 0.0], vec![-0.4, 0.9]];
        let k = rbf_kernel(&pts, 0.8).unwrap();
        let seq = greedy_map_sequence(&k, 3).unwrap();
        assert!(!(seq.contains(&0) && seq.contains(&2)), "{seq:?}");
        let all = greedy_map_sequence(&k, 4).unwrap();
        assert_eq!(all.len(), 4);
        // the duplicate is the last one picked
        assert!(all[3] == 0 || all[3] == 2);
    }

    #[test]
    fn greedy_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = random_points(&mut rng, 9, 3);
        let k = rbf_kernel(&pts, 0.7).unwrap();
        let base = greedy_map_sequence(&k, 5).unwrap();
        for f in [0.25, 4.0, 3.7] {
            assert_eq!(greedy_map_sequence(&k.scaled(f).unwrap(), 5).unwrap(), base);
        }
    }
}
