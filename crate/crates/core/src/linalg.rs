//! Dense SVD, symmetric eigendecomposition and Cholesky log-determinants.
//!
//! The SVD reduces the input to a square triangular factor with Householder
//! QR and then runs one-sided (Hestenes) Jacobi on that factor. Wide inputs
//! are handled through their transpose, which for a row-major matrix is the
//! same buffer read column-major, so the unfoldings HOSVD feeds in are never
//! copied. The symmetric eigensolver is cyclic two-sided Jacobi.
//!
//! Output is deterministic: singular values are sorted descending (eigenvalues
//! ascending) with a stable sort, and every left singular vector / eigenvector
//! is signed so that its largest-magnitude entry (first one on ties) is
//! non-negative.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Sweep cap for both Jacobi iterations.
pub const JACOBI_MAX_SWEEPS: usize = 1000;

/// Pairs of columns count as orthogonal once `|<a,b>| <= tol * |a| |b|`.
pub const SVD_ORTHOGONALITY_TOL: f64 = 1e-14;

/// The eigensolver stops once the off-diagonal Frobenius mass drops below
/// this fraction of the full Frobenius norm.
pub const EIG_OFFDIAG_TOL: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x r` with orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative, length `r = min(m, n)`.
    pub singular_values: Vec<f64>,
    /// `n x r` with orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    /// `U · diag(S) · Vᵀ`, optionally keeping only the leading `rank` triplets.
    pub fn reconstruct(&self, rank: Option<usize>) -> Matrix {
        let r = rank.unwrap_or(self.singular_values.len()).min(self.singular_values.len());
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for k in 0..r {
            let s = self.singular_values[k];
            for i in 0..m {
                let a = self.u.get(i, k) * s;
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let cur = out.get(i, j);
                    out.set(i, j, cur + a * self.v.get(j, k));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

/// Column-major scratch matrix used by the factorizations.
struct ColMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        ColMajor {
            rows: n,
            cols: n,
            data,
        }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let r = self.rows;
        let (head, tail) = self.data.split_at_mut(q * r);
        (&mut head[p * r..(p + 1) * r], &mut tail[..r])
    }

    fn to_row_major(&self, order: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, order.len());
        for (k, &j) in order.iter().enumerate() {
            for (i, v) in self.col(j).iter().enumerate() {
                m.set(i, k, *v);
            }
        }
        m
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder reflectors of a tall matrix plus its `n x n` R factor.
struct Householder {
    /// Reflector `k` acts on rows `k..m`; `betas[k] == 0` marks the identity.
    vectors: Vec<Vec<f64>>,
    betas: Vec<f64>,
    r: ColMajor,
}

fn householder_qr(mut a: ColMajor) -> Householder {
    let (m, n) = (a.rows, a.cols);
    debug_assert!(m >= n);
    let mut vectors = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    for k in 0..n {
        let x = &a.col(k)[k..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            vectors.push(Vec::new());
            betas.push(0.0);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let beta = if vv > 0.0 { 2.0 / vv } else { 0.0 };
        {
            let ck = a.col_mut(k);
            ck[k] = alpha;
            for e in &mut ck[k + 1..] {
                *e = 0.0;
            }
        }
        if beta != 0.0 {
            for j in k + 1..n {
                let cj = &mut a.col_mut(j)[k..];
                let w = beta * dot(&v, cj);
                for (c, vi) in cj.iter_mut().zip(&v) {
                    *c -= w * vi;
                }
            }
        }
        vectors.push(v);
        betas.push(beta);
    }
    let mut r = ColMajor {
        rows: n,
        cols: n,
        data: vec![0.0; n * n],
    };
    for j in 0..n {
        r.col_mut(j)[..=j].copy_from_slice(&a.col(j)[..=j]);
    }
    Householder { vectors, betas, r }
}

impl Householder {
    /// `Q · [x; 0]` for an `n`-vector `x`, as an `m`-vector.
    fn apply_q(&self, x: &[f64], m: usize) -> Vec<f64> {
        let mut y = vec![0.0; m];
        y[..x.len()].copy_from_slice(x);
        for k in (0..self.betas.len()).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.vectors[k];
            let seg = &mut y[k..];
            let w = beta * dot(v, seg);
            for (s, vi) in seg.iter_mut().zip(v) {
                *s -= w * vi;
            }
        }
        y
    }
}

/// Columns with norm at or below this are numerically zero.
fn negligible_norm(w: &ColMajor) -> f64 {
    let frob = dot(&w.data, &w.data).sqrt();
    w.cols as f64 * f64::EPSILON * frob
}

/// One-sided Jacobi on a square matrix: finds `V` with `W·V` column-orthogonal.
/// Returns (`W·V`, `V`). Pairs involving a numerically zero column are skipped;
/// rotating such a column against a large one only moves rounding noise.
fn one_sided_jacobi(mut w: ColMajor) -> Result<(ColMajor, ColMajor)> {
    let n = w.cols;
    let tiny = negligible_norm(&w);
    let floor = tiny * tiny;
    let mut v = ColMajor::identity(n);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (wp, wq) = w.two_cols_mut(p, q);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if alpha <= floor || beta <= floor {
                    continue;
                }
                if gamma.abs() <= SVD_ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = v.two_cols_mut(p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::Convergence {
        algorithm: "one-sided Jacobi SVD",
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

#[inline]
fn rotate(p: &mut [f64], q: &mut [f64], c: f64, s: f64) {
    for (a, b) in p.iter_mut().zip(q.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Orthonormalizes column `j` of `u` against columns `0..j` using standard
/// basis candidates; used for columns whose singular value is exactly zero.
fn complete_column(u: &mut ColMajor, filled: &[usize], j: usize) {
    let n = u.rows;
    for e in 0..n {
        let mut cand = vec![0.0; n];
        cand[e] = 1.0;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for &k in filled {
                let proj = dot(u.col(k), &cand);
                for (c, uk) in cand.iter_mut().zip(u.col(k)) {
                    *c -= proj * uk;
                }
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm > 0.5 {
            for c in &mut cand {
                *c /= norm;
            }
            u.col_mut(j).copy_from_slice(&cand);
            return;
        }
    }
    unreachable!("standard basis always spans the complement");
}

/// SVD of a tall column-major matrix (`rows >= cols`).
///
/// Returns the left factor of R (`n x n`, column-major), the singular values
/// and V, all already sorted descending. `Q` is kept for callers that need
/// the tall left factor.
struct TallSvd {
    qr: Householder,
    rows: usize,
    left_small: ColMajor,
    sigma: Vec<f64>,
    v: ColMajor,
}

fn tall_svd(a: ColMajor) -> Result<TallSvd> {
    let rows = a.rows;
    let n = a.cols;
    let qr = householder_qr(a);
    let r = ColMajor {
        rows: n,
        cols: n,
        data: qr.r.data.clone(),
    };
    let tiny = negligible_norm(&r);
    let (w, v) = one_sided_jacobi(r)?;
    let norms: Vec<f64> = (0..n)
        .map(|j| {
            let s = dot(w.col(j), w.col(j)).sqrt();
            if s > tiny {
                s
            } else {
                0.0
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut left = ColMajor {
        rows: n,
        cols: n,
        data: vec![0.0; n * n],
    };
    let mut v_sorted = ColMajor {
        rows: n,
        cols: n,
        data: vec![0.0; n * n],
    };
    let mut sigma = Vec::with_capacity(n);
    let mut filled = Vec::with_capacity(n);
    let mut empty = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        v_sorted.col_mut(k).copy_from_slice(v.col(j));
        if s > 0.0 {
            let dst = left.col_mut(k);
            for (d, x) in dst.iter_mut().zip(w.col(j)) {
                *d = x / s;
            }
            filled.push(k);
        } else {
            empty.push(k);
        }
    }
    for k in empty {
        complete_column(&mut left, &filled, k);
        filled.push(k);
    }
    Ok(TallSvd {
        qr,
        rows,
        left_small: left,
        sigma,
        v: v_sorted,
    })
}

impl TallSvd {
    fn left_full(&self) -> ColMajor {
        let n = self.left_small.cols;
        let mut out = ColMajor {
            rows: self.rows,
            cols: n,
            data: Vec::with_capacity(self.rows * n),
        };
        for j in 0..n {
            out.data.extend(self.qr.apply_q(self.left_small.col(j), self.rows));
        }
        out
    }
}

fn sign_of_largest(col: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in col {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

fn fix_signs(u: &mut ColMajor, v: &mut ColMajor) {
    for j in 0..u.cols {
        if sign_of_largest(u.col(j)) < 0.0 {
            for x in u.col_mut(j) {
                *x = -*x;
            }
            for x in v.col_mut(j) {
                *x = -*x;
            }
        }
    }
}

fn check_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Thin SVD `A = U · diag(S) · Vᵀ` with `r = min(m, n)` triplets.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    check_finite(a, "svd input")?;
    let (m, n) = (a.rows(), a.cols());
    let identity_order: Vec<usize> = (0..m.min(n)).collect();
    if m >= n {
        let tall = tall_svd(ColMajor {
            rows: m,
            cols: n,
            data: a.transpose().into_data(),
        })?;
        let mut u = tall.left_full();
        let mut v = tall.v;
        fix_signs(&mut u, &mut v);
        Ok(SvdResult {
            u: u.to_row_major(&identity_order),
            singular_values: tall.sigma,
            v: v.to_row_major(&identity_order),
        })
    } else {
        // Aᵀ (n x m) column-major is A's row-major buffer.
        let tall = tall_svd(ColMajor {
            rows: n,
            cols: m,
            data: a.data().to_vec(),
        })?;
        let mut v = tall.left_full();
        let mut u = tall.v;
        fix_signs(&mut u, &mut v);
        Ok(SvdResult {
            u: u.to_row_major(&identity_order),
            singular_values: tall.sigma,
            v: v.to_row_major(&identity_order),
        })
    }
}

/// Left singular vectors (`m x min(m, n)`) and singular values only.
///
/// Cheaper than [`svd`] for wide inputs because the orthogonal factor of the
/// QR step is never formed. Signs follow the same convention as [`svd`].
pub fn left_singular_vectors(a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    check_finite(a, "svd input")?;
    let (m, n) = (a.rows(), a.cols());
    if m >= n {
        let r = svd(a)?;
        return Ok((r.u, r.singular_values));
    }
    let tall = tall_svd(ColMajor {
        rows: n,
        cols: m,
        data: a.data().to_vec(),
    })?;
    let mut u = tall.v;
    for j in 0..u.cols {
        if sign_of_largest(u.col(j)) < 0.0 {
            for x in u.col_mut(j) {
                *x = -*x;
            }
        }
    }
    let order: Vec<usize> = (0..m).collect();
    Ok((u.to_row_major(&order), tall.sigma))
}

/// Eigendecomposition of a symmetric matrix (symmetrized as `(A + Aᵀ)/2`).
pub fn sym_eig(a: &Matrix) -> Result<EigResult> {
    check_finite(a, "eigensolver input")?;
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!("eigensolver needs a square matrix, got {}x{}", n, a.cols())));
    }
    let scale = a.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (a.get(i, j), a.get(j, i));
            if (x - y).abs() > 1e-8 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i},{j}): {x} vs {y}"
                )));
            }
            s[i * n + j] = 0.5 * (x + y);
        }
    }
    let fro = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = ColMajor::identity(n);

    let mut converged = false;
    for _sweep in 0..=JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i * n + j] * s[i * n + j])
            .sum();
        if off == 0.0 || off.sqrt() <= EIG_OFFDIAG_TOL * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = s[k * n + p];
                    let akq = s[k * n + q];
                    s[k * n + p] = c * akp - sn * akq;
                    s[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = s[p * n + k];
                    let aqk = s[q * n + k];
                    s[p * n + k] = c * apk - sn * aqk;
                    s[q * n + k] = sn * apk + c * aqk;
                }
                s[p * n + q] = 0.0;
                s[q * n + p] = 0.0;
                let (vp, vq) = v.two_cols_mut(p, q);
                rotate(vp, vq, c, sn);
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            algorithm: "cyclic Jacobi eigensolver",
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let diag: Vec<f64> = (0..n).map(|i| s[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    for j in 0..n {
        if sign_of_largest(v.col(j)) < 0.0 {
            for x in v.col_mut(j) {
                *x = -*x;
            }
        }
    }
    Ok(EigResult {
        eigenvalues: order.iter().map(|&i| diag[i]).collect(),
        eigenvectors: v.to_row_major(&order),
    })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    check_finite(a, "cholesky input")?;
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!("cholesky needs a square matrix, got {}x{}", n, a.cols())));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in j + 1..n {
            let mut x = a.get(i, j);
            for k in 0..j {
                x -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, x / djj);
        }
    }
    Ok(l)
}

/// `log det(A)` for symmetric positive-definite `A`, via Cholesky.
pub fn logdet_psd(a: &Matrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * (0..l.rows()).map(|i| l.get(i, i).ln()).sum::<f64>())
}
