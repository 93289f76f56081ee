//! Dense real tensors and matrices.
//!
//! Both types are row-major: the last index varies fastest. The mode-`m`
//! unfolding of a tensor with shape `(d_0, .., d_{n-1})` is the
//! `d_m x (N / d_m)` matrix whose row `i` collects every element with
//! index `i` at position `m`. Columns enumerate the remaining indices in
//! their original order, rightmost fastest, so for shape `(d0, d1, d2)` and
//! `m = 1` the column of element `(a, i, c)` is `a * d2 + c`.
//!
//! With this convention mode 0 unfolding is a plain reshape of the row-major
//! buffer, which the pipeline relies on when it flattens instance stacks.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows"));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`, exploiting symmetry.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..n {
                    out.data[i * n + j] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        let mut out = Matrix::zeros(self.rows, k);
        for i in 0..self.rows {
            out.data[i * k..(i + 1) * k].copy_from_slice(&self.row(i)[..k]);
        }
        out
    }

    /// Principal submatrix on the given (row = column) indices.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Matrix {
        let k = indices.len();
        let mut out = Matrix::zeros(k, k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.data[a * k + b] = self.get(i, j);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                write!(f, " {:10.4e}", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Tensor {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn squared_distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "cannot compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// `‖self - other‖_F / ‖self‖_F`, or the absolute distance when `self` is zero.
    pub fn relative_error(&self, other: &Tensor) -> Result<f64> {
        let d = self.squared_distance(other)?.sqrt();
        let n = self.frobenius_norm();
        Ok(if n > 0.0 { d / n } else { d })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Same data under a different shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    /// (outer, extent, inner) block decomposition around `mode`.
    fn split_at_mode(&self, mode: usize) -> (usize, usize, usize) {
        let outer = self.shape[..mode].iter().product();
        let inner = self.shape[mode + 1..].iter().product();
        (outer, self.shape[mode], inner)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::Index {
                what: "tensor mode",
                index: mode,
                len: self.order(),
            });
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::shape("tensor order must be at least 1"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("tensor extents must be positive, got {shape:?}")));
    }
    Ok(())
}

/// Mode-`mode` unfolding; see the module docs for the column ordering.
pub fn unfold(t: &Tensor, mode: usize) -> Result<Matrix> {
    t.check_mode(mode)?;
    let (outer, extent, inner) = t.split_at_mode(mode);
    let cols = outer * inner;
    let mut data = vec![0.0; extent * cols];
    for o in 0..outer {
        for i in 0..extent {
            let src = &t.data[(o * extent + i) * inner..(o * extent + i + 1) * inner];
            data[i * cols + o * inner..i * cols + (o + 1) * inner].copy_from_slice(src);
        }
    }
    Ok(Matrix {
        rows: extent,
        cols,
        data,
    })
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<Tensor> {
    check_shape(shape)?;
    if mode >= shape.len() {
        return Err(Error::Index {
            what: "tensor mode",
            index: mode,
            len: shape.len(),
        });
    }
    let outer: usize = shape[..mode].iter().product();
    let inner: usize = shape[mode + 1..].iter().product();
    let extent = shape[mode];
    if m.rows != extent || m.cols != outer * inner {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot fold into {shape:?} along mode {mode}",
            m.rows, m.cols
        )));
    }
    let cols = m.cols;
    let mut data = vec![0.0; extent * cols];
    for o in 0..outer {
        for i in 0..extent {
            data[(o * extent + i) * inner..(o * extent + i + 1) * inner]
                .copy_from_slice(&m.data[i * cols + o * inner..i * cols + (o + 1) * inner]);
        }
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data,
    })
}

/// Mode-`mode` tensor-matrix product `t ×_mode m`.
///
/// Computed blockwise without materialising the unfolding; the result equals
/// `fold(m · unfold(t, mode), mode, new_shape)`.
pub fn mode_product(t: &Tensor, m: &Matrix, mode: usize) -> Result<Tensor> {
    t.check_mode(mode)?;
    let (outer, extent, inner) = t.split_at_mode(mode);
    if m.cols != extent {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot act on mode {mode} of extent {extent}",
            m.rows, m.cols
        )));
    }
    let p = m.rows;
    let mut shape = t.shape.clone();
    shape[mode] = p;
    let mut data = vec![0.0; outer * p * inner];
    for o in 0..outer {
        let src_block = &t.data[o * extent * inner..(o + 1) * extent * inner];
        let dst_block = &mut data[o * p * inner..(o + 1) * p * inner];
        for a in 0..p {
            let dst = &mut dst_block[a * inner..(a + 1) * inner];
            for i in 0..extent {
                let w = m.data[a * extent + i];
                if w == 0.0 {
                    continue;
                }
                let src = &src_block[i * inner..(i + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(Tensor { shape, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(r, c, data).unwrap()
    }

    fn rel_diff(a: &Tensor, b: &Tensor) -> f64 {
        a.squared_distance(b).unwrap().sqrt() / a.frobenius_norm().max(1e-300)
    }

    #[test]
    fn vector_unfolds_to_column() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let m = unfold(&t, 0).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 1));
        assert_eq!(m.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(fold(&m, 0, &[3]).unwrap(), t);
    }

    #[test]
    fn matrix_mode0_unfolding_is_itself() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = unfold(&t, 0).unwrap();
        assert_eq!(m, Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        // mode 1 of a matrix is its transpose
        assert_eq!(unfold(&t, 1).unwrap(), m.transpose());
    }

    #[test]
    fn unfolding_column_order() {
        // shape (2,3,2), element (a,i,c) = 100a + 10i + c
        let mut data = Vec::new();
        for a in 0..2 {
            for i in 0..3 {
                for c in 0..2 {
                    data.push((100 * a + 10 * i + c) as f64);
                }
            }
        }
        let t = Tensor::new(vec![2, 3, 2], data).unwrap();
        let m = unfold(&t, 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 4));
        assert_eq!(m.row(2), &[20.0, 21.0, 120.0, 121.0]);
    }

    #[test]
    fn fold_unfold_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let order = rng.random_range(1..=4);
            let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=5)).collect();
            let t = random_tensor(&mut rng, &shape);
            for m in 0..order {
                let back = fold(&unfold(&t, m).unwrap(), m, &shape).unwrap();
                assert_eq!(back, t);
            }
        }
        let t = random_tensor(&mut rng, &[3, 4, 5]);
        for m in 0..3 {
            assert_eq!(fold(&unfold(&t, m).unwrap(), m, &[3, 4, 5]).unwrap(), t);
        }
    }

    #[test]
    fn bad_mode_and_shapes_are_rejected() {
        let t = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(unfold(&t, 2), Err(Error::Index { .. })));
        let m = Matrix::zeros(3, 3);
        assert!(matches!(fold(&m, 0, &[2, 3]), Err(Error::Shape(_))));
        assert!(matches!(mode_product(&t, &m, 0), Err(Error::Shape(_))));
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn identity_mode_product_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, &[3, 4, 5]);
        for (m, &d) in t.shape().iter().enumerate() {
            assert_eq!(mode_product(&t, &Matrix::identity(d), m).unwrap(), t);
        }
    }

    #[test]
    fn order2_mode0_product_is_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 4, 3);
        let t = random_tensor(&mut rng, &[3, 5]);
        let tm = unfold(&t, 0).unwrap();
        let expected = a.matmul(&tm).unwrap();
        let got = mode_product(&t, &a, 0).unwrap();
        assert_eq!(got.shape(), &[4, 5]);
        assert!(expected.max_abs_diff(&unfold(&got, 0).unwrap()) < 1e-14);
    }

    #[test]
    fn mode_products_on_distinct_modes_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_tensor(&mut rng, &[3, 4, 5]);
            let a = random_matrix(&mut rng, 2, 3);
            let b = random_matrix(&mut rng, 6, 4);
            let ab = mode_product(&mode_product(&t, &a, 0).unwrap(), &b, 1).unwrap();
            let ba = mode_product(&mode_product(&t, &b, 1).unwrap(), &a, 0).unwrap();
            assert!(rel_diff(&ab, &ba) <= 1e-12);
        }
    }

    #[test]
    fn mode_product_matches_unfolded_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = random_tensor(&mut rng, &[3, 4, 5]);
            for m in 0..3 {
                let a = random_matrix(&mut rng, 2, t.shape()[m]);
                let got = unfold(&mode_product(&t, &a, m).unwrap(), m).unwrap();
                let want = a.matmul(&unfold(&t, m).unwrap()).unwrap();
                let rel = got.max_abs_diff(&want) / want.frobenius_norm();
                assert!(rel <= 1e-12);
            }
        }
    }

    #[test]
    fn gram_matches_transpose_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_matrix(&mut rng, 7, 4);
        let g = b.gram();
        let want = b.transpose().matmul(&b).unwrap();
        assert!(g.max_abs_diff(&want) < 1e-13);
    }
}
