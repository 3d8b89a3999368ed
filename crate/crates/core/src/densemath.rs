//! Dense vector/matrix arithmetic in f64, row-major storage.
//!
//! Everything downstream (the model, adapters, the similarity tree) builds on
//! these types. Constructors validate finiteness so the rest of the crate can
//! assume every entry is a finite f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector entry {i} is {v}")));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        saxpy(1.0, other, self)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        saxpy(-1.0, other, self)
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        Vector { data: self.data.iter().map(|v| alpha * v).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({},{}) is {v}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matrix {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// y = M * x.
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if self.cols != x.len() {
            return Err(Error::Shape(format!(
                "matvec: {}x{} with vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.as_slice()) {
                acc += a * b;
            }
            *o = acc;
        }
        Ok(Vector { data: out })
    }

    /// Outer product u * v^T.
    pub fn outer(u: &Vector, v: &Vector) -> Matrix {
        Matrix::from_fn(u.len(), v.len(), |r, c| u.get(r) * v.get(c))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul: {}x{} with {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let av = a.get(r, k);
            if av == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Sum of absolute values.
pub fn l1_norm(v: &Vector) -> f64 {
    v.data.iter().map(|x| x.abs()).sum()
}

/// L1 distance between two equal-length vectors.
pub fn l1_distance(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "l1_distance: lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum())
}

/// Returns y + alpha * x.
pub fn saxpy(alpha: f64, x: &Vector, y: &Vector) -> Result<Vector> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite(format!("saxpy alpha is {alpha}")));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "saxpy: lengths {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(Vector {
        data: y.data.iter().zip(&x.data).map(|(yi, xi)| yi + alpha * xi).collect(),
    })
}

/// Thin SVD m = U * diag(sigma) * V^T via one-sided Jacobi rotations.
///
/// Returns (u, sigma, v) with sigma sorted descending, u of shape
/// rows x k and v of shape cols x k where k = min(rows, cols). Intended for
/// the small dense blocks this crate works with; converges quadratically.
pub fn jacobi_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    if m.rows < m.cols {
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let rows = m.rows;
    let cols = m.cols;
    // Work on columns of a copy; accumulate right rotations into v.
    let mut w = m.clone();
    let mut v = Matrix::identity(cols);
    let eps = 1e-14;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..rows {
                    let wp = w.get(r, p);
                    let wq = w.get(r, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let wp = w.get(r, p);
                    let wq = w.get(r, q);
                    w.set(r, p, c * wp - s * wq);
                    w.set(r, q, s * wp + c * wq);
                }
                for r in 0..cols {
                    let vp = v.get(r, p);
                    let vq = v.get(r, q);
                    v.set(r, p, c * vp - s * vq);
                    v.set(r, q, s * vp + c * vq);
                }
            }
        }
        if off < eps {
            break;
        }
    }
    // Column norms are the singular values; normalize columns into U.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| w.get(r, c).powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    let mut u = Matrix::zeros(rows, cols);
    let mut sigma = vec![0.0; cols];
    let mut vs = Matrix::zeros(cols, cols);
    for (slot, &c) in order.iter().enumerate() {
        sigma[slot] = norms[c];
        let inv = if norms[c] > 0.0 { 1.0 / norms[c] } else { 0.0 };
        for r in 0..rows {
            u.set(r, slot, w.get(r, c) * inv);
        }
        for r in 0..cols {
            vs.set(r, slot, v.get(r, c));
        }
    }
    (u, sigma, vs)
}

/// Best rank-r approximation of m in Frobenius norm, returned as the factor
/// pair (left: rows x r, right: r x cols) with left = U_r diag(sigma_r) and
/// right = V_r^T.
pub fn rank_truncation(m: &Matrix, r: usize) -> (Matrix, Matrix) {
    let (u, sigma, v) = jacobi_svd(m);
    let k = r.min(sigma.len());
    let left = Matrix::from_fn(m.rows(), r, |row, c| {
        if c < k {
            u.get(row, c) * sigma[c]
        } else {
            0.0
        }
    });
    let right = Matrix::from_fn(r, m.cols(), |row, c| if row < k { v.get(c, row) } else { 0.0 });
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec_of(data: &[f64]) -> Vector {
        Vector::new(data.to_vec()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 3, 4);
        let out = matmul(&Matrix::identity(3), &m).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn matmul_zero_left_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 3, 4);
        let out = matmul(&Matrix::zeros(2, 3), &m).unwrap();
        assert_eq!(out, Matrix::zeros(2, 4));
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let out = matmul(&a, &b).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_dimension_mismatch_is_shape_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        assert!(matches!(matmul(&a, &b), Err(crate::error::Error::Shape(_))));
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Matrix::new(1, 2, vec![0.0, f64::NEG_INFINITY]).is_err());
        assert!(saxpy(f64::NAN, &Vector::zeros(1), &Vector::zeros(1)).is_err());
    }

    #[test]
    fn l1_norm_cases() {
        assert_eq!(l1_norm(&Vector::zeros(3)), 0.0);
        assert_eq!(l1_norm(&vec_of(&[1.0, -2.0, 3.0])), 6.0);
        let v = vec_of(&[0.5, -1.5, 2.5]);
        assert_eq!(l1_norm(&v), l1_norm(&v.scale(-1.0)));
    }

    #[test]
    fn saxpy_cases() {
        let x = vec_of(&[1.0, 1.0]);
        let y = vec_of(&[1.0, 1.0]);
        assert_eq!(saxpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(saxpy(1.0, &x, &y).unwrap().as_slice(), &[2.0, 2.0]);
        assert_eq!(saxpy(-1.0, &x, &x).unwrap(), Vector::zeros(2));
        assert!(saxpy(1.0, &Vector::zeros(3), &Vector::zeros(2)).is_err());
    }

    #[test]
    fn jacobi_svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(rows, cols) in &[(5, 3), (3, 5), (6, 6), (4, 1)] {
            let m = random_matrix(&mut rng, rows, cols);
            let (u, s, v) = jacobi_svd(&m);
            let k = rows.min(cols);
            let recon = Matrix::from_fn(rows, cols, |r, c| {
                (0..k).map(|i| u.get(r, i) * s[i] * v.get(c, i)).sum()
            });
            let err = recon.sub(&m).unwrap().frobenius_norm();
            assert!(err < 1e-10, "reconstruction error {err} for {rows}x{cols}");
            for i in 1..k {
                assert!(s[i - 1] >= s[i] - 1e-12, "singular values not sorted");
            }
        }
    }

    #[test]
    fn jacobi_svd_matches_nalgebra_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_matrix(&mut rng, 8, 5);
        let (_, ours, _) = jacobi_svd(&m);
        let nm = nalgebra::DMatrix::from_fn(8, 5, |r, c| m.get(r, c));
        let mut theirs: Vec<f64> = nm.svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn matmul_associative(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 3, 4);
            let b = random_matrix(&mut rng, 4, 2);
            let c = random_matrix(&mut rng, 2, 5);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.frobenius_norm().max(1.0);
            let err = left.sub(&right).unwrap().frobenius_norm() / scale;
            prop_assert!(err < 1e-9);
        }

        #[test]
        fn l1_triangle_inequality(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Vector::new((0..16).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
            let b = Vector::new((0..16).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
            let sum = a.add(&b).unwrap();
            prop_assert!(l1_norm(&sum) <= l1_norm(&a) + l1_norm(&b) + 1e-12);
        }
    }
}
