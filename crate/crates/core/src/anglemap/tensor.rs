//! Dense row-major `f64` matrix used by the transformer.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec: {rows}x{cols} needs {} values", rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Uniform in `[−1/√fan_in, 1/√fan_in]`.
    pub fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul {:?} x {:?}", self.shape(), other.shape());
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul {:?} x {:?}", self.shape(), other.shape());
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t {:?} x {:?}", self.shape(), other.shape());
        Mat::from_fn(self.rows, other.rows, |i, j| self.row(i).iter().zip(other.row(j)).map(|(a, b)| a * b).sum())
    }

    /// Accumulates `selfᵀ · other` into `acc`.
    pub fn t_matmul_into(&self, other: &Mat, acc: &mut Mat) {
        assert_eq!((acc.rows, acc.cols), (self.cols, other.cols));
        for k in 0..self.rows {
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut acc.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "add {:?} + {:?}", self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// Adds the `1 × cols` row `bias` to every row.
    pub fn add_row(&self, bias: &Mat) -> Mat {
        assert_eq!((1, self.cols), bias.shape());
        let mut out = self.clone();
        for i in 0..self.rows {
            for (o, b) in out.row_mut(i).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        out
    }

    /// Accumulates column sums into the `1 × cols` row `acc`.
    pub fn col_sums_into(&self, acc: &mut Mat) {
        assert_eq!((1, self.cols), acc.shape());
        for i in 0..self.rows {
            for (a, v) in acc.data.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
    }

    /// Concatenates along columns.
    pub fn hcat(parts: &[Mat]) -> Mat {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for p in parts {
                assert_eq!(p.rows, rows);
                out.row_mut(i)[offset..offset + p.cols].copy_from_slice(p.row(i));
                offset += p.cols;
            }
        }
        out
    }

    /// Columns `[start, start + width)`.
    pub fn col_block(&self, start: usize, width: usize) -> Mat {
        Mat::from_fn(self.rows, width, |i, j| self[(i, start + j)])
    }

    /// Rows `[start, start + count)`.
    pub fn row_block(&self, start: usize, count: usize) -> Mat {
        Mat::from_vec(count, self.cols, self.data[start * self.cols..(start + count) * self.cols].to_vec())
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mat::uniform(3, 4, 1, &mut rng);
        let b = Mat::uniform(4, 5, 1, &mut rng);
        let c = Mat::uniform(3, 5, 1, &mut rng);
        assert!(a.matmul(&b).max_abs_diff(&naive(&a, &b)) < 1e-14);
        assert!(a.t_matmul(&c).max_abs_diff(&naive(&a.transpose(), &c)) < 1e-14);
        assert!(c.matmul_t(&b).max_abs_diff(&naive(&c, &b.transpose())) < 1e-14);
        let mut acc = Mat::zeros(4, 5);
        a.t_matmul_into(&c, &mut acc);
        assert!(acc.max_abs_diff(&a.t_matmul(&c)) < 1e-15);
    }

    #[test]
    fn blocks_and_concatenation() {
        let a = Mat::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let b = Mat::from_fn(2, 1, |i, _| 10.0 + i as f64);
        let h = Mat::hcat(&[a.clone(), b.clone()]);
        assert_eq!(h.shape(), (2, 4));
        assert_eq!(h.col_block(0, 3), a);
        assert_eq!(h.col_block(3, 1), b);
        assert_eq!(a.row_block(1, 1).as_slice(), &[3.0, 4.0, 5.0]);
        let mut sums = Mat::zeros(1, 3);
        a.col_sums_into(&mut sums);
        assert_eq!(sums.as_slice(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn uniform_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mat::uniform(20, 20, 16, &mut rng);
        assert!(m.as_slice().iter().all(|v| v.abs() <= 0.25));
    }
}
