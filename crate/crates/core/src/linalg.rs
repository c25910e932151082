//! Dense complex matrices and the handful of kernels the simulator needs:
//! conjugate transpose, products, Kronecker products and an LU solver with a
//! condition-number guard.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Condition numbers above this make [`solve`] fail instead of answering.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Row-major dense complex matrix. Column vectors are `n × 1` matrices.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn column(entries: Vec<Complex64>) -> Self {
        let rows = entries.len();
        Self { rows, cols: 1, data: entries }
    }

    pub fn row(entries: Vec<Complex64>) -> Self {
        let cols = entries.len();
        Self { rows: 1, cols, data: entries }
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row_slice(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> ComplexMatrix {
        Self::column((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `self^H · other` for two column vectors of equal length.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.cols != 1 || other.cols != 1 || self.rows != other.rows {
            return Err(Error::Shape(format!(
                "inner product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in self.row_slice(i) {
                write!(f, "{:+.4}{:+.4}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn hermitian(a: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.cols, a.rows, |i, j| a[(j, i)].conj())
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == ZERO {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row_slice(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (br, bc) = b.shape();
    ComplexMatrix::from_fn(a.rows * br, a.cols * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// LU factorisation with partial pivoting, `P·A = L·U` packed in one matrix.
struct Lu {
    n: usize,
    packed: Vec<Complex64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &ComplexMatrix) -> Option<Self> {
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / d;
                lu[i * n + k] = factor;
                for j in k + 1..n {
                    let ukj = lu[k * n + j];
                    lu[i * n + j] -= factor * ukj;
                }
            }
        }
        Some(Self { n, packed: lu, perm })
    }

    fn solve_column(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = self.packed[i * n + k];
                y[i] = y[i] - l * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.packed[i * n + k];
                y[i] = y[i] - u * y[k];
            }
            y[i] /= self.packed[i * n + i];
        }
        y
    }

    fn solve(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let mut x = ComplexMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col: Vec<Complex64> = (0..b.rows).map(|i| b[(i, j)]).collect();
            for (i, v) in self.solve_column(&col).into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        x
    }

    fn inverse(&self) -> ComplexMatrix {
        self.solve(&ComplexMatrix::identity(self.n))
    }
}

/// 1-norm condition number `‖A‖₁·‖A⁻¹‖₁`; infinite when `a` is singular.
pub fn condition_estimate(a: &ComplexMatrix) -> f64 {
    match Lu::factor(a) {
        Some(lu) => a.norm_1() * lu.inverse().norm_1(),
        None => f64::INFINITY,
    }
}

/// Solves `a·x = b` with the default condition cap.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    solve_with_cap(a, b, DEFAULT_CONDITION_CAP)
}

pub fn solve_with_cap(a: &ComplexMatrix, b: &ComplexMatrix, condition_cap: f64) -> Result<ComplexMatrix> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!("solve needs a square matrix, got {}x{}", a.rows, a.cols)));
    }
    if b.rows != a.rows {
        return Err(Error::Shape(format!(
            "right-hand side has {} rows, system has {}",
            b.rows, a.rows
        )));
    }
    let lu = Lu::factor(a).ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = a.norm_1() * lu.inverse().norm_1();
    if !condition.is_finite() || condition > condition_cap {
        return Err(Error::Singular { condition });
    }
    let mut x = lu.solve(b);
    // one round of iterative refinement
    let residual = b.sub(&matmul(a, &x)?)?;
    let correction = lu.solve(&residual);
    x = x.add(&correction)?;
    Ok(x)
}
