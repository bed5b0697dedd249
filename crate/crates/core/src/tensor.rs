//! Dense row-major tensors (rank 1 treated as a single row) and the
//! elementwise / matrix operations every layer is built from.
//!
//! Reductions run in a fixed left-to-right order so repeated runs with the
//! same seed are bit-identical.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense numeric array with shape `(rows, cols)`, row-major storage.
///
/// Values are immutable by convention once a tensor leaves the layer that
/// produced it; gradients are separate tensors of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar = f64> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, panicking on a shape/data length mismatch.
    /// In debug builds non-finite values are rejected as well.
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value in {rows}x{cols} tensor"
        );
        Self { rows, cols, data }
    }

    /// Checked construction: rejects shape mismatches and non-finite values
    /// regardless of build profile.
    pub fn checked(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "tensor data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite value at flat index {idx} in {rows}x{cols} tensor"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![F::zero(); rows * cols])
    }

    pub fn full(rows: usize, cols: usize, value: F) -> Self {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Single row vector `1 x n`.
    pub fn row(values: &[F]) -> Self {
        Self::new(1, values.len(), values.to_vec())
    }

    /// `1 x 1` tensor.
    pub fn scalar(value: F) -> Self {
        Self::new(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
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

    fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: F) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row_slice(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// First element; convenient for `1 x 1` outputs.
    pub fn first(&self) -> F {
        self.data[0]
    }

    pub fn fill(&mut self, value: F) {
        for v in &mut self.data {
            *v = value;
        }
    }

    /// Matrix product `self (n x k) * rhs (k x m)`.
    ///
    /// The inner sum runs left-to-right over `k` so the result is
    /// reproducible bit for bit.
    pub fn matmul(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape_str(),
                right: rhs.shape_str(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![F::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let mut acc = F::zero();
                for t in 0..k {
                    acc += self.data[i * k + t] * rhs.data[t * m + j];
                }
                out[i * m + j] = acc;
            }
        }
        Ok(Tensor::new(n, m, out))
    }

    pub fn transpose(&self) -> Tensor<F> {
        let mut out = vec![F::zero(); self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor::new(self.cols, self.rows, out)
    }

    fn zip_with(&self, rhs: &Tensor<F>, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape_str(),
                right: rhs.shape_str(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::new(self.rows, self.cols, data))
    }

    pub fn add(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    /// In-place accumulation, used for gradient sums.
    pub fn add_assign(&mut self, rhs: &Tensor<F>) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op: "add_assign",
                left: self.shape_str(),
                right: rhs.shape_str(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, k: F) -> Tensor<F> {
        self.map(|v| v * k)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Sum of all elements, left to right.
    pub fn sum(&self) -> F {
        let mut acc = F::zero();
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    /// Elementwise product summed up; shapes must agree.
    pub fn dot(&self, rhs: &Tensor<F>) -> Result<F> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                op: "dot",
                left: self.shape_str(),
                right: rhs.shape_str(),
            });
        }
        let mut acc = F::zero();
        for (&a, &b) in self.data.iter().zip(&rhs.data) {
            acc += a * b;
        }
        Ok(acc)
    }

    /// Elementwise `max(0, x)`.
    pub fn relu(&self) -> Tensor<F> {
        self.map(|v| if v > F::zero() { v } else { F::zero() })
    }

    /// Horizontal concatenation: all operands share the row count.
    pub fn hstack(parts: &[&Tensor<F>]) -> Result<Tensor<F>> {
        let rows = parts.first().map(|t| t.rows).unwrap_or(0);
        if parts.iter().any(|t| t.rows != rows) {
            return Err(Error::ShapeMismatch {
                op: "hstack",
                left: format!("{rows} rows"),
                right: "mixed row counts".to_string(),
            });
        }
        let cols: usize = parts.iter().map(|t| t.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for part in parts {
                out.row_slice_mut(r)[offset..offset + part.cols].copy_from_slice(part.row_slice(r));
                offset += part.cols;
            }
        }
        Ok(out)
    }

    /// Splits columns into consecutive blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor<F>>> {
        let total: usize = widths.iter().sum();
        if total != self.cols {
            return Err(Error::ShapeMismatch {
                op: "split_cols",
                left: self.shape_str(),
                right: format!("widths summing to {total}"),
            });
        }
        let mut parts = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for &w in widths {
            let mut part = Tensor::zeros(self.rows, w);
            for r in 0..self.rows {
                part.row_slice_mut(r).copy_from_slice(&self.row_slice(r)[offset..offset + w]);
            }
            offset += w;
            parts.push(part);
        }
        Ok(parts)
    }

    /// Copy of the column block `[start, start + width)`.
    pub fn col_block(&self, start: usize, width: usize) -> Tensor<F> {
        let mut out = Tensor::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_slice_mut(r).copy_from_slice(&self.row_slice(r)[start..start + width]);
        }
        out
    }

    /// Adds `block` into the column block starting at `start`.
    pub fn add_col_block(&mut self, start: usize, block: &Tensor<F>) {
        assert_eq!(self.rows, block.rows);
        for r in 0..self.rows {
            let dst = &mut self.row_slice_mut(r)[start..start + block.cols];
            for (d, &s) in dst.iter_mut().zip(block.row_slice(r)) {
                *d += s;
            }
        }
    }
}

/// Numerically stable logistic function, strictly inside `(0, 1)`.
///
/// Branches on the sign so neither exponential overflows; the result is
/// clamped away from exactly 0 and 1 so downstream log terms stay finite.
pub fn sigmoid<F: Scalar>(x: F) -> F {
    let one = F::one();
    let y = if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    y.max(F::min_positive_value()).min(one - F::epsilon())
}
