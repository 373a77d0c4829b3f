//! Row-major dense matrices.
//!
//! [`DenseMatrix`] owns its storage; [`DenseView`] is a borrowed window over a
//! contiguous range of rows, used to hand per-item slices of one stacked
//! matrix to the batch engine without copying.

use std::ops::{Index, IndexMut, Range};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix. Immutable after construction in normal use; the
/// mutating accessors exist for kernels that own their output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    /// Builds a matrix from a row-major buffer. The buffer length must equal
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::format(format!(
                "dense data length {} != rows {} x cols {}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Zero-filled `rows x cols` matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    /// Matrix with entries drawn uniformly from `[0, 1)`, deterministic for a
    /// fixed `(rows, cols, seed)`.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| T::sample_unit(&mut rng)).collect();
        Self { rows, cols, data }
    }

    /// Identity-like matrix: ones on the main diagonal of a square matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::from_f64(1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Working precision of the element type.
    pub fn precision(&self) -> crate::scalar::Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn view(&self) -> DenseView<'_, T> {
        DenseView {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }

    /// Borrowed window over rows `range`. No elements are copied: the view
    /// aliases this matrix's buffer.
    pub fn row_view(&self, range: Range<usize>) -> DenseView<'_, T> {
        assert!(range.end <= self.rows, "row range out of bounds");
        DenseView {
            rows: range.len(),
            cols: self.cols,
            data: &self.data[range.start * self.cols..range.end * self.cols],
        }
    }

    /// Stacks matrices with a shared column count on top of each other.
    pub fn stack_rows(parts: &[&DenseMatrix<T>]) -> Result<Self> {
        let cols = parts.first().map(|m| m.cols).unwrap_or(0);
        if parts.iter().any(|m| m.cols != cols) {
            return Err(Error::shape("stack_rows requires a uniform column count"));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Self { rows, cols, data })
    }

    /// Element-wise sum. Shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// In-place element-wise accumulation. Shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(format!(
                "add_assign: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `bias` (length = cols) to every row.
    pub fn add_bias(&self, bias: &[T]) -> Result<Self> {
        if bias.len() != self.cols {
            return Err(Error::shape(format!(
                "bias length {} != cols {}",
                bias.len(),
                self.cols
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            for (x, &b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * rhs`, accumulating in `T`. This is the working-precision
    /// product used by the graph-convolution layer, not the oracle.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.view().matmul(rhs)
    }

    /// `self^T * rhs`, accumulating in `T`.
    pub fn tr_matmul(&self, rhs: &Self) -> Result<Self> {
        self.view().tr_matmul(rhs)
    }

    /// `self * rhs^T`, accumulating in `T`.
    pub fn matmul_tr(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::shape(format!(
                "matmul_tr: {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            for j in 0..rhs.rows {
                let mut acc = T::default();
                for (&a, &b) in self.row(i).iter().zip(rhs.row(j)) {
                    acc += a * b;
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        Ok(out)
    }

    /// Sum of every entry per column.
    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::default(); self.cols];
        for r in 0..self.rows {
            for (s, &x) in sums.iter_mut().zip(self.row(r)) {
                *s += x;
            }
        }
        sums
    }
}

impl<T: Scalar> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Borrowed row-major window over a [`DenseMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct DenseView<'a, T: Scalar> {
    rows: usize,
    cols: usize,
    data: &'a [T],
}

impl<'a, T: Scalar> DenseView<'a, T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &'a [T] {
        self.data
    }

    pub fn row(&self, r: usize) -> &'a [T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_owned_matrix(&self) -> DenseMatrix<T> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.to_vec(),
        }
    }

    /// Working-precision product against an owned right-hand side.
    pub fn matmul(&self, rhs: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "matmul: {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (d, &b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs`, accumulating in `T`.
    pub fn tr_matmul(&self, rhs: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != rhs.rows() {
            return Err(Error::shape(format!(
                "tr_matmul: {}x{} vs {}x{}",
                self.rows,
                self.cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols());
        for k in 0..self.rows {
            for (i, &a) in self.row(k).iter().enumerate() {
                let dst = &mut out.data[i * rhs.cols()..(i + 1) * rhs.cols()];
                for (d, &b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Largest symmetric relative error over all entries: `|x - y| / max(|x|, |y|)`,
/// zero when both entries are equal (including both zero).
pub fn max_rel_error<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> f64 {
    assert_eq!(a.rows, b.rows, "max_rel_error: row mismatch");
    assert_eq!(a.cols, b.cols, "max_rel_error: col mismatch");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            if x == y {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// True when every entry has an identical bit pattern.
pub fn bitwise_eq<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> bool {
    a.rows == b.rows
        && a.cols == b.cols
        && a.data
            .iter()
            .zip(&b.data)
            .all(|(&x, &y)| x.bits() == y.bits())
}
